"""Citation verification: classify each reference as Real, Potential or Hallucinated."""

from .model import (
    CONNECTOR_IDS,
    FIELDS,
    STAGES,
    CandidateRecord,
    CitationRecord,
    EvidenceBundle,
    Fact,
    Label,
    ResolvedBy,
    TaxonomyCode,
    Verdict,
    class_of,
)

__version__ = "0.1.0"

__all__ = [
    "CONNECTOR_IDS",
    "FIELDS",
    "STAGES",
    "CandidateRecord",
    "CitationRecord",
    "EvidenceBundle",
    "Fact",
    "Label",
    "ResolvedBy",
    "TaxonomyCode",
    "Verdict",
    "class_of",
    "__version__",
]
