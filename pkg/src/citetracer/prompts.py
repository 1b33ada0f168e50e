"""Prompt templates shipped as text assets under ``data/prompts``.

Each file holds a ``[System prompt]`` and a ``[User prompt]`` section.
Placeholders are ``{name}``; braces that are not a known placeholder are
left alone, so JSON examples inside the templates survive rendering.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

PLACEHOLDERS = {
    "parser": ("raw_text",),
    "matcher": (
        "citation_authors", "candidate_authors", "citation_venue", "candidate_venue",
        "citation_publisher", "candidate_publisher", "rule_statuses",
    ),
    "potential_judger": (
        "citation_title", "citation_authors", "citation_venue", "citation_year", "citation_location",
        "candidate_title", "candidate_authors", "candidate_venue", "candidate_year", "candidate_location",
        "issues", "valid_reason", "evidence_lines",
    ),
    "valid_judger": (
        "citation_title", "citation_authors", "citation_venue", "citation_year",
        "candidate_title", "candidate_authors", "candidate_venue", "candidate_year",
        "issues", "evidence_lines",
    ),
    "hallucinated_judger": (
        "citation_title", "citation_authors", "citation_venue", "citation_year", "citation_doi",
        "citation_arxiv_id", "candidate_title", "candidate_authors", "candidate_venue",
        "candidate_year", "candidate_doi", "candidate_arxiv_id", "issues", "evidence_lines",
    ),
    "mutation": ("operator", "instruction", "seed_json", "fields"),
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def render(self, **values: object) -> str:
        missing = set(PLACEHOLDERS[self.name]) - set(values)
        if missing:
            raise KeyError(f"missing placeholders for {self.name}: {sorted(missing)}")
        pattern = re.compile(r"\{(" + "|".join(PLACEHOLDERS[self.name]) + r")\}")
        return pattern.sub(lambda m: str(values[m.group(1)]), self.user)


@lru_cache(maxsize=None)
def load_prompt(name: str) -> PromptTemplate:
    text = resources.files("citetracer.data.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    system, _, user = text.partition("[User prompt]")
    system = system.replace("[System prompt]", "", 1).strip()
    return PromptTemplate(name, system, user.strip() + "\n")
