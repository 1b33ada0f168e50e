"""Run configuration read from a TOML file.

Secrets never live in the file: connector API keys come from
``CITETRACER_<CONNECTOR>_API_KEY`` and the backend key from the variable
named by ``backend.api_key_env``.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cascade.transport import MODES, RatePolicy
from .model import CONNECTOR_IDS


class ConfigError(ValueError):
    pass


@dataclass
class BackendConfig:
    endpoint: str = ""
    model: str = ""
    timeout: float = 60.0
    api_key_env: str = "CITETRACER_BACKEND_API_KEY"

    @property
    def enabled(self) -> bool:
        return bool(self.endpoint)


@dataclass
class Config:
    connectors: tuple[str, ...] = CONNECTOR_IDS
    rates: dict[str, float] = field(default_factory=dict)
    rate: float = 1.0
    retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 32.0
    timeout: float = 30.0
    papers: int = 16
    citations: int = 16
    fanout: int = 10
    cache_path: str | None = None
    fixture_mode: str = "live"
    fixture_root: str | None = None
    web_endpoint: str = ""
    backend: BackendConfig = field(default_factory=BackendConfig)
    timings: bool = False
    venue_tables: tuple[str, ...] = ()
    publisher_tables: tuple[str, ...] = ()
    nickname_tables: tuple[str, ...] = ()

    def validate(self) -> "Config":
        unknown = set(self.connectors) - set(CONNECTOR_IDS)
        if unknown:
            raise ConfigError(f"unknown connectors: {sorted(unknown)}")
        bad_rates = set(self.rates) - set(CONNECTOR_IDS) - {"doi", "url", "web"}
        if bad_rates:
            raise ConfigError(f"rates for unknown connectors: {sorted(bad_rates)}")
        for name in ("papers", "citations", "fanout"):
            if getattr(self, name) < 1:
                raise ConfigError(f"concurrency.{name} must be >= 1")
        if self.fixture_mode not in MODES:
            raise ConfigError(f"fixtures.mode must be one of {MODES}")
        if self.fixture_mode != "live" and not self.fixture_root:
            raise ConfigError("fixtures.root is required in record/replay mode")
        if self.retries < 0 or self.rate < 0:
            raise ConfigError("retry.retries and connectors.rate must be non-negative")
        return self

    def rate_policies(self) -> tuple[dict[str, RatePolicy], RatePolicy]:
        default = RatePolicy(self.rate, self.retries, self.backoff_base, self.backoff_cap, self.timeout)
        per = {k: RatePolicy(v, self.retries, self.backoff_base, self.backoff_cap, self.timeout) for k, v in self.rates.items()}
        return per, default

    def api_keys(self) -> dict[str, str]:
        out = {}
        for cid in CONNECTOR_IDS:
            value = os.environ.get(f"CITETRACER_{cid.upper()}_API_KEY")
            if value:
                out[cid] = value
        return out

    def digest(self) -> str:
        """Stable hash of the settings that can change verdicts (no secrets, no paths)."""
        data = asdict(self)
        for k in ("cache_path", "fixture_root", "papers", "citations", "timings"):
            data.pop(k, None)
        data["backend"].pop("api_key_env", None)
        payload = json.dumps(data, sort_keys=True, default=list)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


KNOWN = {
    "connectors": {"enabled", "rate", "rates"},
    "retry": {"retries", "backoff_base", "backoff_cap", "timeout"},
    "concurrency": {"papers", "citations", "fanout"},
    "cache": {"path"},
    "fixtures": {"mode", "root"},
    "web": {"endpoint"},
    "backend": {"endpoint", "model", "timeout", "api_key_env"},
    "report": {"timings"},
    "tables": {"venues", "publishers", "nicknames"},
}


def from_mapping(data: Mapping[str, Any], base_dir: Path | None = None) -> Config:
    for section, value in data.items():
        if section not in KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(value, Mapping):
            raise ConfigError(f"[{section}] must be a table")
        extra = set(value) - KNOWN[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")

    def path(p):
        if p is None:
            return None
        p = Path(p).expanduser()
        return str(p if p.is_absolute() or base_dir is None else base_dir / p)

    cfg = Config()
    conn = data.get("connectors", {})
    try:
        if "enabled" in conn:
            cfg.connectors = tuple(conn["enabled"])
        cfg.rate = float(conn.get("rate", cfg.rate))
        cfg.rates = {k: float(v) for k, v in conn.get("rates", {}).items()}
        retry = data.get("retry", {})
        cfg.retries = int(retry.get("retries", cfg.retries))
        cfg.backoff_base = float(retry.get("backoff_base", cfg.backoff_base))
        cfg.backoff_cap = float(retry.get("backoff_cap", cfg.backoff_cap))
        cfg.timeout = float(retry.get("timeout", cfg.timeout))
        conc = data.get("concurrency", {})
        cfg.papers = int(conc.get("papers", cfg.papers))
        cfg.citations = int(conc.get("citations", cfg.citations))
        cfg.fanout = int(conc.get("fanout", cfg.fanout))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    cfg.cache_path = path(data.get("cache", {}).get("path"))
    fx = data.get("fixtures", {})
    cfg.fixture_mode = fx.get("mode", cfg.fixture_mode)
    cfg.fixture_root = path(fx.get("root"))
    cfg.web_endpoint = data.get("web", {}).get("endpoint", "")
    b = data.get("backend", {})
    cfg.backend = BackendConfig(b.get("endpoint", ""), b.get("model", ""), float(b.get("timeout", 60.0)), b.get("api_key_env", BackendConfig.api_key_env))
    cfg.timings = bool(data.get("report", {}).get("timings", False))
    tables = data.get("tables", {})
    cfg.venue_tables = tuple(path(p) for p in tables.get("venues", ()))
    cfg.publisher_tables = tuple(path(p) for p in tables.get("publishers", ()))
    cfg.nickname_tables = tuple(path(p) for p in tables.get("nicknames", ()))
    return cfg.validate()


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config().validate()
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    return from_mapping(data, p.parent)
