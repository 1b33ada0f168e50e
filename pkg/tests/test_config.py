import pytest

from citetracer.config import Config, ConfigError, from_mapping, load_config


def write(tmp_path, text):
    p = tmp_path / "citetracer.toml"
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config(None)
    assert (cfg.papers, cfg.citations, cfg.fanout) == (16, 16, 10)
    assert cfg.fixture_mode == "live"
    assert not cfg.backend.enabled


def test_load_full(tmp_path):
    p = write(tmp_path, """
[connectors]
enabled = ["openalex", "crossref"]
rate = 2.5
rates = { crossref = 5 }

[retry]
retries = 2
backoff_cap = 8

[concurrency]
papers = 4
citations = 8

[cache]
path = "cache/mirror.jsonl"

[fixtures]
mode = "replay"
root = "fx"

[backend]
endpoint = "http://localhost:9/v1"
model = "m"
""")
    cfg = load_config(p)
    assert cfg.connectors == ("openalex", "crossref")
    assert cfg.rates == {"crossref": 5.0}
    assert cfg.retries == 2 and cfg.backoff_cap == 8
    assert cfg.cache_path == str(tmp_path / "cache/mirror.jsonl")
    assert cfg.fixture_root == str(tmp_path / "fx")
    assert cfg.backend.enabled
    per, default = cfg.rate_policies()
    assert per["crossref"].rate == 5.0 and default.rate == 2.5


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[cache]\nwhere = 'x'\n",
    "[connectors]\nenabled = ['nosuch']\n",
    "[concurrency]\npapers = 0\n",
    "[concurrency]\npapers = 'many'\n",
    "[fixtures]\nmode = 'replay'\n",
    "[fixtures]\nmode = 'sometimes'\nroot = 'x'\n",
    "not toml [",
])
def test_rejects(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_api_keys_from_env(monkeypatch):
    monkeypatch.setenv("CITETRACER_SEMANTICSCHOLAR_API_KEY", "secret")
    cfg = Config()
    keys = cfg.api_keys()
    assert keys == {"semanticscholar": "secret"}
    assert "secret" not in repr(cfg.digest())


def test_digest_ignores_paths_and_concurrency(tmp_path):
    a = from_mapping({"concurrency": {"papers": 1}, "cache": {"path": "/a"}})
    b = from_mapping({"concurrency": {"papers": 9}, "cache": {"path": "/b"}})
    assert a.digest() == b.digest()
    c = from_mapping({"connectors": {"enabled": ["crossref"]}})
    assert c.digest() != a.digest()
