import pytest

from citetracer.bench import SYNTH_CODES, load_seeds, plant_replay_fixtures, synthesize
from citetracer.cascade import Cascade, FixtureStore, FixtureTransport


@pytest.fixture(scope="session")
def seeds():
    return load_seeds()


@pytest.fixture(scope="session")
def seed_by_key(seeds):
    return {s.key: s for s in seeds}


@pytest.fixture(scope="session")
def bench110(seeds):
    # 10 entries per synthesizable code, fixed rng
    return synthesize(seeds, {c.value: 10 for c in SYNTH_CODES}, rng_seed=7)


@pytest.fixture(scope="session")
def replay_root(tmp_path_factory, seeds, bench110):
    root = tmp_path_factory.mktemp("fixtures")
    records = [e.record for e in bench110.entries] + [s.record for s in seeds]
    plant_replay_fixtures(records, seeds, root)
    return root


@pytest.fixture
def replay_cascade(replay_root):
    return Cascade(FixtureTransport(FixtureStore(replay_root), "replay"))


# -- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[str, str] = {}


class Criterion:
    def __init__(self, name):
        self.name = name
        self.lines: list[str] = []

    def log(self, msg):
        self.lines.append(msg)

    def check(self, ok, detail):
        _CRITERIA[self.name] = f"{'PASS' if ok else 'FAIL'} {self.name}: {detail}"
        for line in self.lines:
            print(f"    {line}")
        assert ok, detail


@pytest.fixture
def criterion(request):
    c = Criterion(request.node.function.__doc__.strip().splitlines()[0])
    yield c
    _CRITERIA.setdefault(c.name, f"FAIL {c.name}: test raised before reaching its check")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in _CRITERIA.values():
        terminalreporter.write_line(line)
