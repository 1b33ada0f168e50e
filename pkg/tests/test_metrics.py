import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from citetracer.metrics import BUCKETS, Counts, ScoreError, bucket_of, pct, score
from citetracer.model import TaxonomyCode

CODES = [c.value for c in TaxonomyCode]


def test_reference_counts():
    c = Counts(tp=965, fp=2, fn=58)
    assert (pct(c.precision), pct(c.recall), pct(c.f1)) == (99.8, 94.3, 97.0)


def test_half_up_rounding():
    assert pct(0.1235) == 12.4
    assert pct(0.0005) == 0.1
    assert pct(0.00049) == 0.0


def test_perfect_predictions():
    labels = {f"k{i}": c for i, c in enumerate(CODES * 3)}
    res = score(dict(labels), labels)
    for c in res.classes.values():
        assert pct(c.f1) == 100.0
    for i, row in enumerate(res.confusion):
        assert all(v == 0 for j, v in enumerate(row) if j != i)
    assert res.accuracy == 1.0


def test_all_hallucinated_baseline():
    labels = {}
    for i in range(300):
        labels[f"k{i}"] = ("R1", "P1", "H4")[i % 3]
    res = score({k: "H1" for k in labels}, labels)
    assert res.classes["Real"].recall == 0.0
    assert res.classes["Hallucinated"].precision == pytest.approx(1 / 3)
    assert res.buckets["H1"].fpr == 1.0
    assert res.buckets["H1"].support == 0


def brute(pairs, label_prefix):
    tp = sum(1 for t, p in pairs if t[0] == label_prefix and p[0] == label_prefix)
    fp = sum(1 for t, p in pairs if t[0] != label_prefix and p[0] == label_prefix)
    fn = sum(1 for t, p in pairs if t[0] == label_prefix and p[0] != label_prefix)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return prec, rec, (2 * prec * rec / (prec + rec) if prec + rec else 0.0)


def brute_bucket(pairs, b):
    def bk(c):
        return "R" if c.startswith("R") else c
    pos = [(t, p) for t, p in pairs if bk(t) == b]
    neg = [(t, p) for t, p in pairs if bk(t) != b]
    tpr = sum(1 for t, p in pos if bk(p) == b) / len(pos) if pos else 0.0
    fpr = sum(1 for t, p in neg if bk(p) == b) / len(neg) if neg else 0.0
    return tpr, fpr


def check_random(rng_seed):
    rng = random.Random(rng_seed)
    n = rng.randint(1, 60)
    pairs = [(rng.choice(CODES), rng.choice(CODES)) for _ in range(n)]
    labels = {f"k{i}": t for i, (t, _) in enumerate(pairs)}
    preds = {f"k{i}": p for i, (_, p) in enumerate(pairs)}
    res = score(preds, labels)
    for name, prefix in (("Real", "R"), ("Potential", "P"), ("Hallucinated", "H")):
        c = res.classes[name]
        assert (c.precision, c.recall, c.f1) == pytest.approx(brute(pairs, prefix))
    for b in BUCKETS:
        assert (res.buckets[b].tpr, res.buckets[b].fpr) == pytest.approx(brute_bucket(pairs, b))
    total = sum(map(sum, res.confusion)) + sum(res.unbucketed.values())
    assert total == sum(1 for t, _ in pairs if bucket_of(t) in BUCKETS)


def test_brute_force_1000():
    for s in range(1000):
        check_random(s)


@given(st.lists(st.tuples(st.sampled_from(CODES), st.sampled_from(CODES)), min_size=1, max_size=40))
def test_class_counts_partition(pairs):
    labels = {f"k{i}": t for i, (t, _) in enumerate(pairs)}
    preds = {f"k{i}": p for i, (_, p) in enumerate(pairs)}
    res = score(preds, labels)
    for c in res.classes.values():
        assert c.tp + c.fp + c.fn + c.tn == len(pairs)


def test_missing_keys_raise():
    with pytest.raises(ScoreError) as ei:
        score({"a": "R1"}, {"a": "R1", "b": "H4"})
    assert ei.value.missing == ["b"]


def test_extra_keys_strict():
    assert score({"a": "R1", "z": "H1"}, {"a": "R1"}).extra_keys == ["z"]
    with pytest.raises(ScoreError) as ei:
        score({"a": "R1", "z": "H1"}, {"a": "R1"}, strict=True)
    assert ei.value.extra == ["z"]


def test_p2_prediction_unbucketed():
    res = score({"a": "P2"}, {"a": "R1"})
    assert res.unbucketed == {"P2": 1}
    assert res.classes["Potential"].fp == 1
