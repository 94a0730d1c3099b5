import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftbench.core import new_rng
from driftbench.detect import (
    Confusion,
    DetectorConfig,
    DimensionMismatchError,
    SimilarityPair,
    ZeroNormError,
    cosine,
    min_rule_classify,
    parse_grid,
    sweep_thresholds,
)


def _mp_cosine(a, b):
    with mpmath.workdps(50):
        a = [mpmath.mpf(float(x)) for x in a]
        b = [mpmath.mpf(float(x)) for x in b]
        dot = mpmath.fsum(x * y for x, y in zip(a, b))
        na = mpmath.sqrt(mpmath.fsum(x * x for x in a))
        nb = mpmath.sqrt(mpmath.fsum(y * y for y in b))
        return float(dot / (na * nb))


@pytest.mark.parametrize("d", [3, 52, 300])
def test_cosine_matches_extended_precision(d):
    rng = new_rng(d)
    for _ in range(50):
        a, b = rng.standard_normal(d), rng.standard_normal(d)
        assert cosine(a, b) == pytest.approx(_mp_cosine(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=12),
       st.floats(0.01, 100.0))
def test_cosine_properties(v, scale):
    a = np.array(v)
    if np.linalg.norm(a) < 1e-6:
        return
    b = a[::-1].copy()
    if np.linalg.norm(b) < 1e-6:
        return
    c = cosine(a, b)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine(b, a), abs=1e-12)
    assert cosine(a, a) == pytest.approx(1.0, abs=1e-12)
    assert cosine(a * scale, b) == pytest.approx(c, abs=1e-9)


def test_cosine_errors():
    with pytest.raises(DimensionMismatchError):
        cosine([1, 0], [1, 0, 0])
    with pytest.raises(ZeroNormError):
        cosine([0, 0], [1, 0])


def test_min_rule_is_strict():
    cfg = DetectorConfig(0.9)
    assert min_rule_classify(SimilarityPair(0.9, 0.95), cfg) == 0
    assert min_rule_classify(SimilarityPair(0.95, 0.8999), cfg) == 1
    assert min_rule_classify(SimilarityPair(0.5, 0.99), cfg) == 1


def test_confusion_metrics_hand_counts():
    c = Confusion.of([1, 1, 1, 0, 0, 0, 0], [1, 1, 0, 1, 0, 0, 0])
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 3, 1)
    assert c.accuracy == pytest.approx(5 / 7)
    assert c.precision == pytest.approx(2 / 3)
    assert c.recall == pytest.approx(2 / 3)
    assert c.f1 == pytest.approx(2 / 3)
    assert Confusion.of([1, 0], [0, 0]).f1 == 0.0


def test_grid_parsing():
    g = parse_grid("0.80:0.999:0.001")
    assert len(g) == 200 and g[0] == 0.8 and g[-1] == pytest.approx(0.999)
    assert parse_grid("0.5,0.9") == [0.5, 0.9]
    with pytest.raises(ValueError):
        parse_grid("0.9:0.8:0.01")


def test_sweep_matches_bruteforce_and_breaks_ties_low():
    rng = new_rng(3)
    pairs = [(SimilarityPair(*rng.uniform(0.7, 1.0, 2), sample_id=str(i)), int(i % 2)) for i in range(60)]
    taus = parse_grid("0.70:1.00:0.01")
    res = sweep_thresholds(pairs, taus)
    for row in res.rows:
        pred = [int(min(p.sim_12, p.sim_23) < row.tau) for p, _ in pairs]
        assert row.f1 == pytest.approx(Confusion.of([y for _, y in pairs], pred).f1)
    best = max(r.f1 for r in res.rows)
    assert res.best.f1 == best
    assert res.best.tau == min(r.tau for r in res.rows if r.f1 == best)
