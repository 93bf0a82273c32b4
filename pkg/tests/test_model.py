import math

import pytest
from hypothesis import given, strategies as st

from adaptcac.errors import InvalidAllocationError, ParameterError
from adaptcac.model import (
    SystemParams,
    TrafficClass,
    base_release_rate,
    degradation_factor,
    handover_probability,
    min_bandwidth_levels,
    reference_params,
)


def nrt(name="x", beta_r=56.0, gn=0.2, gh=0.5, mix=1.0, duration=120.0):
    return TrafficClass(name, False, beta_r, gn, gh, mix, duration)


def test_background_levels():
    lv = min_bandwidth_levels(nrt(beta_r=56, gn=0.5, gh=0.8))
    assert lv.beta_n == pytest.approx(28.0, abs=1e-12)
    assert lv.beta_h == pytest.approx(11.2, abs=1e-12)


def test_voice_levels_undegraded():
    lv = min_bandwidth_levels(TrafficClass("voice", True, 25.0, 0.0, 0.0, 1.0))
    assert (lv.beta_n, lv.beta_h) == (25.0, 25.0)


def test_streaming_levels():
    lv = min_bandwidth_levels(nrt(beta_r=128, gn=0.4, gh=0.6))
    assert lv.beta_n == pytest.approx(76.8, abs=1e-12)
    assert lv.beta_h == pytest.approx(51.2, abs=1e-12)


@pytest.mark.parametrize("beta_r, beta_a, expected", [
    (128, 128, 0.0),
    (56, 11.2, 0.8),
    (13, 9.1, 0.3),
])
def test_degradation_factor(beta_r, beta_a, expected):
    assert degradation_factor(beta_r, beta_a) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("beta_a", [0.0, -1.0, 57.0])
def test_degradation_factor_rejects_out_of_range(beta_a):
    with pytest.raises(InvalidAllocationError):
        degradation_factor(56.0, beta_a)


def test_handover_probability_values():
    assert handover_probability(240, 120) == pytest.approx(1 / 3, abs=1e-15)
    assert handover_probability(120, 120) == pytest.approx(0.5, abs=1e-15)
    assert handover_probability(240, 1e-12) < 1e-12


def test_handover_probability_rejects_nonpositive():
    with pytest.raises(ParameterError):
        handover_probability(0.0, 120.0)
    with pytest.raises(ParameterError):
        handover_probability(240.0, -1.0)


def test_handover_probability_no_mobility():
    assert handover_probability(math.inf, 120.0) == 0.0


def test_base_release_rate_reference():
    assert base_release_rate(reference_params()) == pytest.approx(0.0125, abs=1e-15)


def test_base_release_rate_no_mobility():
    p = SystemParams(100.0, (nrt(duration=80.0),), math.inf)
    assert base_release_rate(p) == pytest.approx(1 / 80, abs=1e-15)


def test_base_release_rate_weighted_duration():
    classes = (nrt("a", mix=0.5, duration=60.0), nrt("b", mix=0.5, duration=180.0))
    p = SystemParams(100.0, classes, 240.0)
    assert base_release_rate(p) == pytest.approx(1 / 240 + 1 / 120, abs=1e-15)


def test_reference_scenario_shape():
    p = reference_params()
    assert p.n_classes == 7 and p.q == 3
    assert math.fsum(c.mix for c in p.classes) == pytest.approx(1.0, abs=1e-12)
    assert p.mean_request() == pytest.approx(58.85, abs=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(gn=0.6, gh=0.5),
    dict(gh=1.0),
    dict(beta_r=0.0),
    dict(mix=1.5),
    dict(duration=0.0),
])
def test_class_validation(kwargs):
    with pytest.raises(ParameterError):
        nrt(**kwargs)


def test_realtime_class_cannot_degrade():
    with pytest.raises(ParameterError, match="real-time"):
        TrafficClass("voice", True, 25.0, 0.0, 0.5, 1.0)


def test_mix_must_sum_to_one():
    with pytest.raises(ParameterError, match="sum to 1"):
        SystemParams(100.0, (nrt("a", mix=0.5), nrt("b", mix=0.4)))


def test_realtime_classes_first():
    rt = TrafficClass("voice", True, 25.0, 0.0, 0.0, 0.5)
    with pytest.raises(ParameterError, match="come first"):
        SystemParams(100.0, (nrt(mix=0.5), rt))


def test_capacity_must_fit_widest_call():
    with pytest.raises(ParameterError, match="widest"):
        SystemParams(50.0, (nrt(),))
    SystemParams(56.0, (nrt(),))


def test_unique_names_and_dwell():
    with pytest.raises(ParameterError):
        SystemParams(100.0, (nrt("a", mix=0.5), nrt("a", mix=0.5)))
    with pytest.raises(ParameterError):
        SystemParams(100.0, (nrt(),), dwell_mean=0.0)


def test_all_violations_reported_together():
    with pytest.raises(ParameterError) as exc:
        SystemParams(10.0, (nrt("a", mix=0.5), nrt("a", mix=0.4)), dwell_mean=-1.0)
    msg = str(exc.value)
    for fragment in ("sum to 1", "widest", "dwell_mean", "unique"):
        assert fragment in msg


def test_with_gammas_keeps_realtime_at_zero():
    p = reference_params().with_gammas(gamma_n="h")
    for c in p.classes:
        assert c.gamma_n == c.gamma_h
        if c.realtime:
            assert c.gamma_h == 0.0
    zero = reference_params().with_gammas(gamma_n=0.0, gamma_h=0.0)
    assert all(c.gamma_n == c.gamma_h == 0.0 for c in zero.classes)


gammas = st.tuples(
    st.floats(0.0, 0.99, allow_nan=False), st.floats(0.0, 0.99, allow_nan=False)
).map(sorted)


@given(beta_r=st.floats(0.1, 1e5), g=gammas)
def test_levels_round_trip(beta_r, g):
    gn, gh = g
    c = nrt(beta_r=beta_r, gn=gn, gh=gh)
    lv = min_bandwidth_levels(c)
    assert lv.beta_h <= lv.beta_n <= c.beta_r
    if lv.beta_h > 0:
        assert degradation_factor(beta_r, lv.beta_h) == pytest.approx(gh, abs=1e-12)
    if lv.beta_n > 0:
        assert degradation_factor(beta_r, lv.beta_n) == pytest.approx(gn, abs=1e-12)


@given(d=st.floats(1.0, 1e4), t1=st.floats(1.0, 1e4), t2=st.floats(1.0, 1e4))
def test_handover_probability_monotone(d, t1, t2):
    lo, hi = sorted((t1, t2))
    assert handover_probability(d, lo) <= handover_probability(d, hi)
    assert handover_probability(lo, d) >= handover_probability(hi, d)


@given(total=st.floats(0.0, 2.0).filter(lambda s: abs(s - 1.0) > 1e-9))
def test_mix_validation_rejects_off_sums(total):
    with pytest.raises(ParameterError):
        SystemParams(100.0, (nrt("a", mix=total / 2), nrt("b", mix=total / 2)))
