import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptcac import sim
from adaptcac.chain import ALL_SCHEMES, SchemeKind, SchemeSpec, solve_fixed_point
from adaptcac.errors import ParameterError
from adaptcac.metrics import (
    KPI_FIELDS,
    ForcedTerminationMode,
    KpiRow,
    Source,
    analytical_row,
    analytical_utilization,
    forced_termination,
    handover_rate,
    simulated_row,
)
from adaptcac.model import reference_params

probs = st.floats(0.0, 1.0, allow_nan=False)


def test_forced_termination_values():
    assert forced_termination(0.3, 0.0, 1 / 3) == 0.0
    assert forced_termination(0.0, 1.0, 1 / 3) == pytest.approx(1 / 3, abs=1e-15)
    assert forced_termination(0.0, 0.25, 1 / 3) == pytest.approx(1 / 9, abs=1e-12)


def test_forced_termination_inclusive():
    ft = forced_termination(0.2, 0.25, 1 / 3, ForcedTerminationMode.INCLUSIVE)
    assert ft == pytest.approx(0.2 + 0.8 / 9, abs=1e-12)


def test_forced_termination_rejects_bad_probabilities():
    with pytest.raises(ParameterError):
        forced_termination(0.0, 1.5, 0.3)


@settings(max_examples=200)
@given(pd=st.tuples(probs, probs).map(sorted), ph=st.tuples(probs, probs).map(sorted))
def test_forced_termination_monotone(pd, ph):
    lo_d, hi_d = pd
    lo_h, hi_h = ph
    assert forced_termination(0, lo_d, hi_h) <= forced_termination(0, hi_d, hi_h) + 1e-15
    assert forced_termination(0, hi_d, lo_h) <= forced_termination(0, hi_d, hi_h) + 1e-15
    zero = forced_termination(0, lo_d, lo_h) == 0.0
    assert zero == (lo_d * lo_h == 0.0)


def test_handover_rate_values():
    assert handover_rate(0.4, 0.0, 0.1) == 0.0
    assert handover_rate(0.4, 0.2, 0.0) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        handover_rate(0.4, 0.2, 1.0)


def test_light_load_handover_ratio_is_half():
    row = analytical_row(solve_fixed_point(1e-4, reference_params()), reference_params())
    assert row.handover_rate == pytest.approx(0.5, rel=1e-9)


def test_non_prioritized_hands_over_at_least_as_much():
    # absolute handover arrival rate: the non-prioritized cell admits more new
    # calls under heavy load, so it carries more handovers
    p = reference_params()
    for lam in (0.6, 1.0, 2.0):
        prop = analytical_row(solve_fixed_point(lam, p), p)
        nonp = analytical_row(
            solve_fixed_point(lam, p, SchemeSpec(SchemeKind.NON_PRIORITIZED)), p
        )
        assert nonp.handover_arrival_rate >= prop.handover_arrival_rate


def test_per_call_handover_ratio_favours_dropping_scheme():
    # per admitted call the order flips: every dropped handover ends a call early
    p = reference_params()
    for lam in (1.0, 2.0):
        prop = analytical_row(solve_fixed_point(lam, p), p)
        nonp = analytical_row(
            solve_fixed_point(lam, p, SchemeSpec(SchemeKind.NON_PRIORITIZED)), p
        )
        assert nonp.handover_rate < prop.handover_rate


def test_utilization_limits():
    p = reference_params()
    light = solve_fixed_point(1e-6, p)
    assert analytical_utilization(light, p) < 1e-5
    saturated = solve_fixed_point(1e3, p)
    assert analytical_utilization(saturated, p) == pytest.approx(1.0, abs=1e-9)
    hard = solve_fixed_point(1e3, p, SchemeSpec(SchemeKind.HARD_QOS))
    util = analytical_utilization(hard, p)
    assert util < 1.0
    assert util == pytest.approx(100 * 58.85 / 5885 * hard.pi[100] + np.dot(
        np.arange(100), hard.pi[:100]) * 58.85 / 5885, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0.01, 5.0), scheme=st.sampled_from(ALL_SCHEMES))
def test_utilization_in_unit_interval(lam, scheme):
    p = reference_params()
    u = analytical_utilization(solve_fixed_point(lam, p, scheme), p)
    assert 0.0 <= u <= 1.0


def test_row_rejects_out_of_range_probability():
    with pytest.raises(ParameterError):
        KpiRow("proposed", 0.1, Source.ANALYTICAL, 1.5, 0, 0, 0, 0, 1, 0, 0, 1, 0.0)


def test_analytical_and_simulated_rows_share_schema():
    p = reference_params(capacity=588.5)
    sol = solve_fixed_point(0.05, p)
    report = sim.run(p, sol.scheme, sim.SimConfig(0.05, horizon=2000, replications=2, seed=3))
    a = analytical_row(sol, p)
    s = simulated_row(report, sol)
    assert tuple(f.name for f in dataclasses.fields(a)) == KPI_FIELDS
    for name in KPI_FIELDS:
        va, vs = getattr(a, name), getattr(s, name)
        if name in ("p_block_ci", "p_drop_ci"):
            assert va is None and isinstance(vs, float)
        else:
            assert type(va) is type(vs), name
    assert (a.n_base, a.s_extra, a.l_newcall) == (s.n_base, s.s_extra, s.l_newcall)
    assert s.source is Source.SIMULATED and a.source is Source.ANALYTICAL
