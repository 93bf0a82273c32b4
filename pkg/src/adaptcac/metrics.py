"""Derived performance indicators shared by the analytical and simulated paths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

from adaptcac.chain import ChainSolution
from adaptcac.errors import ParameterError
from adaptcac.model import SystemParams


class Source(enum.Enum):
    ANALYTICAL = "analytical"
    SIMULATED = "simulated"


class ForcedTerminationMode(enum.Enum):
    """``DROPPED``: admitted calls later dropped. ``INCLUSIVE``: also counts blocked originations."""

    DROPPED = "dropped"
    INCLUSIVE = "inclusive"


@dataclass(frozen=True)
class KpiRow:
    scheme: str
    lambda_n: float
    source: Source
    p_block: float
    p_drop: float
    utilization: float
    handover_rate: float
    forced_termination: float
    n_base: int
    s_extra: int
    l_newcall: int
    fp_iterations: int
    handover_arrival_rate: float
    p_block_ci: float | None = None
    p_drop_ci: float | None = None

    def __post_init__(self):
        for name in ("p_block", "p_drop", "utilization", "forced_termination"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise ParameterError(f"{name}={value} outside [0, 1]")


KPI_FIELDS = tuple(f.name for f in fields(KpiRow))


def analytical_utilization(solution: ChainSolution, params: SystemParams) -> float:
    """Expected fraction of capacity in use.

    Up to ``N`` calls each occupies the mean request. Beyond ``N`` the
    adaptive allocation hands out the whole remainder, so the cell is full.
    """
    per_call = params.mean_request()
    total = math.fsum(
        float(p) * min(i * per_call if (i <= solution.n_base or solution.guard)
                       else params.capacity, params.capacity)
        for i, p in enumerate(solution.pi)
    )
    return min(1.0, total / params.capacity)


def forced_termination(p_block: float, p_drop: float, p_h: float,
                       mode: ForcedTerminationMode = ForcedTerminationMode.DROPPED) -> float:
    """Probability that a call is cut off at one of its handovers.

    Each visit to a cell ends in a handover attempt with probability ``p_h``,
    and each attempt fails with probability ``p_drop``; summing the geometric
    series over visits gives ``p_h * p_drop / (1 - p_h * (1 - p_drop))``.
    The inclusive mode also counts originating calls that were never admitted.
    """
    for name, v in (("p_block", p_block), ("p_drop", p_drop), ("p_h", p_h)):
        if not 0.0 <= v <= 1.0:
            raise ParameterError(f"{name}={v} outside [0, 1]")
    denom = 1.0 - p_h * (1.0 - p_drop)
    dropped = 0.0 if denom <= 0 else p_h * p_drop / denom
    if mode is ForcedTerminationMode.INCLUSIVE:
        return p_block + (1.0 - p_block) * dropped
    return dropped


def handover_rate(lambda_n: float, lambda_h: float, p_block: float) -> float:
    """Expected handover attempts per admitted new call."""
    if not lambda_n > 0:
        raise ParameterError(f"lambda_n must be positive, got {lambda_n}")
    if p_block >= 1.0:
        raise ParameterError("every new call is blocked; handovers per admitted call undefined")
    return lambda_h / (lambda_n * (1.0 - p_block))


def analytical_row(solution: ChainSolution, params: SystemParams,
                   ft_mode: ForcedTerminationMode = ForcedTerminationMode.DROPPED) -> KpiRow:
    return KpiRow(
        scheme=solution.scheme.name,
        lambda_n=solution.lambda_n,
        source=Source.ANALYTICAL,
        p_block=solution.p_block,
        p_drop=solution.p_drop,
        utilization=analytical_utilization(solution, params),
        handover_rate=handover_rate(solution.lambda_n, solution.lambda_h, solution.p_block),
        forced_termination=forced_termination(
            solution.p_block, solution.p_drop, solution.p_handover, ft_mode
        ),
        n_base=solution.n_base,
        s_extra=solution.s_extra,
        l_newcall=solution.l_newcall,
        fp_iterations=solution.iterations,
        handover_arrival_rate=solution.lambda_h,
    )


def simulated_row(report, solution: ChainSolution,
                  ft_mode: ForcedTerminationMode = ForcedTerminationMode.DROPPED) -> KpiRow:
    """KPI row for a simulation report; state counts are copied from the matching chain."""
    if ft_mode is ForcedTerminationMode.INCLUSIVE:
        ft = report.forced_termination_inclusive
    else:
        ft = report.forced_termination
    return KpiRow(
        scheme=solution.scheme.name,
        lambda_n=solution.lambda_n,
        source=Source.SIMULATED,
        p_block=report.p_block,
        p_drop=report.p_drop,
        utilization=report.utilization,
        handover_rate=report.handovers_per_admitted_call,
        forced_termination=ft,
        n_base=solution.n_base,
        s_extra=solution.s_extra,
        l_newcall=solution.l_newcall,
        fp_iterations=solution.iterations,
        handover_arrival_rate=report.handover_arrival_rate,
        p_block_ci=report.p_block_ci,
        p_drop_ci=report.p_drop_ci,
    )


__all__ = [
    "ForcedTerminationMode",
    "KPI_FIELDS",
    "KpiRow",
    "Source",
    "analytical_row",
    "analytical_utilization",
    "forced_termination",
    "handover_rate",
    "simulated_row",
]
