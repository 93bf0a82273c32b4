"""Birth-death performance model of a single cell.

The state is the number of calls in the cell. Up to ``N`` calls every call
gets its requested bandwidth; the adaptive schemes add ``S`` further states
reached by degrading non-real-time calls, of which the first ``L`` are also
open to new calls. The guard-channel baseline instead closes the top ``G``
of its ``N`` states to new calls.

Handover arrivals are coupled to the blocking and dropping probabilities
through a flow-balance fixed point solved in :func:`solve_fixed_point`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from adaptcac.alloc import allocate
from adaptcac.errors import (
    ConvergenceError,
    DegenerateScenarioError,
    NumericalError,
    ParameterError,
)
from adaptcac.model import SystemParams, base_release_rate, handover_probability

# Absorbs representation error in floor() of ratios that are exact integers
# (5885 / 58.85 must give 100, not 99).
FLOOR_SLACK = 1e-9

FP_TOLERANCE = 1e-9
FP_MAX_ITER = 10_000


class SchemeKind(enum.Enum):
    PROPOSED = "proposed"
    NON_PRIORITIZED = "non_prioritized"
    AQOS = "aqos"
    HARD_QOS = "hard_qos"
    HARD_QOS_GUARD = "hard_qos_guard"


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind = SchemeKind.PROPOSED
    guard_fraction: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.guard_fraction < 1.0:
            raise ParameterError(f"guard_fraction must lie in [0, 1), got {self.guard_fraction}")

    @property
    def name(self) -> str:
        return self.kind.value


ALL_SCHEMES = tuple(SchemeSpec(k) for k in SchemeKind)


def effective_params(params: SystemParams, scheme: SchemeSpec) -> SystemParams:
    """Rewrite the degradation factors the way each baseline scheme defines them."""
    kind = scheme.kind
    if kind is SchemeKind.PROPOSED:
        return params
    if kind is SchemeKind.NON_PRIORITIZED:
        return params.with_gammas(gamma_n="h")
    if kind is SchemeKind.AQOS:
        return params.with_gammas(gamma_n=0.0)
    return params.with_gammas(gamma_n=0.0, gamma_h=0.0)


def _floor(x: float) -> int:
    return int(math.floor(x + FLOOR_SLACK))


def base_capacity_N(params: SystemParams) -> int:
    """Number of average calls that fit at full requested bandwidth."""
    return _floor(params.capacity / params.mean_request())


def _extra_states(params: SystemParams, gammas) -> int:
    weighted = math.fsum(c.mix * g * c.beta_r for c, g in zip(params.classes, gammas))
    residual = math.fsum(c.mix * (1.0 - g) * c.beta_r for c, g in zip(params.classes, gammas))
    if residual <= 0:
        raise ParameterError("degradation factors of 1 leave no bandwidth per call")
    return _floor(params.capacity * weighted / (residual * params.mean_request()))


def extra_states_S(params: SystemParams) -> int:
    """Calls the adaptive scheme can add beyond ``N`` by degrading to handover floors."""
    return _extra_states(params, [c.gamma_h for c in params.classes])


def newcall_states_L(params: SystemParams) -> int:
    """How many of the extra states still accept new calls."""
    return _extra_states(params, [c.gamma_n for c in params.classes])


def guard_channels(n_base: int, scheme: SchemeSpec) -> int:
    if scheme.kind is not SchemeKind.HARD_QOS_GUARD:
        return 0
    # round before ceil so that 0.05 * 100 stays 5
    return int(math.ceil(round(scheme.guard_fraction * n_base, 9)))


def state_release_rate(i: int, params: SystemParams) -> float:
    """Per-call release rate with ``i`` calls in the cell.

    The census at state ``i`` is taken as ``mix * i`` per class. Non-real-time
    calls carry a fixed work volume, so a call served at ``beta_a`` lasts
    ``beta_r / beta_a`` times its full-bandwidth duration.
    """
    n_base = base_capacity_N(params)
    top = n_base + extra_states_S(params)
    if not 0 <= i <= top:
        raise IndexError(f"state {i} outside 0..{top}")
    if i <= n_base:
        return base_release_rate(params)
    census = [c.mix * i for c in params.classes]
    alloc = allocate(census, params)
    mean_duration = math.fsum(
        c.mix * c.duration_mean * (1.0 if c.realtime else c.beta_r / a)
        for c, a in zip(params.classes, alloc)
    )
    return params.eta + 1.0 / mean_duration


@dataclass(frozen=True)
class ChainLayout:
    """State-space shape of one scheme: counts, cut-offs and death rates."""

    n_base: int
    s_extra: int
    l_newcall: int
    guard: int
    death: tuple[float, ...]  # death[i] = i * mu_i, index 0 unused

    @property
    def top(self) -> int:
        return len(self.death) - 1

    @property
    def new_cutoff(self) -> int:
        """First state in which new calls are refused."""
        if self.guard:
            return self.n_base - self.guard
        return self.n_base + self.l_newcall


@lru_cache(maxsize=256)
def chain_layout(params: SystemParams, scheme: SchemeSpec) -> ChainLayout:
    eff = effective_params(params, scheme)
    n_base = base_capacity_N(eff)
    if n_base < 1:
        raise DegenerateScenarioError(
            f"capacity {eff.capacity} holds no average call (N = 0)"
        )
    s_extra = extra_states_S(eff)
    l_newcall = newcall_states_L(eff)
    death = [0.0] + [i * state_release_rate(i, eff) for i in range(1, n_base + s_extra + 1)]
    return ChainLayout(n_base, s_extra, l_newcall, guard_channels(n_base, scheme), tuple(death))


def _distribution(layout: ChainLayout, lambda_n: float, lambda_h: float) -> np.ndarray:
    top = layout.top
    cutoff = layout.new_cutoff
    with np.errstate(divide="ignore"):
        log_open = math.log(lambda_n + lambda_h) if lambda_n + lambda_h > 0 else -math.inf
        log_ho = math.log(lambda_h) if lambda_h > 0 else -math.inf
        log_death = np.log(np.asarray(layout.death[1:]))
    log_birth = np.where(np.arange(top) < cutoff, log_open, log_ho)
    logw = np.empty(top + 1)
    logw[0] = 0.0
    np.cumsum(log_birth - log_death, out=logw[1:])
    peak = np.max(logw)
    if not np.isfinite(peak) or np.any(np.isnan(logw)):
        raise NumericalError(
            f"unnormalizable weights (peak log-weight {peak}) for "
            f"lambda_n={lambda_n}, lambda_h={lambda_h}, states 0..{top}"
        )
    pi = np.exp(logw - peak)
    pi /= math.fsum(pi)
    return pi


def stationary_distribution(lambda_n: float, lambda_h: float, params: SystemParams,
                            scheme: SchemeSpec = SchemeSpec()) -> np.ndarray:
    """Stationary probabilities ``P(0..K)`` of the scheme's birth-death chain.

    Built from products of birth/death ratios in the log domain; no factorial
    is ever formed.
    """
    if not lambda_n > 0 or lambda_h < 0:
        raise ParameterError(f"need lambda_n > 0 and lambda_h >= 0, got {lambda_n}, {lambda_h}")
    return _distribution(chain_layout(params, scheme), lambda_n, lambda_h)


def blocking_dropping(pi, n_base: int, l_newcall: int, s_extra: int,
                      guard: int = 0) -> tuple[float, float]:
    """New-call blocking and handover dropping probabilities from ``pi``."""
    pi = np.asarray(pi)
    if guard:
        return math.fsum(pi[n_base - guard:n_base + 1]), float(pi[n_base])
    top = n_base + s_extra
    return math.fsum(pi[n_base + l_newcall:top + 1]), float(pi[top])


@dataclass(frozen=True, eq=False)
class ChainSolution:
    scheme: SchemeSpec
    lambda_n: float
    n_base: int
    s_extra: int
    l_newcall: int
    guard: int
    pi: np.ndarray
    p_block: float
    p_drop: float
    lambda_h: float
    p_handover: float
    iterations: int


def _handover_map(lambda_n, p_h, p_block, p_drop):
    return lambda_n * p_h * (1.0 - p_block) / (1.0 - p_h * (1.0 - p_drop))


def solve_fixed_point(lambda_n: float, params: SystemParams,
                      scheme: SchemeSpec = SchemeSpec(), *,
                      tol: float = FP_TOLERANCE, max_iter: int = FP_MAX_ITER,
                      on_iteration: Callable[[int, float, np.ndarray], None] | None = None,
                      ) -> ChainSolution:
    """Solve the chain jointly with the handover arrival rate it induces.

    Damped Picard iteration on ``lambda_h``; the step is halved once the
    iterates start to oscillate without shrinking. ``on_iteration`` is called
    with ``(k, lambda_h, pi)`` for every distribution computed.
    """
    if not lambda_n > 0:
        raise ParameterError(f"lambda_n must be positive, got {lambda_n}")
    layout = chain_layout(params, scheme)
    p_h = handover_probability(params.dwell_mean, params.mean_duration())
    lam_h = lambda_n * p_h / (1.0 - p_h)
    damping = 1.0
    prev_step = None
    residual = math.inf
    for k in range(1, max_iter + 1):
        pi = _distribution(layout, lambda_n, lam_h)
        if on_iteration is not None:
            on_iteration(k, lam_h, pi)
        p_block, p_drop = blocking_dropping(
            pi, layout.n_base, layout.l_newcall, layout.s_extra, layout.guard
        )
        step = _handover_map(lambda_n, p_h, p_block, p_drop) - lam_h
        residual = abs(step)
        if residual <= tol * max(lambda_n, lam_h):
            return ChainSolution(
                scheme=scheme, lambda_n=lambda_n,
                n_base=layout.n_base, s_extra=layout.s_extra,
                l_newcall=layout.l_newcall, guard=layout.guard,
                pi=pi, p_block=p_block, p_drop=p_drop,
                lambda_h=lam_h, p_handover=p_h, iterations=k,
            )
        if prev_step is not None and step * prev_step < 0 and abs(step) > 0.9 * abs(prev_step):
            damping = 0.5
        prev_step = step
        lam_h += damping * step
    raise ConvergenceError(
        f"handover fixed point did not converge in {max_iter} iterations "
        f"(lambda_n={lambda_n}, residual={residual:.3e})",
        last_iterate=lam_h, residual=residual, iterations=max_iter,
    )
