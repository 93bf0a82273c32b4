"""Discrete-event simulation of one cell under a given admission scheme.

Calls arrive as a Poisson stream, pick a class by the mix fractions and go
through :func:`adaptcac.alloc.admit`. Real-time calls hold for an exponential
time; non-real-time calls carry an exponential work volume that drains at
their current allocation, so degradation stretches them. Every call also
draws an exponential dwell time. When it expires the call leaves and, after
an independent exponential transit lag, is offered back to the cell as a
handover arrival (the cell stands in for its statistically identical
neighbours). A rejected handover is a drop.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from adaptcac import alloc
from adaptcac.alloc import CallKind, CellState, RejectScope
from adaptcac.chain import (
    SchemeKind,
    SchemeSpec,
    base_capacity_N,
    effective_params,
    guard_channels,
)
from adaptcac.errors import DegenerateScenarioError, ParameterError, SimulationInvariantError
from adaptcac.model import SystemParams

WORK_TOLERANCE = 1e-6  # kbit
WORK_RELATIVE_TOLERANCE = 1e-6

COMPLETION = "COMPLETION"
DWELL_EXPIRY = "DWELL_EXPIRY"
HANDOVER_ARRIVAL = "HANDOVER_ARRIVAL"
NEW_ARRIVAL = "NEW_ARRIVAL"
# At equal timestamps: completions, then dwell expiries, then arrivals (FIFO).
_PRIORITY = {COMPLETION: 0, DWELL_EXPIRY: 1, HANDOVER_ARRIVAL: 2, NEW_ARRIVAL: 2}


@dataclass(frozen=True)
class SimConfig:
    lambda_n: float
    horizon: float = 20_000.0
    warmup: float | None = None
    replications: int = 20
    seed: int = 0
    transit_mean: float | None = None
    reject_scope: RejectScope = RejectScope.ANY
    check_invariants: bool = False

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.1 * self.horizon)
        problems = []
        if not self.lambda_n > 0:
            problems.append(f"lambda_n must be positive, got {self.lambda_n}")
        if not self.horizon > self.warmup >= 0:
            problems.append(f"need horizon > warmup >= 0, got {self.horizon}, {self.warmup}")
        if self.replications < 1:
            problems.append(f"replications must be >= 1, got {self.replications}")
        if self.transit_mean is not None and not self.transit_mean > 0:
            problems.append(f"transit_mean must be positive, got {self.transit_mean}")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass
class CallRecord:
    call_id: int
    class_index: int
    kind: CallKind
    admitted_at: float
    dwell_expiry: float
    work: float = 0.0
    remaining_work: float | None = None
    deadline: float | None = None
    residual: float = 0.0
    rate: float = 0.0
    last_update: float = 0.0
    delivered: float = 0.0
    version: int = 0
    visit: int = 0
    tracked: bool = False
    handed_over: bool = False


@dataclass
class ReplicationStats:
    offered_new: int = 0
    blocked_new: int = 0
    admitted_new: int = 0
    handover_attempts: int = 0
    dropped_handover: int = 0
    tracked_resolved: int = 0
    tracked_dropped: int = 0
    tracked_handed_over: int = 0
    busy_integral: float = 0.0
    observed_time: float = 0.0
    capacity: float = 1.0
    completed_nrt: int = 0

    @property
    def p_block(self) -> float:
        return self.blocked_new / self.offered_new if self.offered_new else 0.0

    @property
    def p_drop(self) -> float:
        return self.dropped_handover / self.handover_attempts if self.handover_attempts else 0.0

    @property
    def utilization(self) -> float:
        if self.observed_time <= 0:
            return 0.0
        return self.busy_integral / (self.observed_time * self.capacity)

    @property
    def handovers_per_admitted_call(self) -> float:
        return self.handover_attempts / self.admitted_new if self.admitted_new else 0.0

    @property
    def forced_termination(self) -> float:
        return self.tracked_dropped / self.tracked_resolved if self.tracked_resolved else 0.0

    @property
    def forced_termination_inclusive(self) -> float:
        if not self.offered_new:
            return 0.0
        return (self.blocked_new + self.admitted_new * self.forced_termination) / self.offered_new

    @property
    def handover_fraction(self) -> float:
        return self.tracked_handed_over / self.tracked_resolved if self.tracked_resolved else 0.0

    @property
    def handover_arrival_rate(self) -> float:
        return self.handover_attempts / self.observed_time if self.observed_time else 0.0


@dataclass(frozen=True)
class SimReport:
    offered_new: int
    blocked_new: int
    handover_attempts: int
    dropped_handover: int
    p_block: float
    p_block_ci: float
    p_drop: float
    p_drop_ci: float
    utilization: float
    utilization_ci: float
    handovers_per_admitted_call: float
    forced_termination: float
    forced_termination_inclusive: float
    handover_fraction: float
    handover_arrival_rate: float
    replications: tuple[ReplicationStats, ...] = field(repr=False, default=())


def _mean_ci(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    mean = float(np.mean(x))
    if len(x) < 2:
        return mean, math.inf
    half = stats.t.ppf(0.975, len(x) - 1) * float(np.std(x, ddof=1)) / math.sqrt(len(x))
    return mean, float(half)


class _Replication:
    def __init__(self, params: SystemParams, scheme: SchemeSpec, cfg: SimConfig,
                 seed: int, trace: Callable[[str], None] | None = None):
        self.params = effective_params(params, scheme)
        n_base = base_capacity_N(self.params)
        if n_base < 1:
            raise DegenerateScenarioError("capacity holds no average call (N = 0)")
        self.guard = guard_channels(n_base, scheme) * self.params.mean_request()
        if scheme.kind is not SchemeKind.HARD_QOS_GUARD:
            self.guard = 0.0
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.trace = trace
        self.cum_mix = np.cumsum([c.mix for c in self.params.classes])
        self.transit_mean = cfg.transit_mean or self.params.dwell_mean
        self.state = CellState.empty(self.params)
        self.members: list[dict[int, CallRecord]] = [{} for _ in self.params.classes]
        self.active: dict[int, CallRecord] = {}
        self.transit: dict[int, CallRecord] = {}
        self.events: list = []
        self.seq = 0
        self.next_id = 0
        self.now = 0.0
        self.last_t = 0.0
        self.stats = ReplicationStats(capacity=self.params.capacity)

    # -- event queue -------------------------------------------------------

    def _push(self, time, etype, call_id=-1, version=0):
        self.seq += 1
        heapq.heappush(self.events, (time, _PRIORITY[etype], self.seq, etype, call_id, version))

    def _exp(self, mean):
        if math.isinf(mean):
            return math.inf
        return float(self.rng.exponential(mean))

    def _draw_class(self) -> int:
        m = int(np.searchsorted(self.cum_mix, self.rng.random(), side="right"))
        return min(m, len(self.cum_mix) - 1)

    @property
    def counting(self) -> bool:
        return self.now >= self.cfg.warmup

    def _emit(self, etype, rec, kind, decision):
        if self.trace is None:
            return
        name = self.params.classes[rec.class_index].name if rec is not None else "-"
        self.trace(
            f"{self.now:.6f}\t{etype}\t{name}\t{kind}\t{decision}\t"
            f"{alloc.occupied(self.state):.6f}"
        )

    # -- bandwidth bookkeeping --------------------------------------------

    def _advance(self, rec: CallRecord):
        dt = self.now - rec.last_update
        if dt > 0:
            served = rec.rate * dt
            rec.remaining_work -= served
            rec.delivered += served
        rec.last_update = self.now
        if rec.remaining_work < -WORK_TOLERANCE:
            raise SimulationInvariantError(
                f"call {rec.call_id} overran its work by {-rec.remaining_work:.3g} kbit"
            )

    def _schedule_completion(self, rec: CallRecord):
        rec.version += 1
        if self.params.classes[rec.class_index].realtime:
            self._push(rec.deadline, COMPLETION, rec.call_id, rec.version)
        else:
            finish = self.now + max(rec.remaining_work, 0.0) / rec.rate
            self._push(finish, COMPLETION, rec.call_id, rec.version)

    def _set_state(self, new_state: CellState):
        old = self.state.alloc
        self.state = new_state
        for m, c in enumerate(self.params.classes):
            if c.realtime or new_state.alloc[m] == old[m]:
                continue
            for rec in self.members[m].values():
                self._advance(rec)
                rec.rate = new_state.alloc[m]
                self._schedule_completion(rec)
        if self.cfg.check_invariants:
            new_state.check(self.params)

    def _accumulate(self):
        start = max(self.last_t, self.cfg.warmup)
        if self.now > start:
            self.stats.busy_integral += alloc.occupied(self.state) * (self.now - start)
        self.last_t = self.now

    # -- admission ---------------------------------------------------------

    def _enter(self, rec: CallRecord, outcome):
        m = rec.class_index
        rec.last_update = self.now
        rec.dwell_expiry = self.now + self._exp(self.params.dwell_mean)
        self._set_state(outcome.new_state)
        self.members[m][rec.call_id] = rec
        self.active[rec.call_id] = rec
        if self.params.classes[m].realtime:
            rec.deadline = self.now + rec.residual
        else:
            rec.rate = outcome.new_state.alloc[m]
        self._schedule_completion(rec)
        rec.visit += 1
        if math.isfinite(rec.dwell_expiry):
            self._push(rec.dwell_expiry, DWELL_EXPIRY, rec.call_id, rec.visit)

    def _leave(self, rec: CallRecord):
        m = rec.class_index
        if not self.params.classes[m].realtime:
            self._advance(rec)
        del self.members[m][rec.call_id]
        del self.active[rec.call_id]
        rec.version += 1
        self._set_state(alloc.release(self.state, self.params, m))

    def _resolve(self, rec: CallRecord, dropped: bool):
        if not rec.tracked:
            return
        self.stats.tracked_resolved += 1
        self.stats.tracked_dropped += dropped
        self.stats.tracked_handed_over += rec.handed_over

    def on_new_arrival(self):
        m = self._draw_class()
        self._push(self.now + self._exp(1.0 / self.cfg.lambda_n), NEW_ARRIVAL)
        counting = self.counting
        if counting:
            self.stats.offered_new += 1
        outcome = alloc.admit(self.state, self.params, m, CallKind.NEW,
                              guard=self.guard, reject_scope=self.cfg.reject_scope)
        cls = self.params.classes[m]
        rec = CallRecord(self.next_id, m, CallKind.NEW, self.now, math.inf)
        self.next_id += 1
        if not outcome.accepted:
            if counting:
                self.stats.blocked_new += 1
            self._emit("NEW_ARRIVAL", rec, "new", "rejected")
            return
        if counting:
            self.stats.admitted_new += 1
            rec.tracked = True
        if cls.realtime:
            rec.residual = self._exp(cls.duration_mean)
        else:
            rec.work = self._exp(cls.beta_r * cls.duration_mean)
            rec.remaining_work = rec.work
        self._enter(rec, outcome)
        self._emit("NEW_ARRIVAL", rec, "new", "accepted")

    def on_dwell_expiry(self, rec: CallRecord):
        if self.params.classes[rec.class_index].realtime:
            rec.residual = rec.deadline - self.now
        self._leave(rec)
        rec.handed_over = True
        self.transit[rec.call_id] = rec
        self._push(self.now + self._exp(self.transit_mean), HANDOVER_ARRIVAL, rec.call_id)
        self._emit("DWELL_EXPIRY", rec, rec.kind.value, "-")

    def on_handover_arrival(self, rec: CallRecord):
        del self.transit[rec.call_id]
        counting = self.counting
        if counting:
            self.stats.handover_attempts += 1
        outcome = alloc.admit(self.state, self.params, rec.class_index, CallKind.HANDOVER,
                              guard=self.guard, reject_scope=self.cfg.reject_scope)
        if not outcome.accepted:
            if counting:
                self.stats.dropped_handover += 1
            self._resolve(rec, dropped=True)
            self._emit("HANDOVER_ARRIVAL", rec, "handover", "rejected")
            return
        self._enter(rec, outcome)
        self._emit("HANDOVER_ARRIVAL", rec, "handover", "accepted")

    def on_completion(self, rec: CallRecord):
        cls = self.params.classes[rec.class_index]
        if not cls.realtime:
            self._advance(rec)
            if abs(rec.delivered - rec.work) > WORK_RELATIVE_TOLERANCE * max(rec.work, 1.0):
                raise SimulationInvariantError(
                    f"call {rec.call_id} delivered {rec.delivered!r} of {rec.work!r} kbit"
                )
            self.stats.completed_nrt += 1
        del self.members[rec.class_index][rec.call_id]
        del self.active[rec.call_id]
        self._set_state(alloc.release(self.state, self.params, rec.class_index))
        self._resolve(rec, dropped=False)
        self._emit("COMPLETION", rec, rec.kind.value, "-")

    # -- main loop ---------------------------------------------------------

    def _live(self, etype, call_id, version):
        """The call an event refers to, or None if the event went stale."""
        if etype == HANDOVER_ARRIVAL:
            return self.transit.get(call_id)
        rec = self.active.get(call_id)
        if rec is None:
            return None
        current = rec.version if etype == COMPLETION else rec.visit
        return rec if current == version else None

    def run(self) -> ReplicationStats:
        horizon = self.cfg.horizon
        self._push(self._exp(1.0 / self.cfg.lambda_n), NEW_ARRIVAL)
        while self.events:
            time, _, _, etype, call_id, version = heapq.heappop(self.events)
            if time > horizon:
                break
            rec = None
            if etype != NEW_ARRIVAL:
                rec = self._live(etype, call_id, version)
                if rec is None:
                    continue
            self.now = time
            self._accumulate()
            if etype == NEW_ARRIVAL:
                self.on_new_arrival()
            elif etype == HANDOVER_ARRIVAL:
                self.on_handover_arrival(rec)
            elif etype == COMPLETION:
                self.on_completion(rec)
            else:
                self.on_dwell_expiry(rec)
        self.now = horizon
        self._accumulate()
        self.stats.observed_time = horizon - self.cfg.warmup
        return self.stats


def run_replication(params: SystemParams, scheme: SchemeSpec, cfg: SimConfig,
                    index: int = 0, trace: Callable[[str], None] | None = None
                    ) -> ReplicationStats:
    """One independent replication, seeded with ``cfg.seed + index``."""
    return _Replication(params, scheme, cfg, cfg.seed + index, trace).run()


def run(params: SystemParams, scheme: SchemeSpec, cfg: SimConfig,
        trace: Callable[[str], None] | None = None) -> SimReport:
    """Run every replication and aggregate with Student-t 95% intervals.

    ``trace`` receives one tab-separated line per event of the first
    replication.
    """
    reps = tuple(
        run_replication(params, scheme, cfg, r, trace if r == 0 else None)
        for r in range(cfg.replications)
    )
    p_block, p_block_ci = _mean_ci([r.p_block for r in reps])
    p_drop, p_drop_ci = _mean_ci([r.p_drop for r in reps])
    util, util_ci = _mean_ci([r.utilization for r in reps])
    return SimReport(
        offered_new=sum(r.offered_new for r in reps),
        blocked_new=sum(r.blocked_new for r in reps),
        handover_attempts=sum(r.handover_attempts for r in reps),
        dropped_handover=sum(r.dropped_handover for r in reps),
        p_block=p_block,
        p_block_ci=p_block_ci,
        p_drop=p_drop,
        p_drop_ci=p_drop_ci,
        utilization=util,
        utilization_ci=util_ci,
        handovers_per_admitted_call=float(np.mean([r.handovers_per_admitted_call for r in reps])),
        forced_termination=float(np.mean([r.forced_termination for r in reps])),
        forced_termination_inclusive=float(
            np.mean([r.forced_termination_inclusive for r in reps])
        ),
        handover_fraction=float(np.mean([r.handover_fraction for r in reps])),
        handover_arrival_rate=float(np.mean([r.handover_arrival_rate for r in reps])),
        replications=reps,
    )
