"""Per-cell bandwidth allocation and the admission decision.

Every transition is pure: a :class:`CellState` goes in, a new one comes
out. Allocations are a function of the census alone, so they are recomputed
from scratch whenever a call arrives or leaves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from adaptcac.errors import InfeasibleStateError, UndefinedResidualError
from adaptcac.model import SystemParams, TrafficClass

TOL = 1e-9  # kbit/s


class CallKind(enum.Enum):
    NEW = "new"
    HANDOVER = "handover"


class Decision(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class RejectScope(enum.Enum):
    """Which classes the "already at the new-call floor" lock inspects.

    ``ANY``: a new call of any class is refused as soon as some degraded
    non-real-time class sits at or below its new-call floor.
    ``ARRIVING``: only the arriving call's own class is inspected.
    """

    ANY = "any"
    ARRIVING = "arriving"


@dataclass(frozen=True)
class CellState:
    counts: tuple[int, ...]
    alloc: tuple[float, ...]

    @classmethod
    def empty(cls, params: SystemParams) -> "CellState":
        return cls(
            counts=(0,) * params.n_classes,
            alloc=tuple(c.beta_r for c in params.classes),
        )

    @property
    def n_calls(self) -> int:
        return sum(self.counts)

    def check(self, params: SystemParams) -> None:
        """Raise :class:`InfeasibleStateError` if an invariant is broken."""
        for n, a, c in zip(self.counts, self.alloc, params.classes):
            if n < 0:
                raise InfeasibleStateError(f"negative census for {c.name}")
            if n == 0:
                continue
            if c.realtime and a != c.beta_r:
                raise InfeasibleStateError(f"real-time class {c.name} degraded to {a}")
            if a > c.beta_r + TOL or a < c.beta_h - TOL:
                raise InfeasibleStateError(
                    f"{c.name} allocation {a} outside [{c.beta_h}, {c.beta_r}]"
                )
        if occupied(self) > params.capacity + TOL:
            raise InfeasibleStateError(
                f"occupied {occupied(self)} exceeds capacity {params.capacity}"
            )


@dataclass(frozen=True)
class AdmitOutcome:
    decision: Decision
    new_state: CellState | None = None
    granted: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPTED


REJECTED = AdmitOutcome(Decision.REJECTED)


def _rt_load(counts: Sequence[float], params: SystemParams) -> float:
    return sum(n * c.beta_r for n, c in zip(counts, params.classes) if c.realtime)


def residual_fraction(state: CellState, params: SystemParams) -> float:
    """Capacity left after real-time calls, over the non-real-time full request."""
    nrt_request = sum(
        n * c.beta_r for n, c in zip(state.counts, params.classes) if not c.realtime
    )
    if nrt_request <= 0:
        raise UndefinedResidualError("no non-real-time call is active")
    return (params.capacity - _rt_load(state.counts, params)) / nrt_request


def allocate(counts: Sequence[float], params: SystemParams) -> tuple[float, ...]:
    """Per-call allocation for a (possibly fractional) census.

    Real-time calls always get ``beta_r``. Non-real-time classes get ``beta_r``
    when the remainder covers their full request; otherwise the remainder is
    shared in proportion to each class's handover floor. A class whose
    proportional share would exceed ``beta_r`` is capped there and the
    leftover is shared again among the others.
    """
    classes = params.classes
    alloc = [c.beta_r for c in classes]
    remaining = params.capacity - _rt_load(counts, params)
    active = [m for m, c in enumerate(classes) if not c.realtime and counts[m] > 0]
    if not active:
        if remaining < -TOL:
            raise InfeasibleStateError(
                f"real-time load exceeds capacity by {-remaining:.6g} kbit/s"
            )
        return tuple(alloc)
    full = sum(counts[m] * classes[m].beta_r for m in active)
    if remaining >= full:
        return tuple(alloc)
    floor_total = sum(counts[m] * classes[m].beta_h for m in active)
    if remaining < floor_total - TOL:
        raise InfeasibleStateError(
            f"census needs {floor_total:.6g} kbit/s at handover floors, "
            f"only {remaining:.6g} left after real-time calls"
        )
    budget = remaining
    uncapped = list(active)
    while uncapped:
        weight = sum(counts[m] * classes[m].beta_h for m in uncapped)
        factor = budget / weight
        capped = [m for m in uncapped if factor * classes[m].beta_h >= classes[m].beta_r]
        if not capped:
            break
        for m in capped:
            budget -= counts[m] * classes[m].beta_r
            uncapped.remove(m)
    for m in uncapped:
        alloc[m] = factor * classes[m].beta_h
    return tuple(alloc)


def reallocate(state: CellState, params: SystemParams) -> CellState:
    return CellState(state.counts, allocate(state.counts, params))


def _floor(cls: TrafficClass, kind: CallKind) -> float:
    return cls.beta_h if kind is CallKind.HANDOVER else cls.beta_n


def releasable(state: CellState, params: SystemParams, kind: CallKind) -> float:
    """Bandwidth that degrading non-real-time calls down to their floors would free."""
    return sum(
        n * max(0.0, a - _floor(c, kind))
        for n, a, c in zip(state.counts, state.alloc, params.classes)
        if not c.realtime and n > 0
    )


def occupied(state: CellState) -> float:
    return sum(n * a for n, a in zip(state.counts, state.alloc) if n > 0)


def available(state: CellState, params: SystemParams, kind: CallKind) -> float:
    """Capacity left if every non-real-time call dropped to its floor for ``kind``.

    Negative when existing calls already sit below the new-call floor.
    """
    nrt_floor = sum(
        n * _floor(c, kind)
        for n, c in zip(state.counts, params.classes)
        if not c.realtime
    )
    return params.capacity - _rt_load(state.counts, params) - nrt_floor


def required(cls: TrafficClass, kind: CallKind) -> float:
    """Smallest allocation under which a call of ``cls`` can be admitted."""
    if cls.realtime:
        return cls.beta_r
    return _floor(cls, kind)


def _new_call_locked(state: CellState, params: SystemParams, class_index: int,
                     scope: RejectScope) -> bool:
    if scope is RejectScope.ARRIVING:
        candidates = [class_index]
    else:
        candidates = range(params.n_classes)
    for m in candidates:
        c = params.classes[m]
        if c.realtime or state.counts[m] == 0:
            continue
        # only a call that has actually been degraded can be "at" its floor
        if state.alloc[m] < c.beta_r - TOL and state.alloc[m] <= c.beta_n + TOL:
            return True
    return False


def with_call(state: CellState, class_index: int, delta: int = 1) -> CellState:
    counts = list(state.counts)
    counts[class_index] += delta
    if counts[class_index] < 0:
        raise InfeasibleStateError(f"no active call of class {class_index} to remove")
    return CellState(tuple(counts), state.alloc)


def admit(state: CellState, params: SystemParams, class_index: int, kind: CallKind,
          *, guard: float = 0.0, reject_scope: RejectScope = RejectScope.ANY) -> AdmitOutcome:
    """Decide on one arriving call and return the resulting cell.

    ``guard`` is bandwidth that new calls may not use (guard-channel
    baseline). Rejection is a normal outcome.
    """
    cls = params.classes[class_index]
    if kind is CallKind.NEW and _new_call_locked(state, params, class_index, reject_scope):
        return REJECTED
    reserve = guard if kind is CallKind.NEW else 0.0
    if cls.beta_r <= params.capacity - occupied(state) - reserve + TOL:
        new_state = reallocate(with_call(state, class_index), params)
        return AdmitOutcome(Decision.ACCEPTED, new_state, new_state.alloc[class_index])
    if required(cls, kind) > available(state, params, kind) - reserve + TOL:
        return REJECTED
    new_state = reallocate(with_call(state, class_index), params)
    if kind is CallKind.NEW:
        # every class must still be at or above its new-call floor afterwards
        for n, a, c in zip(new_state.counts, new_state.alloc, params.classes):
            if n > 0 and not c.realtime and a < c.beta_n - TOL:
                return REJECTED
    return AdmitOutcome(Decision.ACCEPTED, new_state, new_state.alloc[class_index])


def release(state: CellState, params: SystemParams, class_index: int) -> CellState:
    """Remove one call of ``class_index`` and hand its bandwidth back."""
    return reallocate(with_call(state, class_index, -1), params)
