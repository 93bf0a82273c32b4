"""Traffic classes, scenario parameters and elementary relations.

Units are kbit/s for bandwidth and seconds for time throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from adaptcac.errors import InvalidAllocationError, ParameterError

MIX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TrafficClass:
    """One service class.

    ``gamma_n`` and ``gamma_h`` are the largest fractions of ``beta_r`` that
    may be reclaimed from an admitted call of this class to make room for a
    new call and for a handover call respectively. Real-time classes cannot
    be degraded, so both must be zero for them.
    """

    name: str
    realtime: bool
    beta_r: float
    gamma_n: float
    gamma_h: float
    mix: float
    duration_mean: float = 120.0

    def __post_init__(self):
        problems = class_violations(self)
        if problems:
            raise ParameterError(f"class {self.name!r}: " + "; ".join(problems))

    @property
    def beta_n(self) -> float:
        return (1.0 - self.gamma_n) * self.beta_r

    @property
    def beta_h(self) -> float:
        return (1.0 - self.gamma_h) * self.beta_r


@dataclass(frozen=True)
class BandwidthLevels:
    beta_n: float
    beta_h: float


@dataclass(frozen=True)
class SystemParams:
    """A full scenario: capacity, ordered classes and mean dwell time.

    Real-time classes must come first. ``dwell_mean`` may be ``math.inf``
    for a cell without mobility.
    """

    capacity: float
    classes: tuple[TrafficClass, ...]
    dwell_mean: float = 240.0
    _q: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        problems = system_violations(self.capacity, self.classes, self.dwell_mean)
        if problems:
            raise ParameterError("; ".join(problems))
        object.__setattr__(self, "_q", sum(1 for c in self.classes if c.realtime))

    @property
    def q(self) -> int:
        """Number of real-time classes."""
        return self._q

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def eta(self) -> float:
        """Cell-exit rate ``1/dwell_mean``."""
        return 1.0 / self.dwell_mean

    def mean_duration(self) -> float:
        """Mix-weighted mean call duration at full requested bandwidth."""
        return math.fsum(c.mix * c.duration_mean for c in self.classes)

    def mean_request(self) -> float:
        """Mix-weighted mean requested bandwidth per call."""
        return math.fsum(c.mix * c.beta_r for c in self.classes)

    def with_gammas(self, gamma_n=None, gamma_h=None) -> "SystemParams":
        """Copy with the degradation factors of every non-real-time class rewritten.

        Each argument is either ``None`` (keep), ``"h"`` (copy ``gamma_h``, only
        meaningful for ``gamma_n``) or a float applied to every class.
        """
        classes = []
        for c in self.classes:
            gh = c.gamma_h if gamma_h is None else float(gamma_h)
            if gamma_n is None:
                gn = min(c.gamma_n, gh)
            elif gamma_n == "h":
                gn = gh
            else:
                gn = float(gamma_n)
            if c.realtime:
                gn = gh = 0.0
            classes.append(
                TrafficClass(c.name, c.realtime, c.beta_r, gn, gh, c.mix, c.duration_mean)
            )
        return SystemParams(self.capacity, tuple(classes), self.dwell_mean)


def class_violations(c) -> list[str]:
    """Constraint violations of one class-like object (attribute access only)."""
    out = []
    if not (c.beta_r > 0 and math.isfinite(c.beta_r)):
        out.append(f"beta_r must be positive, got {c.beta_r}")
    if not (c.duration_mean > 0 and math.isfinite(c.duration_mean)):
        out.append(f"duration_mean must be positive, got {c.duration_mean}")
    if not 0.0 <= c.mix <= 1.0:
        out.append(f"mix must lie in [0, 1], got {c.mix}")
    if not 0.0 <= c.gamma_n <= 1.0:
        out.append(f"gamma_n must lie in [0, 1], got {c.gamma_n}")
    if not 0.0 <= c.gamma_h < 1.0:
        out.append(f"gamma_h must lie in [0, 1), got {c.gamma_h}")
    if c.gamma_n > c.gamma_h:
        out.append(f"gamma_n ({c.gamma_n}) must not exceed gamma_h ({c.gamma_h})")
    if c.realtime and (c.gamma_n != 0.0 or c.gamma_h != 0.0):
        out.append("real-time classes cannot be degraded (gamma_n = gamma_h = 0 required)")
    return out


def system_violations(capacity, classes, dwell_mean) -> list[str]:
    """Scenario-level constraint violations; ``classes`` need only name/realtime/beta_r/mix."""
    if not classes:
        return ["at least one traffic class is required"]
    out = []
    total = math.fsum(c.mix for c in classes)
    if abs(total - 1.0) > MIX_TOLERANCE:
        out.append(f"class mix fractions must sum to 1 (within {MIX_TOLERANCE:g}), got {total!r}")
    seen_nrt = False
    for c in classes:
        if not c.realtime:
            seen_nrt = True
        elif seen_nrt:
            out.append(
                f"real-time class {c.name!r} follows a non-real-time class; "
                "real-time classes must come first"
            )
    widest = max(c.beta_r for c in classes)
    if not capacity >= widest:
        out.append(
            f"capacity ({capacity}) must be at least the widest requested bandwidth ({widest})"
        )
    if not dwell_mean > 0:
        out.append(f"dwell_mean must be positive, got {dwell_mean}")
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        out.append("class names must be unique")
    return out


def min_bandwidth_levels(cls: TrafficClass) -> BandwidthLevels:
    """Floors under which no call of ``cls`` may be pushed to admit a new or handover call."""
    return BandwidthLevels(beta_n=cls.beta_n, beta_h=cls.beta_h)


def degradation_factor(beta_r: float, beta_a: float) -> float:
    """Fraction of the requested bandwidth currently withheld from a call."""
    if not 0.0 < beta_a <= beta_r:
        raise InvalidAllocationError(
            f"allocation {beta_a} outside (0, {beta_r}]"
        )
    return (beta_r - beta_a) / beta_r


def handover_probability(dwell_mean: float, call_duration_mean: float) -> float:
    """Probability that a call leaves the cell before it completes.

    With exponential dwell (rate ``eta``) and duration (rate ``mu``) this is
    ``eta / (eta + mu)``.
    """
    if not dwell_mean > 0 or not call_duration_mean > 0:
        raise ParameterError(
            f"means must be positive, got dwell={dwell_mean}, duration={call_duration_mean}"
        )
    eta = 1.0 / dwell_mean
    mu = 1.0 / call_duration_mean
    return eta / (eta + mu)


def base_release_rate(params: SystemParams) -> float:
    """Per-call channel release rate with every call at full bandwidth."""
    return params.eta + 1.0 / params.mean_duration()


# Service classes of the reference scenario: (name, realtime, beta_r, gamma_n, gamma_h, mix).
REFERENCE_CLASSES: Sequence[tuple] = (
    ("conversational_voice", True, 25.0, 0.0, 0.0, 0.35),
    ("conversational_video", True, 128.0, 0.0, 0.0, 0.10),
    ("realtime_gaming", True, 56.0, 0.0, 0.0, 0.05),
    ("buffered_streaming_video", False, 128.0, 0.4, 0.6, 0.15),
    ("voice_messaging", False, 13.0, 0.2, 0.3, 0.10),
    ("web_browsing", False, 56.0, 0.2, 0.5, 0.15),
    ("background", False, 56.0, 0.5, 0.8, 0.10),
)


def reference_params(capacity: float = 5885.0, duration_mean: float = 120.0,
                     dwell_mean: float = 240.0) -> SystemParams:
    """The seven-class reference scenario (N = 100 at the default capacity)."""
    classes = tuple(
        TrafficClass(name, rt, br, gn, gh, mix, duration_mean)
        for name, rt, br, gn, gh, mix in REFERENCE_CLASSES
    )
    return SystemParams(capacity, classes, dwell_mean)
