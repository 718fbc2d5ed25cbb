"""Extended variances: zero, finite positive, or infinite.

"Tends to zero" and "tends to infinity" are exact tags, so the absorbing
rules (infinity swallows a serial sum, zero swallows a parallel sum) need no
threshold. Finite values are ordinary floats; anything at or below
``v_zero`` or at or above ``v_inf`` is folded into the corresponding tag.

The vectorised engine in :mod:`gbpobs.factor_graph` encodes ZERO as ``0.0``
and INFINITE as ``inf``; :meth:`ExtendedVariance.to_float` and
:meth:`ExtendedVariance.from_float` convert between the two.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional


class Tag(enum.Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class SweepConfig:
    """Thresholds and iteration limits of the variance message passing."""

    v_init: float = 1.0
    v_zero: float = 1e-12
    v_low: float = 1e-4
    v_high: float = 1e8
    v_inf: float = 1e30
    tol: float = 1e-9
    tau_max: int = 1000
    window: int = 5
    degree_obs: float = 10.0
    degree_unobs: float = 14.0

    def __post_init__(self) -> None:
        if not 0 < self.v_zero < self.v_low < self.v_high < self.v_inf:
            raise ValueError("need 0 < v_zero < v_low < v_high < v_inf")
        if not self.v_zero < self.v_init < self.v_inf:
            raise ValueError("v_init must be a finite variance")
        if self.tau_max < 1 or self.window < 1 or self.tol < 0:
            raise ValueError("tau_max and window must be positive, tol non-negative")
        if not 0 < self.degree_obs <= self.degree_unobs:
            raise ValueError("need 0 < degree_obs <= degree_unobs")


DEFAULT = SweepConfig()


@dataclass(frozen=True)
class ExtendedVariance:
    tag: Tag
    value: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.tag is Tag.FINITE) != (self.value is not None):
            raise ValueError("value is present iff the tag is FINITE")
        if self.value is not None and not (0 < self.value < math.inf):
            raise ValueError(f"finite variance must be positive, got {self.value}")

    @classmethod
    def finite(cls, v: float, cfg: SweepConfig = DEFAULT) -> "ExtendedVariance":
        return cls.from_float(v, cfg)

    @classmethod
    def from_float(cls, v: float, cfg: SweepConfig = DEFAULT) -> "ExtendedVariance":
        if v < 0 or math.isnan(v):
            raise ValueError(f"not a variance: {v}")
        if v <= cfg.v_zero:
            return ZERO
        if v >= cfg.v_inf:
            return INFINITE
        return cls(Tag.FINITE, float(v))

    def to_float(self) -> float:
        if self.tag is Tag.ZERO:
            return 0.0
        if self.tag is Tag.INFINITE:
            return math.inf
        return self.value  # type: ignore[return-value]

    @property
    def is_zero(self) -> bool:
        return self.tag is Tag.ZERO

    @property
    def is_infinite(self) -> bool:
        return self.tag is Tag.INFINITE

    def __repr__(self) -> str:
        return f"FINITE({self.value:g})" if self.tag is Tag.FINITE else self.tag.name


ZERO = ExtendedVariance(Tag.ZERO)
INFINITE = ExtendedVariance(Tag.INFINITE)


def serial_variance(
    incoming: Iterable[ExtendedVariance],
    own: ExtendedVariance | None = None,
    cfg: SweepConfig = DEFAULT,
) -> ExtendedVariance:
    """Variance of a sum: ``own + sum(incoming)``; an empty sum is ZERO."""
    total = 0.0
    terms = list(incoming)
    if own is not None:
        terms.append(own)
    for t in terms:
        if t.tag is Tag.INFINITE:
            return INFINITE
        if t.tag is Tag.FINITE:
            total += t.value  # type: ignore[operator]
    return ExtendedVariance.from_float(total, cfg)


def parallel_variance(incoming: Iterable[ExtendedVariance], cfg: SweepConfig = DEFAULT) -> ExtendedVariance:
    """Harmonic combination ``1 / sum(1 / v)``."""
    terms = list(incoming)
    if not terms:
        raise ValueError("parallel combination of nothing")
    precision = 0.0
    for t in terms:
        if t.tag is Tag.ZERO:
            return ZERO
        if t.tag is Tag.FINITE:
            precision += 1.0 / t.value  # type: ignore[operator]
    if precision == 0.0:
        return INFINITE
    return ExtendedVariance.from_float(1.0 / precision, cfg)


class Observability(enum.Enum):
    OBSERVABLE = "observable"
    UNOBSERVABLE = "unobservable"
    AMBIGUOUS = "ambiguous"


def classify_variance(
    v: ExtendedVariance,
    cfg: SweepConfig = DEFAULT,
    *,
    settled: bool = True,
    growing: bool = False,
    degree: float | None = None,
) -> Observability:
    """Map a marginal to observable / unobservable.

    ``settled`` means the value stopped moving; ``growing`` means it rose
    strictly over the trailing window. ``degree`` is the apparent polynomial
    growth degree (see :meth:`MessageState.growth_degree`): variances pinned by
    the probe stay bounded or drift polynomially, unpinned ones grow
    geometrically, so the degree of the latter keeps increasing with the sweep
    count. Values in the gap between ``degree_obs`` and ``degree_unobs`` are
    AMBIGUOUS, as is an unsettled finite value with no degree estimate.
    """
    if v.tag is Tag.ZERO:
        return Observability.OBSERVABLE
    if v.tag is Tag.INFINITE:
        return Observability.UNOBSERVABLE
    x = v.value
    if x <= cfg.v_low:  # type: ignore[operator]
        return Observability.OBSERVABLE
    if settled:
        return Observability.OBSERVABLE
    if degree is None:
        if growing and x >= cfg.v_high:  # type: ignore[operator]
            return Observability.UNOBSERVABLE
        return Observability.AMBIGUOUS
    if degree >= cfg.degree_unobs:
        return Observability.UNOBSERVABLE
    if degree <= cfg.degree_obs:
        return Observability.OBSERVABLE
    return Observability.AMBIGUOUS
