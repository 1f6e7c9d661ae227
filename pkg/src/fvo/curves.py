"""Delivery requirement curves for the dynamic frequency-response services.

A curve maps the centre-of-inertia frequency deviation (Hz) to the fraction
of contracted capacity that has to be delivered.  Under-frequency maps to a
positive fraction (export), so every curve is monotone non-increasing.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass

import numpy as np


class Service(str, enum.Enum):
    DR = "DR"
    DM = "DM"
    DC = "DC"


MAX_DELIVERY_TIME = {Service.DR: 10.0, Service.DM: 1.0, Service.DC: 1.0}

DEADBAND_HZ = 0.015

DEFAULT_KNOTS = {
    Service.DM: ((-0.2, 1.0), (-0.1, 0.05), (-DEADBAND_HZ, 0.0),
                 (DEADBAND_HZ, 0.0), (0.1, -0.05), (0.2, -1.0)),
    Service.DR: ((-0.2, 1.0), (-DEADBAND_HZ, 0.0),
                 (DEADBAND_HZ, 0.0), (0.2, -1.0)),
    Service.DC: ((-0.5, 1.0), (-0.2, 0.05), (-DEADBAND_HZ, 0.0),
                 (DEADBAND_HZ, 0.0), (0.2, -0.05), (0.5, -1.0)),
}


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class DeliveryCurve:
    """Piecewise-linear delivery curve h(deviation).

    Parameters
    ----------
    knots : tuple of (deviation_hz, fraction)
        Strictly increasing in deviation, non-increasing in fraction.  The
        extreme knots must carry +1 and -1; beyond them the curve is flat.
    service : Service
    max_delivery_time : float
        Seconds allowed for full delivery, fixed by the service.
    """

    knots: tuple[tuple[float, float], ...]
    service: Service
    max_delivery_time: float

    def __post_init__(self):
        knots = tuple((float(d), float(f)) for d, f in self.knots)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "service", Service(self.service))
        if len(knots) < 2:
            raise CurveError("a delivery curve needs at least two knots")
        devs = [d for d, _ in knots]
        fracs = [f for _, f in knots]
        if any(b <= a for a, b in zip(devs, devs[1:])):
            raise CurveError("knot deviations must be strictly increasing")
        if any(b > a for a, b in zip(fracs, fracs[1:])):
            raise CurveError("knot fractions must be non-increasing (h_w <= 0)")
        if any(abs(f) > 1.0 for f in fracs):
            raise CurveError("knot fractions must lie in [-1, 1]")
        if fracs[0] != 1.0 or fracs[-1] != -1.0:
            raise CurveError("extreme knots must carry full delivery (+1 / -1)")
        if not devs[0] < 0.0 < devs[-1] or np.interp(0.0, devs, fracs) != 0.0:
            raise CurveError("the curve must pass through h(0) = 0")
        expected = MAX_DELIVERY_TIME[self.service]
        if self.max_delivery_time != expected:
            raise CurveError(
                f"{self.service.value} requires max_delivery_time={expected} s")
        object.__setattr__(self, "_devs", devs)
        object.__setattr__(self, "_fracs", fracs)
        slopes = [(f1 - f0) / (d1 - d0)
                  for (d0, f0), (d1, f1) in zip(knots, knots[1:])]
        # segment j spans [devs[j-1], devs[j]]; segments 0 and len are the flat tails
        object.__setattr__(self, "_slopes", [0.0] + slopes + [0.0])

    @classmethod
    def default(cls, service: Service | str) -> "DeliveryCurve":
        service = Service(service)
        return cls(DEFAULT_KNOTS[service], service, MAX_DELIVERY_TIME[service])

    @classmethod
    def from_knots(cls, service: Service | str, knots) -> "DeliveryCurve":
        service = Service(service)
        return cls(tuple(tuple(k) for k in knots), service,
                   MAX_DELIVERY_TIME[service])

    @property
    def breakpoints(self) -> list[float]:
        return list(self._devs)

    def evaluate(self, deviation: float) -> float:
        return evaluate(self, deviation)

    def derivative(self, deviation: float, direction: float | None = None) -> float:
        return derivative(self, deviation, direction)


def evaluate(curve: DeliveryCurve, deviation: float) -> float:
    """Delivery fraction at ``deviation`` Hz, clamped to +-1 beyond the knots."""
    return float(np.interp(deviation, curve._devs, curve._fracs))


def derivative(curve: DeliveryCurve, deviation: float,
               direction: float | None = None) -> float:
    """Slope of the active segment (per Hz).

    At a knot the slope of the segment on the side ``direction`` points to is
    returned (typically the sign of the frequency rate); with no hint, or a
    zero hint, the left segment is used.
    """
    devs = curve._devs
    j = bisect.bisect_left(devs, deviation)
    if j < len(devs) and devs[j] == deviation:
        return curve._slopes[j + 1] if direction is not None and direction > 0 \
            else curve._slopes[j]
    return curve._slopes[j]


def required_quantity(curve: DeliveryCurve, deviation: float, c_agg: float) -> float:
    """Required aggregate delivery in MW, h(deviation) * c_agg."""
    if not c_agg > 0:
        raise ValueError(f"contracted quantity must be positive, got {c_agg}")
    return evaluate(curve, deviation) * c_agg
