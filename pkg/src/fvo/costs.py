"""Asset cost functions and the partial derivatives the feedforward terms need."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple


class CostDerivatives(NamedTuple):
    f_x: float
    f_xx: float
    f_xw: float
    f_xww: float


@dataclass(frozen=True)
class QuadraticCost:
    """f(x, dw) = a*x**2 + b*x + c*x*dw.

    ``c`` couples the cost to the frequency deviation (Hz); the case-study
    family uses ``c = 0``.
    """

    a: float
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"cost coefficient a must be > 0 (strong convexity), got {self.a}")
        if self.b < 0:
            raise ValueError(f"cost coefficient b must be >= 0, got {self.b}")

    def __call__(self, x: float, deviation: float = 0.0) -> float:
        return eval_cost(self, x, deviation)


def eval_cost(cost: QuadraticCost, x: float, deviation: float = 0.0) -> float:
    return cost.a * x * x + cost.b * x + cost.c * x * deviation


def derivatives(cost: QuadraticCost, x: float, deviation: float = 0.0) -> CostDerivatives:
    return CostDerivatives(2.0 * cost.a * x + cost.b + cost.c * deviation,
                           2.0 * cost.a, cost.c, 0.0)


def rho(derivs: CostDerivatives, sigma: int) -> float:
    """Switched inverse curvature sigma / f_xx."""
    if not derivs.f_xx > 0:
        raise ValueError(f"f_xx must be positive, got {derivs.f_xx}")
    return 1.0 / derivs.f_xx if sigma else 0.0
