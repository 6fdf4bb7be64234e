"""Closed-form recovery thresholds and the (b, rho) phase classifier.

All logarithms are natural.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .model import ModelParams


def kl_bernoulli(x: float, y: float) -> float:
    """Binary relative entropy ``d(x || y)``, with ``0 log 0 = 0``; infinite off the support."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"arguments must lie in [0, 1], got {x}, {y}")

    def term(a, b):
        if a == 0.0:
            return 0.0
        if b == 0.0:
            return math.inf
        return a * math.log(a / b)

    return term(x, y) + term(1.0 - x, 1.0 - y)


def tau_star(params: ModelParams) -> float:
    """Edge-density threshold used by the exact-recovery condition."""
    n, K, p, q = params.n, params.K, params.p, params.q
    if not 0.0 < q < p < 1.0:
        raise DomainError("tau_star needs 0 < q < p < 1")
    num = math.log((1.0 - q) / (1.0 - p)) + math.log(n / K) / K
    return num / math.log(p * (1.0 - q) / (q * (1.0 - p)))


def exact_recovery_ratio(params: ModelParams) -> float:
    """``K d(tau* || q) / log n``; exact recovery is information-theoretically possible above 1."""
    if params.p == params.q:
        return 0.0
    return params.K * kl_bernoulli(tau_star(params), params.q) / math.log(params.n)


def weak_recovery_ratio(params: ModelParams) -> float:
    """``K d(p || q) / (2 log(n/K))``."""
    if params.K >= params.n:
        raise DomainError("weak recovery ratio needs K < n")
    return params.K * kl_bernoulli(params.p, params.q) / (2.0 * math.log(params.n / params.K))


def c_alpha(alpha: float) -> float:
    """``2 (alpha-1)^2 / (1 - alpha + alpha log alpha)``, equal to 4 at ``alpha = 1``."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    u = alpha - 1.0
    if abs(u) < 1e-4:
        # series of the denominator: u^2/2 - u^3/6 + u^4/12 - u^5/20
        den = u * u * (0.5 - u / 6.0 + u * u / 12.0 - u**3 / 20.0)
        return 2.0 * u * u / den if u != 0 else 4.0
    return 2.0 * u * u / (1.0 - alpha + alpha * math.log(alpha))


def lambda_weak_it(params: ModelParams, eps: float = 0.0) -> float:
    """Signal-to-noise level above which weak recovery is information-theoretically possible."""
    if params.q <= 0:
        raise DomainError("needs q > 0")
    K, n = params.K, params.n
    return (c_alpha(params.p / params.q) + eps) * (K / n) * math.log(n / K)


def big_i(x: float, y: float) -> float:
    """``x - y log(e x / y)``, the Poisson rate function."""
    if not (x > 0 and y > 0):
        raise DomainError("big_i needs positive arguments")
    return x - y * (1.0 + math.log(x / y))


def tau0(a: float, b: float) -> float:
    """Logarithmic mean ``(a - b) / log(a / b)``."""
    if not (a > b > 0):
        raise DomainError("tau0 needs a > b > 0")
    return (a - b) / math.log(a / b)


def rho_bp(c: float) -> float:
    """Smallest size coefficient at which the belief-propagation curve meets the exact-recovery curve."""
    if not c > 1:
        raise DomainError("rho_bp needs c > 1")
    lc = math.log(c)
    return (1.0 - (c - 1.0) / lc * math.log(math.e * lc / (c - 1.0))) / (math.e * (c - 1.0) ** 2)


def rho_bp_residual(c: float) -> float:
    """``rho I(b, tau0(c b, b)) - 1`` on the belief-propagation curve at ``rho = rho_bp(c)``."""
    rho = rho_bp(c)
    b = 1.0 / (math.e * (c - 1.0) ** 2 * rho * rho)
    return rho * big_i(b, tau0(c * b, b)) - 1.0


class Region(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


@dataclass(frozen=True)
class PhasePoint:
    """Point of the regime ``K = rho n / log n``, ``q = b log^2 n / n``, ``p = c q``."""

    b: float
    rho: float
    c: float

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError("b must be positive")
        if not 0 < self.rho < 1:
            raise DomainError("rho must lie in (0, 1)")
        if not self.c > 1:
            raise DomainError("c must exceed 1")

    @property
    def lam(self) -> float:
        return self.rho**2 * (self.c - 1.0) ** 2 * self.b

    @property
    def exact_ratio(self) -> float:
        return self.rho * big_i(self.b, tau0(self.c * self.b, self.b))


def classify_phase(point: PhasePoint) -> Region:
    """Region by the local-algorithm curve (``lam`` vs ``1/e``) and the exact-recovery curve (vs 1).

    Points on a curve count as above it.
    """
    bp_ok = point.lam >= 1.0 / math.e
    exact_ok = point.exact_ratio >= 1.0
    if bp_ok:
        return Region.I if exact_ok else Region.II
    return Region.III if exact_ok else Region.IV


@dataclass(frozen=True)
class ThresholdReport:
    lam: float
    weak_ratio: float
    exact_ratio: float
    tau_star: float
    weak_it: bool
    exact_it: bool
    bp_local: bool
    spectral_ks: bool


def threshold_report(params: ModelParams) -> ThresholdReport:
    """All threshold quantities for one instance shape; flags use ``>``."""
    lam = params.lam
    weak = weak_recovery_ratio(params)
    if params.p > params.q:
        ts = tau_star(params)
        exact = exact_recovery_ratio(params)
    else:
        ts, exact = math.nan, 0.0
    return ThresholdReport(
        lam=lam,
        weak_ratio=weak,
        exact_ratio=exact,
        tau_star=ts,
        weak_it=weak > 1.0,
        exact_it=exact > 1.0,
        bp_local=lam > 1.0 / math.e,
        spectral_ks=lam > 1.0,
    )


def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` inclusive of ``stop`` when it lands on the grid."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise DomainError(f"range must be start:stop:step, got {text!r}") from None
    if not step > 0 or stop < start:
        raise DomainError(f"empty or invalid range {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def phase_grid(c: float, b_values, rho_values):
    """Rows ``(b, rho, region, lam, exact_ratio)`` over the product grid."""
    rows = []
    for b in b_values:
        for rho in rho_values:
            pt = PhasePoint(float(b), float(rho), c)
            rows.append((pt.b, pt.rho, classify_phase(pt).value, pt.lam, pt.exact_ratio))
    return rows
