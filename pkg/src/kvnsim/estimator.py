"""Truncation selection and closed-form query-cost arithmetic.

All logarithms are natural. Cost expressions are the literal bracketed
forms of asymptotic bounds, so they are meaningful only up to constant
factors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .ode import OdeSystem, rescale

__all__ = [
    "TruncationParams",
    "ResourceEstimate",
    "InequalityCheck",
    "truncation_constant",
    "select_truncation",
    "verify_truncation",
    "block_encoding_cost",
    "simulation_query_count",
    "query_function",
    "classical_baseline",
    "estimate",
    "COST_CAVEAT",
]

COST_CAVEAT = "up to Theta-constants"


@dataclass(frozen=True)
class TruncationParams:
    b: int
    eps: float
    T: float
    n0: int
    m: int
    delta: float
    C: float
    candidates: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.n0 < 1 or self.m < self.b or not self.delta > 0:
            raise ValueError(f"inconsistent truncation parameters n0={self.n0}, m={self.m}, delta={self.delta}")
        if not all(math.isfinite(v) for v in (self.eps, self.T, self.delta, self.C)):
            raise ValueError("truncation parameters must be finite")


def truncation_constant(sys: OdeSystem) -> float:
    """``C = 2 eta^2 c d^3 2^{-d/2}`` with the unrescaled ``eta``."""
    d = sys.d
    return 2 * sys.eta**2 * sys.c * d**3 * 2 ** (-d / 2)


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def select_truncation(sys: OdeSystem, b: int, eps: float, T: float) -> TruncationParams:
    """Smallest ``n0`` meeting both sufficient-condition lists; ``m = d n0 + b``, ``Delta = C T m^d``.

    Each list bounds ``n0`` from below; the result is the ceiling of the
    largest candidate, with negative candidates clamped to 1.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if b < 1:
        raise ValueError(f"b must be >= 1, got {b}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    sys.require_valid()
    d, c, eta = sys.d, sys.c, sys.eta
    C = truncation_constant(sys)
    log_inv_eps = math.log(1 / eps)
    candidates = (
        ("ln(1/eps)", log_inv_eps),
        ("b ln(CT)", b * math.log(C * T)),
        ("ln((d+1)^(bd)/sqrt(pi/2))", b * d * math.log(d + 1) - 0.5 * math.log(math.pi / 2)),
        ("4bd-2", 4 * b * d - 2.0),
        ("e^4", math.e**4),
        ("b ln(eta)", b * math.log(eta)),
        ("3b", 3.0 * b),
        ("sqrt(2)/d (e^3/(2 eta c d^3 T))^(1/d) - b/d", math.sqrt(2) / d * (math.e**3 / (2 * eta * c * d**3 * T)) ** (1 / d) - b / d),
    )
    n0 = max(1, math.ceil(max(max(v, 1.0) for _, v in candidates)))
    m = d * n0 + b
    return TruncationParams(b, eps, T, n0, m, C * T * m**d, C, candidates)


@dataclass(frozen=True)
class InequalityCheck:
    """Both sides in log form: ``lhs < rhs`` must hold."""

    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs < self.rhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def verify_truncation(sys: OdeSystem, params: TruncationParams) -> tuple[InequalityCheck, InequalityCheck]:
    """Check ``(2/n0!)(2d)^{-n0} < eps/Delta^b`` and ``gamma^{n0} < eps/Delta^b``.

    ``gamma`` is the largest rescaled coupling ``|alpha| / Delta^{|p|-2}``
    over interactions with ``|p| > 2``; it is 0 for purely pairwise systems.
    Factorials go through ``lgamma``.
    """
    d, n0, delta = sys.d, params.n0, params.delta
    rhs = math.log(params.eps) - params.b * math.log(delta)
    tail = math.log(2) - math.lgamma(n0 + 1) - n0 * math.log(2 * d)
    log_gamma = max(
        (_safe_log(abs(a)) - (p.size - 2) * math.log(delta) for p in sys.interactions if p.size > 2 for a in p.couplings),
        default=-math.inf,
    )
    return (
        InequalityCheck("truncation tail", tail, rhs),
        InequalityCheck("perturbative remainder", n0 * log_gamma, rhs),
    )


def query_function(alpha_t: float, eps: float) -> float:
    """``f(at, eps) = at + ln(1/eps) / ln(e + ln(1/eps)/(at))``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if not alpha_t > 0:
        raise ValueError("alpha * t must be positive")
    L = math.log(1 / eps)
    return alpha_t + L / math.log(math.e + L / alpha_t)


@dataclass(frozen=True)
class ResourceEstimate:
    m: int
    n_vars: int
    sparsity: int
    qubits: int
    subnormalization: float
    alpha: float | None = None
    queries: float | None = None
    t: float | None = None
    eps: float | None = None
    caveat: str = COST_CAVEAT


def block_encoding_cost(sys: OdeSystem, m: int, n_vars: int | None = None) -> ResourceEstimate:
    """Sparsity ``c 2^d m``, ``ceil(m log2 N) + 3`` qubits and subnormalisation ``eta d (m/2)^{d/2}``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = sys.n_vars if n_vars is None else n_vars
    d = sys.d
    return ResourceEstimate(
        m=m,
        n_vars=n,
        sparsity=sys.c * 2**d * m,
        qubits=math.ceil(m * math.log2(n)) + 3,
        subnormalization=sys.eta * d * (m / 2) ** (d / 2),
    )


def simulation_query_count(sys: OdeSystem, m: int, t: float, eps: float, n_vars: int | None = None) -> ResourceEstimate:
    """Block-encoding cost plus ``alpha = (e/4) eta c d (2m)^{d/2+1}`` and ``f(alpha t, eps)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    base = block_encoding_cost(sys, m, n_vars)
    d = sys.d
    alpha = math.e / 4 * sys.eta * sys.c * d * (2 * m) ** (d / 2 + 1)
    return ResourceEstimate(**{**asdict(base), "alpha": alpha, "queries": query_function(alpha * t, eps), "t": t, "eps": eps})


def classical_baseline(T: float, n_vars: int, eps: float, order: int = 4) -> float:
    """Step-count model ``T N (1/eps)^{1/p}`` for an order-``p`` one-step method."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return T * n_vars * (1 / eps) ** (1 / order)


def estimate(sys: OdeSystem, b: int, eps: float, T: float, rk_order: int = 4, rescaled: OdeSystem | None = None) -> dict:
    """One row of the resource table.

    The block encoding and query count take ``eta`` from ``rescaled``, which
    defaults to ``sys`` rescaled by the selected ``Delta``; ``C`` always uses
    the unrescaled system.
    """
    params = select_truncation(sys, b, eps, T)
    if rescaled is None:
        rescaled, _ = rescale(sys, np.zeros(sys.n_vars), params.delta)
    cost = simulation_query_count(rescaled, params.m, T, eps, sys.n_vars)
    checks = verify_truncation(sys, params)
    return {
        "n0": params.n0,
        "m": params.m,
        "delta": params.delta,
        "dim": math.comb(sys.n_vars + params.m, params.m),
        "sparsity": cost.sparsity,
        "qubits": cost.qubits,
        "subnormalization": cost.subnormalization,
        "alpha": cost.alpha,
        "queries": cost.queries,
        "classical": classical_baseline(T, sys.n_vars, eps, rk_order),
        "inequalities_hold": all(c.holds for c in checks),
    }
