"""Conservative polynomial ODE systems built from interaction sets.

A system is a list of interactions. Each interaction ``p`` is a set of
distinct variables together with one real coupling per member, and
contributes the term ``alpha[p -> i] * prod(x[j] for j in p if j != i)`` to
the right-hand side of every member ``i``. When the couplings of every
interaction sum to zero, the flow is divergence free and conserves
``sum(x**2)``, which is what makes the Hermite embedding unitary.

Indices are 0-based in Python and 1-based in the JSON file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ZERO_SUM_TOL",
    "Interaction",
    "OdeSystem",
    "ValidationReport",
    "Trajectory",
    "InvalidSystemError",
    "IntegrationError",
    "validate_system",
    "rhs",
    "weight_drift",
    "rescale",
    "dopri5",
    "integrate_reference",
    "random_system",
    "load_system",
    "save_system",
    "system_from_dict",
    "system_to_dict",
]

ZERO_SUM_TOL = 1e-12
LARGE_DEGREE_WARNING = 6


class InvalidSystemError(ValueError):
    """Raised when an operation needs a valid system and gets an invalid one."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = "; ".join(f"{rule}: {detail}" for rule, detail in report.violations)
        super().__init__(f"invalid system ({lines})")


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Interaction:
    """One interaction set with its per-member couplings (0-based members)."""

    members: tuple[int, ...]
    couplings: tuple[float, ...]

    def __post_init__(self):
        members = tuple(int(i) for i in self.members)
        couplings = tuple(float(a) for a in self.couplings)
        if len(members) != len(couplings):
            raise ValueError("members and couplings must have equal length")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "couplings", couplings)

    @classmethod
    def from_dict(cls, alpha: Mapping[int, float]) -> "Interaction":
        """Build from ``{member: coupling}``; members are sorted."""
        items = sorted((int(k), float(v)) for k, v in alpha.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))

    @property
    def size(self) -> int:
        return len(self.members)

    def coupling(self, i: int) -> float:
        return self.couplings[self.members.index(i)]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.members, self.couplings))


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[tuple[str, str], ...]
    warnings: tuple[str, ...] = ()
    d: int | None = None
    c: int | None = None
    eta: float | None = None

    def __str__(self):
        if self.ok:
            return f"ok: d={self.d}, c={self.c}, eta={self.eta:.17g}"
        return "\n".join(f"{rule}: {detail}" for rule, detail in self.violations)


@dataclass(frozen=True)
class OdeSystem:
    """An interaction-set ODE system over ``n_vars`` variables.

    Construction does not validate; call :func:`validate_system` (or any
    operation that requires a valid system) to check the structural rules.
    """

    n_vars: int
    interactions: tuple[Interaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "n_vars", int(self.n_vars))
        object.__setattr__(self, "interactions", tuple(self.interactions))

    @property
    def d(self) -> int:
        return max((p.size for p in self.interactions), default=0)

    @property
    def c(self) -> int:
        counts = np.zeros(self.n_vars, dtype=int)
        for p in self.interactions:
            for i in p.members:
                if 0 <= i < self.n_vars:
                    counts[i] += 1
        return int(counts.max(initial=0))

    @property
    def eta(self) -> float:
        return max((abs(a) for p in self.interactions for a in p.couplings), default=0.0)

    def require_valid(self) -> ValidationReport:
        report = validate_system(self)
        if not report.ok:
            raise InvalidSystemError(report)
        return report

    # Compiled term tables for fast evaluation, grouped by interaction size.
    def _terms(self):
        cached = self.__dict__.get("_term_cache")
        if cached is None:
            groups: dict[int, tuple[list, list, list]] = {}
            for p in self.interactions:
                for i, a in zip(p.members, p.couplings):
                    if a == 0.0:
                        continue
                    others = [j for j in p.members if j != i]
                    tgt, coef, oth = groups.setdefault(len(others), ([], [], []))
                    tgt.append(i)
                    coef.append(a)
                    oth.append(others)
            cached = []
            for k, (t, a, o) in sorted(groups.items()):
                scatter = np.zeros((len(t), self.n_vars))
                scatter[np.arange(len(t)), t] = 1.0
                cached.append((np.array(a), np.array(o, dtype=int).reshape(len(t), k), scatter))
            object.__setattr__(self, "_term_cache", cached)
        return cached


def _fmt_members(members: Iterable[int]) -> str:
    return "{" + ",".join(str(i + 1) for i in members) + "}"


def validate_system(sys: OdeSystem) -> ValidationReport:
    """Check interaction-set conditions 1-3 and return every violation found.

    Never raises for a structurally malformed candidate; each problem is a
    report entry tagged with the rule it breaks.
    """
    violations: list[tuple[str, str]] = []
    warnings: list[str] = []
    n = sys.n_vars
    if n < 1:
        violations.append(("size", f"N must be >= 1, got {n}"))
    if not sys.interactions:
        violations.append(("size", "system has no interactions"))

    membership = np.zeros(max(n, 0), dtype=int)
    seen: dict[frozenset, int] = {}
    for k, p in enumerate(sys.interactions):
        label = _fmt_members(p.members)
        key = frozenset(p.members)
        if key in seen:
            violations.append(("members", f"interaction #{k} {label} duplicates interaction #{seen[key]}"))
        seen.setdefault(key, k)
        if p.size < 2:
            violations.append(("condition 1", f"interaction #{k} {label} has {p.size} member(s), needs >= 2"))
        if len(set(p.members)) != p.size:
            violations.append(("members", f"interaction #{k} {label} repeats a variable"))
        elif list(p.members) != sorted(p.members):
            violations.append(("members", f"interaction #{k} {label} is not in ascending order"))
        bad = [i for i in p.members if not 0 <= i < n]
        if bad:
            violations.append(("members", f"interaction #{k} {label} references variables outside 1..{n}"))
        for i in set(p.members):
            if 0 <= i < n:
                membership[i] += 1
        if not any(p.couplings):
            violations.append(("empty", f"interaction #{k} {label} has all couplings zero"))
        total = math.fsum(p.couplings)
        if abs(total) > ZERO_SUM_TOL:
            violations.append(("condition 3", f"interaction #{k} {label}: sum of couplings = {total:.17g} != 0"))
        if not all(math.isfinite(a) for a in p.couplings):
            violations.append(("condition 3", f"interaction #{k} {label} has a non-finite coupling"))

    for i in np.flatnonzero(membership == 0):
        violations.append(("condition 2", f"variable {i + 1} is in no interaction"))

    if violations:
        return ValidationReport(False, tuple(violations), tuple(warnings))
    d = sys.d
    if d > LARGE_DEGREE_WARNING:
        warnings.append(f"interaction size d={d} > {LARGE_DEGREE_WARNING}: Fock bases grow very quickly")
    return ValidationReport(True, (), tuple(warnings), d=d, c=sys.c, eta=sys.eta)


def _check_state(sys: OdeSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (sys.n_vars,):
        raise ValueError(f"state has trailing dimension {x.shape[-1:]} but system has N={sys.n_vars}")
    return x


def rhs(sys: OdeSystem, x) -> np.ndarray:
    """Evaluate ``F(x)``. Accepts a single state or a batch of shape (..., N)."""
    x = _check_state(sys, x)
    out = np.zeros_like(x)
    for coeffs, others, scatter in sys._terms():
        out += (coeffs * np.prod(x[..., others], axis=-1)) @ scatter
    return out


def weight_drift(sys: OdeSystem, x) -> np.ndarray | float:
    """Return ``sum_i x_i F_i(x)``; zero for every valid system.

    This is ``-wdot / (2 w)`` for the Hermite weight ``w = exp(-|x|^2)``.
    """
    x = _check_state(sys, x)
    val = np.sum(x * rhs(sys, x), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def rescale(sys: OdeSystem, x0, delta: float) -> tuple[OdeSystem, np.ndarray]:
    """Apply ``x -> delta * x``: couplings become ``alpha / delta**(|p| - 2)``."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    x0 = _check_state(sys, x0)
    scaled = tuple(
        Interaction(p.members, tuple(a / delta ** (p.size - 2) for a in p.couplings))
        for p in sys.interactions
    )
    return OdeSystem(sys.n_vars, scaled), delta * x0


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    max_error_estimate: float = 0.0

    def __len__(self):
        return len(self.times)


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [np.asarray(row) for row in [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri5(
    f: Callable[[np.ndarray], np.ndarray],
    y0,
    t_grid: Sequence[float],
    rel_tol: float = 1e-10,
    abs_tol: float | None = None,
    max_steps: int = 10_000_000,
) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration of an autonomous ``y' = f(y)``.

    Steps are clipped to land exactly on every grid time. The error norm is
    the max-norm of the embedded estimate scaled by
    ``abs_tol + rel_tol * max(|y|, |y_new|)``.
    """
    y = np.array(y0, dtype=float)
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if times[0] != 0.0 or np.any(np.diff(times) < 0):
        raise ValueError("t_grid must be ascending and start at 0")
    if abs_tol is None:
        abs_tol = rel_tol * 1e-3 * max(1.0, float(np.max(np.abs(y), initial=0.0)))
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state")

    points = np.empty((times.size, y.size))
    points[0] = y
    k1 = f(y)
    n_rhs, n_steps, n_rej, max_err = 1, 0, 0, 0.0

    # Hairer-Wanner starting step.
    scale = abs_tol + rel_tol * np.abs(y)
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(k1) / scale)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1

    t = 0.0
    k = np.empty((7, y.size))
    for idx in range(1, times.size):
        t_target = times[idx]
        while t < t_target:
            if n_steps + n_rej >= max_steps:
                raise IntegrationError(f"exceeded {max_steps} steps at t={t}")
            last = t + h >= t_target
            h_step = t_target - t if last else h
            if h_step < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t} (stiffness failure)")
            k[0] = k1
            for s in range(1, 7):
                k[s] = f(y + h_step * (_A[s] @ k[:s]))
            n_rhs += 6
            y_new = y + h_step * (_B5[:6] @ k[:6])
            err_vec = h_step * (_E @ k)
            err = np.max(np.abs(err_vec) / (abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))))
            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                if not np.all(np.isfinite(y)):
                    raise IntegrationError(f"non-finite state at t={t}")
                h = 0.2 * h_step
                n_rej += 1
                continue
            if err <= 1.0:
                t = t_target if last else t + h_step
                y = y_new
                k1 = k[6].copy()
                n_steps += 1
                max_err = max(max_err, float(err))
                factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                # a clipped final step says nothing about the natural step size
                if not last or factor < 1.0:
                    h = h_step * factor
            else:
                h = h_step * max(0.2, 0.9 * err ** -0.2)
                n_rej += 1
        points[idx] = y
    return Trajectory(times, points, n_steps, n_rej, n_rhs, max_err)


def integrate_reference(
    sys: OdeSystem,
    x0,
    t_end: float,
    rel_tol: float = 1e-10,
    t_grid: Sequence[float] | None = None,
) -> Trajectory:
    """Integrate the system classically on ``t_grid`` (default ``[0, t_end]``).

    Grid times must lie in ``[0, t_end]``; time 0 is added when missing.
    """
    if not 1e-14 <= rel_tol <= 1e-3:
        raise ValueError(f"rel_tol must be in [1e-14, 1e-3], got {rel_tol}")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    x0 = _check_state(sys, x0)
    if t_grid is None:
        grid = np.array([0.0]) if t_end == 0 else np.array([0.0, float(t_end)])
    else:
        grid = np.asarray(t_grid, dtype=float)
        if np.any(grid < 0) or np.any(grid > t_end * (1 + 1e-15)):
            raise ValueError("t_grid must lie within [0, t_end]")
        grid = np.unique(np.concatenate([[0.0], grid]))
    return dopri5(lambda y: rhs(sys, y), x0, grid, rel_tol)


def random_system(
    rng: np.random.Generator,
    n_vars: int,
    max_size: int,
    n_interactions: int | None = None,
    max_coupling: float = 1.0,
) -> OdeSystem:
    """Draw a random valid system with interaction sizes in ``[2, max_size]``.

    Couplings are uniform, then centred per interaction so they sum to zero;
    member sets are distinct, and variables left uncovered are paired with a
    random partner.
    """
    if n_vars < 2 or max_size < 2:
        raise ValueError("need n_vars >= 2 and max_size >= 2")
    max_size = min(max_size, n_vars)
    if n_interactions is None:
        n_interactions = int(rng.integers(1, 2 * n_vars + 1))

    def draw(members):
        a = rng.uniform(-max_coupling, max_coupling, size=len(members))
        a -= a.mean()
        a[-1] = -math.fsum(a[:-1])
        return Interaction(tuple(sorted(members)), tuple(a))

    inter: dict[frozenset, Interaction] = {}
    for _ in range(n_interactions):
        size = int(rng.integers(2, max_size + 1))
        members = frozenset(int(i) for i in rng.choice(n_vars, size=size, replace=False))
        if members not in inter:
            inter[members] = draw(list(members))
    covered = {i for key in inter for i in key}
    for i in range(n_vars):
        if i in covered:
            continue
        partners = [k for k in range(n_vars) if k != i and frozenset((i, k)) not in inter]
        j = int(rng.choice(partners))
        inter[frozenset((i, j))] = draw([i, j])
        covered.update((i, j))
    return OdeSystem(n_vars, tuple(inter.values()))


def system_from_dict(data: Mapping) -> OdeSystem:
    n = int(data["N"])
    inter = []
    for entry in data["interactions"]:
        members = [int(v) - 1 for v in entry["vars"]]
        alpha = {int(k) - 1: float(v) for k, v in entry["alpha"].items()}
        unknown = set(alpha) - set(members)
        if unknown:
            raise ValueError(f"alpha keys {sorted(k + 1 for k in unknown)} not in vars {entry['vars']}")
        inter.append(Interaction(tuple(members), tuple(alpha.get(i, 0.0) for i in members)))
    return OdeSystem(n, tuple(inter))


def system_to_dict(sys: OdeSystem) -> dict:
    return {
        "N": sys.n_vars,
        "interactions": [
            {"vars": [i + 1 for i in p.members], "alpha": {str(i + 1): a for i, a in zip(p.members, p.couplings)}}
            for p in sys.interactions
        ],
    }


def load_system(path) -> tuple[OdeSystem, np.ndarray | None]:
    """Read a system JSON file; returns the system and its optional ``x0``."""
    data = json.loads(Path(path).read_text())
    x0 = data.get("x0")
    return system_from_dict(data), (None if x0 is None else np.asarray(x0, dtype=float))


def save_system(path, sys: OdeSystem, x0=None) -> None:
    data = system_to_dict(sys)
    if x0 is not None:
        data["x0"] = [float(v) for v in x0]
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
