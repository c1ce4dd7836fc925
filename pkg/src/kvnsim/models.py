"""Mechanical and oscillator models rewritten as conservative interaction systems.

Each constructor returns an :class:`OdeSystem` whose interactions are
zero-sum pairwise (or higher) couplings, together with a transform that
maps physical coordinates to the system variables and back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .fock import ObservableSpec, monomial_observable
from .ode import Interaction, OdeSystem, Trajectory, dopri5, validate_system

__all__ = [
    "HarmonicSpec",
    "DuffingSpec",
    "KuramotoSpec",
    "HarmonicTransform",
    "DuffingTransform",
    "KuramotoTransform",
    "make_harmonic",
    "make_duffing",
    "make_kuramoto",
    "kuramoto_phase_recover",
    "kuramoto_reference",
    "kuramoto_constraint_residual",
    "quadratic_invariant",
    "load_model_spec",
]


def quadratic_invariant(points) -> np.ndarray:
    """``sum_i x_i^2`` per row; conserved by every valid system."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.sum(pts * pts, axis=1)


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


# -- harmonic -------------------------------------------------------------


@dataclass(frozen=True)
class HarmonicSpec:
    """``m_j x_j'' = sum_{k != j} kappa_jk (x_k - x_j) - kappa_jj x_j``; zero off-diagonals mean no spring."""

    masses: tuple[float, ...]
    springs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        masses = tuple(float(v) for v in self.masses)
        springs = tuple(tuple(float(v) for v in row) for row in self.springs)
        n = len(masses)
        if n < 1:
            raise ValueError("need at least one oscillator")
        if len(springs) != n or any(len(row) != n for row in springs):
            raise ValueError(f"spring matrix must be {n}x{n}")
        if any(mj <= 0 for mj in masses):
            raise ValueError("masses must be positive")
        for j in range(n):
            if springs[j][j] <= 0:
                raise ValueError(f"kappa[{j + 1}][{j + 1}] must be positive")
            for k in range(n):
                if springs[j][k] < 0:
                    raise ValueError("spring constants must be nonnegative")
                if springs[j][k] != springs[k][j]:
                    raise ValueError("spring matrix must be symmetric")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "springs", springs)

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(j, k) for j in range(self.n) for k in range(j + 1, self.n) if self.springs[j][k] > 0]

    @classmethod
    def from_dict(cls, data: Mapping) -> "HarmonicSpec":
        return cls(tuple(data["masses"]), tuple(tuple(r) for r in data["springs"]))

    def to_dict(self) -> dict:
        return {"model": "harmonic", "masses": list(self.masses), "springs": [list(r) for r in self.springs]}


@dataclass(frozen=True)
class HarmonicTransform:
    """``X_j = sqrt(kappa_jj) x_j``, ``Y_jk = sqrt(kappa_jk)(x_j - x_k)``, ``V_j = sqrt(m_j) x_j'``."""

    spec: HarmonicSpec

    @property
    def names(self) -> list[str]:
        n = self.spec.n
        return [f"X{j + 1}" for j in range(n)] + [f"Y{j + 1}{k + 1}" for j, k in self.spec.edges] + [f"V{j + 1}" for j in range(n)]

    def _v(self, j: int) -> int:
        return self.spec.n + len(self.spec.edges) + j

    def to_system(self, x, v) -> np.ndarray:
        s = self.spec
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        X = np.sqrt(np.diag(s.springs)) * x
        Y = [math.sqrt(s.springs[j][k]) * (x[j] - x[k]) for j, k in s.edges]
        V = np.sqrt(s.masses) * v
        return np.concatenate([X, Y, V])

    def from_system(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        n = self.spec.n
        x = z[..., :n] / np.sqrt(np.diag(self.spec.springs))
        v = z[..., self._v(0):] / np.sqrt(self.spec.masses)
        return x, v

    def position_observable(self, j: int) -> ObservableSpec:
        return monomial_observable(len(self.names), {j: 1}, 1 / math.sqrt(self.spec.springs[j][j]))

    def velocity_observable(self, j: int) -> ObservableSpec:
        return monomial_observable(len(self.names), {self._v(j): 1}, 1 / math.sqrt(self.spec.masses[j]))


def make_harmonic(spec: HarmonicSpec) -> tuple[OdeSystem, HarmonicTransform]:
    """Pairwise system on ``(X, Y, V)``.

    Interactions: ``{X_j, V_j}`` with ``+-sqrt(kappa_jj/m_j)``; for each edge
    ``j < k``, ``{Y_jk, V_j}`` with ``+-sqrt(kappa_jk/m_j)`` and
    ``{Y_jk, V_k}`` with ``-+sqrt(kappa_jk/m_k)``. The sign of the ``Y``
    feedback into ``V_k`` follows from ``Y_jk`` being odd in ``j, k``.
    """
    tr = HarmonicTransform(spec)
    n, edges = spec.n, spec.edges
    V = tr._v
    inter = []
    for j in range(n):
        a = math.sqrt(spec.springs[j][j] / spec.masses[j])
        inter.append(Interaction.from_dict({j: a, V(j): -a}))
    for e, (j, k) in enumerate(edges):
        y = n + e
        aj = math.sqrt(spec.springs[j][k] / spec.masses[j])
        ak = math.sqrt(spec.springs[j][k] / spec.masses[k])
        inter.append(Interaction.from_dict({y: aj, V(j): -aj}))
        inter.append(Interaction.from_dict({y: -ak, V(k): ak}))
    system = OdeSystem(2 * n + len(edges), tuple(inter))
    system.require_valid()
    return system, tr


# -- Duffing --------------------------------------------------------------


@dataclass(frozen=True)
class DuffingSpec:
    """``m_j x_j'' = -kappa_j x_j - 2 lambda_j x_j^3 - sum_k [kappa_jk d + 2 lambda_jk d^3]``, ``d = x_j - x_k``.

    ``edges`` maps ``(j, k)`` with ``j < k`` to ``(kappa_jk, lambda_jk)``.
    """

    masses: tuple[float, ...]
    kappa: tuple[float, ...]
    lam: tuple[float, ...]
    edges: Mapping[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        masses, kappa, lam = (tuple(float(v) for v in seq) for seq in (self.masses, self.kappa, self.lam))
        n = len(masses)
        if n < 1 or len(kappa) != n or len(lam) != n:
            raise ValueError("masses, kappa and lambda must have the same positive length")
        if min(masses + kappa + lam) <= 0:
            raise ValueError("masses, kappa and lambda must be positive")
        edges: dict[tuple[int, int], tuple[float, float]] = {}
        for (j, k), (kj, lj) in dict(self.edges).items():
            j, k = int(j), int(k)
            if j == k or not (0 <= j < n and 0 <= k < n):
                raise ValueError(f"invalid edge ({j + 1}, {k + 1})")
            if kj <= 0 or lj <= 0:
                raise ValueError("edge kappa and lambda must be positive")
            key = _pair(j, k)
            if key in edges and edges[key] != (float(kj), float(lj)):
                raise ValueError(f"edge {key} given twice with different values")
            edges[key] = (float(kj), float(lj))
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "edges", dict(sorted(edges.items())))

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def neighbors(self) -> list[set[int]]:
        out = [set() for _ in range(self.n)]
        for j, k in self.edges:
            out[j].add(k)
            out[k].add(j)
        return out

    @classmethod
    def chain(cls, n: int, mass=1.0, kappa=1.0, lam=0.1, kappa_edge=1.0, lam_edge=0.1) -> "DuffingSpec":
        edges = {(j, j + 1): (kappa_edge, lam_edge) for j in range(n - 1)}
        return cls((mass,) * n, (kappa,) * n, (lam,) * n, edges)

    @classmethod
    def from_dict(cls, data: Mapping) -> "DuffingSpec":
        edges = {(int(e["i"]) - 1, int(e["j"]) - 1): (float(e["kappa"]), float(e["lambda"])) for e in data.get("edges", [])}
        return cls(tuple(data["masses"]), tuple(data["kappa"]), tuple(data["lambda"]), edges)

    def to_dict(self) -> dict:
        return {
            "model": "duffing",
            "masses": list(self.masses),
            "kappa": list(self.kappa),
            "lambda": list(self.lam),
            "edges": [{"i": j + 1, "j": k + 1, "kappa": kj, "lambda": lj} for (j, k), (kj, lj) in self.edges.items()],
        }


@dataclass(frozen=True)
class DuffingTransform:
    """Variables ordered ``X_j, Y_j, X_jk, Y_jk, V_j``.

    ``X_j = sqrt(kappa_j) x_j``, ``Y_j = sqrt(lambda_j) x_j^2``,
    ``X_jk = sqrt(kappa_jk) d``, ``Y_jk = sqrt(lambda_jk) d^2`` with
    ``d = x_j - x_k`` and ``V_j = sqrt(m_j) x_j'``.
    """

    spec: DuffingSpec

    @property
    def names(self) -> list[str]:
        n, pairs = self.spec.n, list(self.spec.edges)
        return (
            [f"X{j + 1}" for j in range(n)]
            + [f"Y{j + 1}" for j in range(n)]
            + [f"X{j + 1}{k + 1}" for j, k in pairs]
            + [f"Y{j + 1}{k + 1}" for j, k in pairs]
            + [f"V{j + 1}" for j in range(n)]
        )

    def index(self, group: str, j: int) -> int:
        n, e = self.spec.n, len(self.spec.edges)
        offsets = {"X": 0, "Y": n, "Xe": 2 * n, "Ye": 2 * n + e, "V": 2 * n + 2 * e}
        return offsets[group] + j

    def to_system(self, x, v) -> np.ndarray:
        s = self.spec
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        diffs = np.array([x[j] - x[k] for j, k in s.edges])
        ke = np.array([kl[0] for kl in s.edges.values()])
        le = np.array([kl[1] for kl in s.edges.values()])
        return np.concatenate(
            [np.sqrt(s.kappa) * x, np.sqrt(s.lam) * x**2, np.sqrt(ke) * diffs, np.sqrt(le) * diffs**2, np.sqrt(s.masses) * v]
        )

    def from_system(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        n = self.spec.n
        return z[..., :n] / np.sqrt(self.spec.kappa), z[..., self.index("V", 0):] / np.sqrt(self.spec.masses)

    def position_observable(self, j: int) -> ObservableSpec:
        return monomial_observable(len(self.names), {j: 1}, 1 / math.sqrt(self.spec.kappa[j]))

    def squared_position_observable(self, j: int) -> ObservableSpec:
        # x_j^2 is linear in Y_j
        return monomial_observable(len(self.names), {self.index("Y", j): 1}, 1 / math.sqrt(self.spec.lam[j]))

    def velocity_observable(self, j: int) -> ObservableSpec:
        return monomial_observable(len(self.names), {self.index("V", j): 1}, 1 / math.sqrt(self.spec.masses[j]))


def make_duffing(spec: DuffingSpec) -> tuple[OdeSystem, DuffingTransform]:
    """Interactions of size 2 and 3 (``d = 3``), each zero-sum.

    Per site ``{X_j, V_j}`` and ``{X_j, Y_j, V_j}`` (``X_j`` gets coupling 0);
    per edge ``j < k`` the pairs ``{X_jk, V_j}``, ``{X_jk, V_k}`` and the
    triples ``{X_jk, Y_jk, V_j}``, ``{X_jk, Y_jk, V_k}``.
    """
    tr = DuffingTransform(spec)
    idx = tr.index
    inter = []
    for j in range(spec.n):
        a = math.sqrt(spec.kappa[j] / spec.masses[j])
        g = 2 * math.sqrt(spec.lam[j] / (spec.masses[j] * spec.kappa[j]))
        inter.append(Interaction.from_dict({idx("X", j): a, idx("V", j): -a}))
        inter.append(Interaction.from_dict({idx("X", j): 0.0, idx("Y", j): g, idx("V", j): -g}))
    for e, ((j, k), (ke, le)) in enumerate(spec.edges.items()):
        xe, ye = idx("Xe", e), idx("Ye", e)
        for site, sign in ((j, 1.0), (k, -1.0)):
            a = sign * math.sqrt(ke / spec.masses[site])
            g = sign * 2 * math.sqrt(le / (spec.masses[site] * ke))
            inter.append(Interaction.from_dict({xe: a, idx("V", site): -a}))
            inter.append(Interaction.from_dict({xe: 0.0, ye: g, idx("V", site): -g}))
    system = OdeSystem(len(tr.names), tuple(inter))
    system.require_valid()
    return system, tr


# -- Kuramoto -------------------------------------------------------------


@dataclass(frozen=True)
class KuramotoSpec:
    """``theta_i' = omega_i - (K/N) sum_{j in S_i} sin(theta_i - theta_j)``."""

    omega: tuple[float, ...]
    coupling: float
    neighbors: tuple[tuple[int, ...], ...]
    theta0: tuple[float, ...]

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        n = len(omega)
        if n < 1:
            raise ValueError("need at least one oscillator")
        neighbors = tuple(tuple(sorted({int(j) for j in s})) for s in self.neighbors)
        theta0 = tuple(float(t) for t in self.theta0)
        if len(neighbors) != n or len(theta0) != n:
            raise ValueError("omega, neighbors and theta0 must have the same length")
        for i, s in enumerate(neighbors):
            if i in s:
                raise ValueError(f"oscillator {i + 1} lists itself as a neighbour")
            if any(not 0 <= j < n for j in s):
                raise ValueError(f"neighbour index out of range for oscillator {i + 1}")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "coupling", float(self.coupling))
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "theta0", theta0)

    @property
    def n(self) -> int:
        return len(self.omega)

    @classmethod
    def all_to_all(cls, omega: Sequence[float], coupling: float, theta0: Sequence[float] | None = None) -> "KuramotoSpec":
        n = len(omega)
        theta0 = tuple(theta0) if theta0 is not None else (0.0,) * n
        return cls(tuple(omega), coupling, tuple(tuple(j for j in range(n) if j != i) for i in range(n)), theta0)

    @classmethod
    def ring(cls, omega: Sequence[float], coupling: float, theta0: Sequence[float] | None = None) -> "KuramotoSpec":
        n = len(omega)
        theta0 = tuple(theta0) if theta0 is not None else (0.0,) * n
        nbrs = tuple(tuple(sorted({(i - 1) % n, (i + 1) % n} - {i})) for i in range(n))
        return cls(tuple(omega), coupling, nbrs, theta0)

    @classmethod
    def from_dict(cls, data: Mapping) -> "KuramotoSpec":
        n = len(data["omega"])
        nbrs = data.get("neighbors")
        nbrs = tuple(tuple(j - 1 for j in s) for s in nbrs) if nbrs is not None else tuple(
            tuple(j for j in range(n) if j != i) for i in range(n)
        )
        return cls(tuple(data["omega"]), data["K"], nbrs, tuple(data.get("theta0", [0.0] * n)))

    def to_dict(self) -> dict:
        return {
            "model": "kuramoto",
            "omega": list(self.omega),
            "K": self.coupling,
            "neighbors": [[j + 1 for j in s] for s in self.neighbors],
            "theta0": list(self.theta0),
        }


@dataclass(frozen=True)
class KuramotoTransform:
    """``x = cos(theta)``, ``y = sin(theta)``, ``z = -x``, ``w = -y``; variable ``4i + (0, 1, 2, 3)``."""

    spec: KuramotoSpec

    @property
    def names(self) -> list[str]:
        return [f"{c}{i + 1}" for i in range(self.spec.n) for c in "xyzw"]

    def to_system(self, theta) -> np.ndarray:
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([c, s, -c, -s], axis=-1).reshape(*np.shape(theta)[:-1], -1)

    def cos_observable(self, i: int) -> ObservableSpec:
        return monomial_observable(4 * self.spec.n, {4 * i: 1})

    def sin_observable(self, i: int) -> ObservableSpec:
        return monomial_observable(4 * self.spec.n, {4 * i + 1: 1})


def make_kuramoto(spec: KuramotoSpec) -> tuple[OdeSystem, np.ndarray]:
    """Polynomial embedding of the phase model on ``4N`` variables.

    Rotations ``{x_i, y_i}`` and ``{z_i, w_i}`` carry ``-+omega_i``; each
    directed neighbour pair ``(i, j)`` contributes four size-4 interactions
    with couplings ``+-K/N`` on two members and 0 on the other two.
    Interactions whose couplings all vanish (``omega_i = 0`` or ``K = 0``)
    are dropped.
    """
    n, q = spec.n, spec.coupling / spec.n
    x, y, z, w = (lambda i, o=o: 4 * i + o for o in range(4))
    inter = []
    for i in range(n):
        om = spec.omega[i]
        if om != 0:
            inter.append(Interaction.from_dict({x(i): -om, y(i): om}))
            inter.append(Interaction.from_dict({z(i): -om, w(i): om}))
        if q == 0:
            continue
        for j in spec.neighbors[i]:
            inter.append(Interaction.from_dict({x(i): q, y(i): -q, w(i): 0.0, z(j): 0.0}))
            inter.append(Interaction.from_dict({x(i): -q, y(i): q, z(i): 0.0, w(j): 0.0}))
            inter.append(Interaction.from_dict({z(i): q, w(i): -q, y(i): 0.0, x(j): 0.0}))
            inter.append(Interaction.from_dict({z(i): -q, w(i): q, x(i): 0.0, y(j): 0.0}))
    system = OdeSystem(4 * n, tuple(inter))
    report = validate_system(system)
    if not report.ok:
        idle = [i + 1 for i in range(n) if spec.omega[i] == 0 and (q == 0 or not _touched(spec, i))]
        hint = f"; oscillators {idle} have zero frequency and no coupling" if idle else ""
        raise ValueError(f"Kuramoto spec gives an invalid system{hint}: {report.violations}")
    return system, KuramotoTransform(spec).to_system(np.array(spec.theta0))


def _touched(spec: KuramotoSpec, i: int) -> bool:
    return bool(spec.neighbors[i]) or any(i in s for s in spec.neighbors)


def kuramoto_constraint_residual(points) -> np.ndarray:
    """Per row: ``max_i max(|x+z|, |y+w|, |x^2+y^2-1|)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = pts.reshape(pts.shape[0], -1, 4)
    xs, ys, zs, ws = (q[..., k] for k in range(4))
    res = np.stack([np.abs(xs + zs), np.abs(ys + ws), np.abs(xs**2 + ys**2 - 1)], axis=-1)
    return res.max(axis=(1, 2))


def kuramoto_phase_recover(traj: Trajectory) -> np.ndarray:
    """``theta_i(t) = atan2(y_i, x_i)`` unwrapped along time, shape ``(K, N)``."""
    pts = np.asarray(traj.points, dtype=float)
    if pts.shape[1] % 4:
        raise ValueError("trajectory does not come from a Kuramoto embedding")
    xs, ys = pts[:, 0::4], pts[:, 1::4]
    r2 = xs**2 + ys**2
    if np.any(r2 < 0.5):
        k, i = np.argwhere(r2 < 0.5)[0]
        raise ValueError(f"constraint broken at sample {k}, oscillator {i + 1}: x^2 + y^2 = {r2[k, i]:.3g}")
    return np.unwrap(np.arctan2(ys, xs), axis=0)


def kuramoto_reference(
    spec: KuramotoSpec, T: float, tol: float = 1e-10, grid: Sequence[float] | None = None
) -> Trajectory:
    """Integrate the phase equations directly; ``points`` holds ``theta(t)``."""
    n, q = spec.n, spec.coupling / spec.n
    omega = np.array(spec.omega)
    src = np.array([i for i in range(n) for _ in spec.neighbors[i]], dtype=int)
    dst = np.array([j for i in range(n) for j in spec.neighbors[i]], dtype=int)

    def f(th):
        out = omega.copy()
        np.subtract.at(out, src, q * np.sin(th[src] - th[dst]))
        return out

    t_grid = np.asarray(grid, dtype=float) if grid is not None else np.array([0.0, T])
    if t_grid[0] != 0:
        t_grid = np.concatenate([[0.0], t_grid])
    return dopri5(f, np.array(spec.theta0), t_grid, tol)


# -- loading --------------------------------------------------------------

_SPECS = {"harmonic": HarmonicSpec, "duffing": DuffingSpec, "kuramoto": KuramotoSpec}


def load_model_spec(path, model: str | None = None):
    """Read a model spec JSON. ``model`` overrides the file's ``"model"`` key."""
    data = json.loads(Path(path).read_text())
    kind = model or data.get("model")
    if kind not in _SPECS:
        raise ValueError(f"unknown model {kind!r}; expected one of {sorted(_SPECS)}")
    return _SPECS[kind].from_dict(data)
