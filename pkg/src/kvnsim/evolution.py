"""Time evolution under the truncated Hamiltonian and oracle comparison.

``exp(-i H t) = exp(A t)`` for ``H = i A``, so the propagator is real
orthogonal. It is applied with an adaptive Lanczos-Krylov scheme; complex
states are propagated as two real vectors.
"""

from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .fock import FockBasis, ObservableSpec, StateVector, encode_observable, encode_position, hermite_table, position_norm
from .hamiltonian import SparseHermitianMatrix, build_hamiltonian
from .krylov import lanczos_antisymmetric
from .ode import OdeSystem, Trajectory, integrate_reference

__all__ = [
    "KrylovConvergenceError",
    "EvolutionResult",
    "OutputSeries",
    "ComparisonTable",
    "SweepTable",
    "expm_krylov",
    "evolve",
    "output_series",
    "classical_observable",
    "compare",
    "convergence_sweep",
]

DEFAULT_KRYLOV_DIM = 30
MAX_SUBSTEPS = 100_000
REFERENCE_REL_TOL = 1e-12


class KrylovConvergenceError(RuntimeError):
    def __init__(self, achieved: float, t: float):
        self.achieved = achieved
        super().__init__(f"Krylov propagation stalled at t={t:.6g}; achieved error estimate {achieved:.3e}")


def _phi1_column(T: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """``exp(tau T) e_1`` and ``tau phi_1(tau T) e_1`` from one augmented exponential."""
    k = T.shape[0]
    aug = np.zeros((k + 1, k + 1))
    aug[:k, :k] = tau * T
    aug[0, k] = tau
    E = scipy.linalg.expm(aug)
    return E[:k, 0], E[:k, k]


def expm_krylov(
    A,
    v: np.ndarray,
    t: float,
    tol: float = 1e-10,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    max_substeps: int = MAX_SUBSTEPS,
) -> tuple[np.ndarray, int]:
    """Apply ``exp(t A)`` to a real vector for real antisymmetric ``A``.

    Substeps are accepted when the Lanczos residual bound
    ``beta * h_{k+1,k} * |e_k^T tau phi_1(tau T) e_1|`` is at most
    ``tol * tau / t``, so the accumulated error stays below ``tol * |v|``.
    Returns the propagated vector and the number of substeps.
    """
    w = np.array(v, dtype=float)
    if t == 0 or A.shape[0] == 0 or getattr(A, "nnz", 1) == 0:
        return w, 0
    sign = 1.0 if t > 0 else -1.0
    total = abs(t)
    done = 0.0
    tau = total
    steps = 0
    beta0 = float(np.linalg.norm(w))
    if beta0 == 0:
        return w, 0
    while done < total * (1 - 1e-15):
        beta = float(np.linalg.norm(w))
        res = lanczos_antisymmetric(A, w, krylov_dim)
        T = sign * res.projected
        tau = min(tau, total - done)
        while True:
            steps += 1
            if steps > max_substeps:
                raise KrylovConvergenceError(err, done)
            col, phi = _phi1_column(T, tau)
            err = beta * res.beta_next * abs(phi[-1])
            allowed = tol * beta0 * tau / total
            if res.breakdown or err <= allowed:
                break
            shrink = 0.9 * (allowed / err) ** (1.0 / T.shape[0])
            tau *= min(0.9, max(0.2, shrink))
        w = res.basis @ (beta * col)
        done += tau
        if not res.breakdown and err > 0:
            grow = 0.9 * (allowed / err) ** (1.0 / T.shape[0])
            tau *= min(2.0, max(1.0, grow))
        else:
            tau = total - done
    return w, steps


def _apply(A, psi: np.ndarray, t: float, tol: float, krylov_dim: int) -> tuple[np.ndarray, int]:
    if np.iscomplexobj(psi):
        re, n1 = expm_krylov(A, psi.real, t, tol, krylov_dim)
        if np.any(psi.imag):
            im, n2 = expm_krylov(A, psi.imag, t, tol, krylov_dim)
        else:
            im, n2 = np.zeros_like(re), 0
        return re + 1j * im, n1 + n2
    return expm_krylov(A, psi, t, tol, krylov_dim)


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray | None  # (len(times), dim) or None in streaming mode
    norms: np.ndarray
    basis: FockBasis
    krylov_dim: int
    substeps: int
    outputs: dict[str, np.ndarray] = field(default_factory=dict)

    def state(self, k: int) -> StateVector:
        if self.states is None:
            raise ValueError("states were not stored (streaming mode)")
        return StateVector(self.states[k], self.basis)

    @property
    def norm_drift(self) -> np.ndarray:
        return np.abs(self.norms - self.norms[0])


def evolve(
    H: SparseHermitianMatrix,
    psi0: StateVector,
    t_grid: Sequence[float],
    tol: float = 1e-10,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    store_states: bool = True,
    observables: dict[str, StateVector] | None = None,
) -> EvolutionResult:
    """``psi(t) = exp(-i H t) psi(0)`` on an ascending grid of times ``>= 0``.

    With ``store_states=False`` only norms and ``<c|psi(t)>`` for the given
    ``observables`` are kept.
    """
    if not 1e-13 <= tol <= 1e-6:
        raise ValueError(f"tol must be in [1e-13, 1e-6], got {tol}")
    if psi0.basis != H.basis:
        raise ValueError("state and Hamiltonian live on different bases")
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("t_grid must be ascending and non-negative")
    observables = observables or {}
    psi = psi0.amplitudes.copy()
    states = np.empty((times.size, psi.size), dtype=psi.dtype) if store_states else None
    norms = np.empty(times.size)
    outputs = {name: np.empty(times.size, dtype=complex) for name in observables}
    prev, substeps = 0.0, 0
    for k, t in enumerate(times):
        psi, n = _apply(H.generator, psi, t - prev, tol, krylov_dim)
        substeps += n
        prev = t
        if states is not None:
            states[k] = psi
        norms[k] = np.linalg.norm(psi)
        for name, c in observables.items():
            outputs[name][k] = np.vdot(c.amplitudes, psi)
    return EvolutionResult(times, states, norms, H.basis, krylov_dim, substeps, outputs)


@dataclass(frozen=True)
class OutputSeries:
    times: np.ndarray
    values: np.ndarray
    imag_residue: float


def output_series(result: EvolutionResult, c_state: StateVector, L: float, name: str | None = None) -> OutputSeries:
    """``q(t) = sqrt(L) <c|psi(t)>``; raises if the imaginary part exceeds 1e-9."""
    if name is not None:
        raw = result.outputs[name]
    else:
        if result.states is None:
            raise ValueError("need stored states or a named streaming output")
        raw = result.states @ np.conj(c_state.amplitudes)
    q = math.sqrt(L) * np.asarray(raw, dtype=complex)
    residue = float(np.max(np.abs(q.imag), initial=0.0))
    if residue >= 1e-9:
        raise ValueError(f"output has imaginary residue {residue:.3e} >= 1e-9")
    return OutputSeries(result.times, q.real.copy(), residue)


def classical_observable(traj: Trajectory, obs: ObservableSpec) -> np.ndarray:
    """``g(t) = sum_n c_n prod_i p_{n_i}(x_i(t))`` along a trajectory."""
    n_vars = traj.points.shape[1]
    occ, coeffs = obs.occupation_array(n_vars)
    table = hermite_table(max(obs.degree_cap, 0), traj.points)  # (b+1, K, N)
    cols = np.arange(n_vars)
    out = np.zeros(len(traj.times))
    for term, c in zip(occ, coeffs):
        if c == 0:
            continue
        out += c * np.prod(table[term, :, cols], axis=0)
    return out


@dataclass
class ComparisonTable:
    times: np.ndarray
    quantum: np.ndarray
    classical: np.ndarray
    abs_error: np.ndarray
    norm_drift: np.ndarray
    L_drift: np.ndarray
    L: float
    max_norm_time: float  # ||H_m||_max * T
    imag_residue: float
    build_seconds: float = 0.0
    evolve_seconds: float = 0.0

    header = "t,quantum,classical,abs_error,norm_drift,L_drift"

    @property
    def max_error(self) -> float:
        return float(np.max(self.abs_error, initial=0.0))

    def to_csv(self, path=None) -> str:
        cols = (self.times, self.quantum, self.classical, self.abs_error, self.norm_drift, self.L_drift)
        lines = [self.header] + [",".join(f"{v:.17g}" for v in row) for row in zip(*cols)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def compare(
    sys: OdeSystem,
    x0,
    obs: ObservableSpec,
    m: int,
    T: float,
    steps: int,
    tol: float = 1e-10,
    ref_tol: float = REFERENCE_REL_TOL,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
) -> ComparisonTable:
    """Embedded evolution against the classical reference on ``steps + 1`` uniform times.

    ``L`` is frozen at ``t = 0``; ``L_drift`` reports ``L(x(t)) / L(x(0)) - 1``
    recomputed from the classical trajectory.
    """
    if m < obs.degree_cap:
        raise ValueError(f"m={m} is below the observable degree b={obs.degree_cap}")
    if steps < 1 and T > 0:
        raise ValueError("steps must be >= 1")
    grid = np.linspace(0.0, T, steps + 1) if T > 0 else np.zeros(1)
    start = time.perf_counter()
    basis = FockBasis(sys.n_vars, m)
    H = build_hamiltonian(sys, basis)
    psi0, L = encode_position(basis, x0)
    c_state = encode_observable(basis, obs)
    built = time.perf_counter()
    result = evolve(H, psi0, grid, tol, krylov_dim, store_states=False, observables={"c": c_state})
    evolved = time.perf_counter()
    q = output_series(result, c_state, L, name="c")

    traj = integrate_reference(sys, x0, T, ref_tol, grid)
    g = classical_observable(traj, obs)
    L_t = np.array([position_norm(basis, x) for x in traj.points])
    return ComparisonTable(
        times=grid,
        quantum=q.values,
        classical=g,
        abs_error=np.abs(q.values - g),
        norm_drift=result.norm_drift,
        L_drift=L_t / L - 1.0,
        L=L,
        max_norm_time=H.max_abs_entry() * T,
        imag_residue=q.imag_residue,
        build_seconds=built - start,
        evolve_seconds=evolved - built,
    )


@dataclass
class SweepTable:
    m: np.ndarray
    max_error: np.ndarray
    dim: np.ndarray
    build_seconds: np.ndarray
    evolve_seconds: np.ndarray
    tables: list[ComparisonTable] = field(default_factory=list, repr=False)

    header = "m,max_error,dim,build_seconds,evolve_seconds"

    def to_csv(self, path=None, timings: bool = True) -> str:
        lines = [self.header]
        for m, e, d, b, ev in zip(self.m, self.max_error, self.dim, self.build_seconds, self.evolve_seconds):
            b, ev = (f"{b:.6f}", f"{ev:.6f}") if timings else ("", "")
            lines.append(f"{m},{e:.17g},{d},{b},{ev}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def convergence_sweep(
    sys: OdeSystem,
    x0,
    obs: ObservableSpec,
    T: float,
    m_list: Sequence[int],
    tol: float = 1e-10,
    steps: int = 20,
    max_workers: int | None = None,
) -> SweepTable:
    """Max-over-time error ``max_t |q - g|`` for each truncation in ``m_list``."""
    m_list = [int(m) for m in m_list]
    if m_list != sorted(m_list):
        raise ValueError("m_list must be ascending")
    if m_list and m_list[0] < obs.degree_cap:
        raise ValueError("every m must be >= the observable degree")

    def run(m):
        return compare(sys, x0, obs, m, T, steps, tol)

    if max_workers and max_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers) as pool:
            tables = list(pool.map(run, m_list))
    else:
        tables = [run(m) for m in m_list]
    return SweepTable(
        m=np.array(m_list),
        max_error=np.array([t.max_error for t in tables]),
        dim=np.array([math.comb(sys.n_vars + m, m) for m in m_list]),
        build_seconds=np.array([t.build_seconds for t in tables]),
        evolve_seconds=np.array([t.evolve_seconds for t in tables]),
        tables=tables,
    )
