"""Truncated Hamiltonian assembly and its sparsity/norm certificates.

Every term ``alpha k_i prod_j x_j`` carries exactly one momentum factor,
so the truncated Hamiltonian is ``H = i A`` with ``A`` real antisymmetric.
Only ``A`` (the imaginary part of ``H``) is stored.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis
from .krylov import spectral_norm_estimate
from .ode import ZERO_SUM_TOL, OdeSystem

__all__ = [
    "BasisTooLargeError",
    "SparseHermitianMatrix",
    "NormCertificate",
    "build_hamiltonian",
    "split_linear_interaction",
    "norm_certificate",
    "check_number_conserving",
    "load_hamiltonian_csv",
]

DEFAULT_MAX_ENTRIES = 50_000_000


class BasisTooLargeError(MemoryError):
    pass


@dataclass(frozen=True)
class SparseHermitianMatrix:
    """``H = i * generator`` over a ranked Fock basis; ``generator`` is real CSR."""

    generator: sp.csr_matrix
    basis: FockBasis

    purely_imaginary = True

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    @property
    def nnz(self) -> int:
        return self.generator.nnz

    @property
    def hermitian(self) -> bool:
        return self.hermiticity_error() <= 1e-12

    def hermiticity_error(self) -> float:
        """``max |H - H^dagger|``, i.e. ``max |A + A^T|``."""
        diff = (self.generator + self.generator.T).tocoo()
        return float(np.max(np.abs(diff.data), initial=0.0))

    def toarray(self) -> np.ndarray:
        return 1j * self.generator.toarray()

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.generator.indptr)

    def max_abs_entry(self) -> float:
        return float(np.max(np.abs(self.generator.data), initial=0.0))

    def max_column_abs_sum(self) -> float:
        return float(np.max(np.asarray(abs(self.generator).sum(axis=0)).ravel(), initial=0.0))

    def save_csv(self, path) -> None:
        """Write ``row,col,imag_value`` triplets under a ``# N= m= M=`` header."""
        coo = self.generator.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"# N={self.basis.n_vars} m={self.basis.cap} M={self.dim}", "row,col,imag_value"]
        lines += [f"{r},{c},{v:.17g}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
        Path(path).write_text("\n".join(lines) + "\n")


def load_hamiltonian_csv(path) -> SparseHermitianMatrix:
    text = Path(path).read_text().splitlines()
    header = dict(tok.split("=") for tok in text[0].lstrip("#").split())
    basis = FockBasis(int(header["N"]), int(header["m"]))
    dim = int(header["M"])
    if dim != basis.dim:
        raise ValueError(f"header M={dim} does not match C(N+m, m)={basis.dim}")
    body = [line.split(",") for line in text[2:] if line.strip()]
    rows = np.array([int(r) for r, _, _ in body], dtype=np.int64)
    cols = np.array([int(c) for _, c, _ in body], dtype=np.int64)
    vals = np.array([float(v) for _, _, v in body])
    gen = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return SparseHermitianMatrix(gen, basis)


def build_hamiltonian(
    sys: OdeSystem,
    basis: FockBasis,
    max_entries: int = DEFAULT_MAX_ENTRIES,
    validate: bool = True,
) -> SparseHermitianMatrix:
    """Assemble ``P_m H P_m`` for ``H = sum_p sum_{i in p} alpha_{p->i} k_i prod_{j != i} x_j``.

    Each interaction acts through its ``2^|p|`` raise/lower patterns; for a
    pattern ``s`` the matrix element is ``i 2^{-|p|/2} sqrt(prod occupations)
    * sum_i alpha_i s_i``. Patterns whose coupling sum vanishes (the all-raise
    and all-lower ones, by the zero-sum rule) are skipped, as are moves that
    leave the truncated basis. ``validate=False`` allows partial systems such
    as the halves returned by :func:`split_linear_interaction`.
    """
    if validate:
        sys.require_valid()
    if sys.n_vars != basis.n_vars:
        raise ValueError(f"system has N={sys.n_vars}, basis has N={basis.n_vars}")
    dim = basis.dim
    if sys.interactions:
        estimate = dim * max(sys.c, 1) * 2 ** sys.d * max(1, min(basis.cap, sys.n_vars))
        if estimate > max_entries:
            raise BasisTooLargeError(f"~{estimate} entries exceeds cap {max_entries} (M={dim})")

    occ = basis.occupation_table
    totals = basis.totals
    cols_all = np.arange(dim)
    rows, cols, vals = [], [], []
    for p in sys.interactions:
        members = np.asarray(p.members)
        alpha = np.asarray(p.couplings)
        local = occ[:, members]
        for pattern in itertools.product((1, -1), repeat=p.size):
            s = np.asarray(pattern)
            weight = float(alpha @ s)
            if abs(weight) <= ZERO_SUM_TOL:
                continue
            new_local = local + s
            ok = np.all(new_local >= 0, axis=1) & (totals + s.sum() <= basis.cap)
            if not ok.any():
                continue
            # raise on n -> sqrt(n+1), lower on n -> sqrt(n)
            factor = np.prod(np.where(s > 0, local[ok] + 1, local[ok]), axis=1)
            target = occ[ok].copy()
            target[:, members] = new_local[ok]
            rows.append(basis.rank_occupations(target))
            cols.append(cols_all[ok])
            vals.append(weight * 2.0 ** (-p.size / 2) * np.sqrt(factor.astype(float)))

    if rows:
        gen = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        ).tocsr()
        gen.sum_duplicates()
        gen.eliminate_zeros()
    else:
        gen = sp.csr_matrix((dim, dim))
    H = SparseHermitianMatrix(gen, basis)
    err = H.hermiticity_error()
    if err > 1e-12 * max(1.0, H.max_abs_entry()):
        raise RuntimeError(f"assembled matrix is not Hermitian (error {err:.3e})")
    return H


def split_linear_interaction(sys: OdeSystem) -> tuple[OdeSystem, OdeSystem]:
    """Partition interactions into pairwise (``|p| = 2``) and higher-order parts."""
    linear = tuple(p for p in sys.interactions if p.size == 2)
    higher = tuple(p for p in sys.interactions if p.size != 2)
    return OdeSystem(sys.n_vars, linear), OdeSystem(sys.n_vars, higher)


def check_number_conserving(H: SparseHermitianMatrix, basis: FockBasis | None = None) -> bool:
    """True iff every nonzero entry joins words of equal total occupation."""
    basis = basis or H.basis
    coo = H.generator.tocoo()
    totals = basis.totals
    return bool(np.all(totals[coo.row] == totals[coo.col]))


@dataclass(frozen=True)
class NormCertificate:
    max_row_nnz: int
    max_abs_entry: float
    max_column_abs_sum: float
    spectral_estimate: float
    lanczos_residual: float
    sparsity_bound: float
    max_norm_bound: float | None
    one_norm_bound: float
    sparsity_ok: bool
    max_norm_ok: bool | None
    one_norm_ok: bool
    spectral_ok: bool

    @property
    def passed(self) -> bool:
        checks = [self.sparsity_ok, self.one_norm_ok, self.spectral_ok]
        if self.max_norm_ok is not None:
            checks.append(self.max_norm_ok)
        return all(checks)

    def as_rows(self) -> list[tuple[str, float, float | None, bool | None]]:
        return [
            ("row_sparsity", self.max_row_nnz, self.sparsity_bound, self.sparsity_ok),
            ("max_norm", self.max_abs_entry, self.max_norm_bound, self.max_norm_ok),
            ("one_norm", self.max_column_abs_sum, self.one_norm_bound, self.one_norm_ok),
            ("spectral_norm", self.spectral_estimate, self.max_column_abs_sum, self.spectral_ok),
        ]


def norm_certificate(
    H: SparseHermitianMatrix,
    sys: OdeSystem,
    basis: FockBasis | None = None,
    lanczos_steps: int = 50,
) -> NormCertificate:
    """Measure sparsity and norms of ``H`` and compare with the closed-form bounds.

    Bounds: row sparsity ``c 2^d m``; max-norm ``eta d (m/2)^{d/2}`` (only
    asserted for ``m >= 2``); column abs-sum ``eta c d m^{d/2}``. The
    spectral estimate must not exceed ``sqrt(||H||_1 ||H||_inf)``, which for
    a Hermitian matrix is the measured 1-norm.
    """
    basis = basis or H.basis
    m = basis.cap
    c, d, eta = sys.c, sys.d, sys.eta
    row_nnz = int(np.max(H.row_nnz(), initial=0))
    max_entry = H.max_abs_entry()
    one_norm = H.max_column_abs_sum()
    inf_norm = float(np.max(np.asarray(abs(H.generator).sum(axis=1)).ravel(), initial=0.0))
    spectral, residual = spectral_norm_estimate(H.generator, lanczos_steps)

    slack = 1e-12
    sparsity_bound = c * 2**d * m
    max_norm_bound = eta * d * (m / 2) ** (d / 2) if m >= 2 else None
    one_norm_bound = eta * c * d * m ** (d / 2)
    return NormCertificate(
        max_row_nnz=row_nnz,
        max_abs_entry=max_entry,
        max_column_abs_sum=one_norm,
        spectral_estimate=spectral,
        lanczos_residual=residual,
        sparsity_bound=sparsity_bound,
        max_norm_bound=max_norm_bound,
        one_norm_bound=one_norm_bound,
        sparsity_ok=row_nnz <= sparsity_bound,
        max_norm_ok=None if max_norm_bound is None else max_entry <= max_norm_bound * (1 + slack),
        one_norm_ok=one_norm <= one_norm_bound * (1 + slack),
        spectral_ok=spectral <= math.sqrt(one_norm * inf_norm) * (1 + slack) + slack,
    )
