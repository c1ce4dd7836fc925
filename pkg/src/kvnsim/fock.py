"""Truncated occupation-number basis, Hermite amplitudes and state encoding.

A basis state with occupations ``n`` (``|n| <= m``) is stored as an
occupation word: ``m`` non-decreasing symbols from ``{0..N}`` where symbol
``i > 0`` appears ``n_i`` times and ``0`` pads the rest. Words are indexed
by the multiset ranking in which index 0 is ``(N, ..., N)``, the leftmost
symbol decreases along the order, and ties recurse on the remaining slots.
The last index is the vacuum ``(0, ..., 0)``.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "BasisOverflowError",
    "HermiteOverflowError",
    "FockBasis",
    "StateVector",
    "ObservableSpec",
    "dimension",
    "rank",
    "unrank",
    "occupations",
    "word_from_occupations",
    "hermite_value",
    "hermite_table",
    "encode_position",
    "position_norm",
    "encode_observable",
    "load_observable",
    "monomial_observable",
]

INT64_MAX = 2**63 - 1
PI_QUARTER = math.pi ** -0.25
LINEAR_SCAN_MAX_N = 64


class BasisOverflowError(OverflowError):
    pass


class HermiteOverflowError(OverflowError):
    def __init__(self, n: int):
        self.n = n
        super().__init__(f"Hermite recurrence overflowed at degree n={n}")


def dimension(n_vars: int, cap: int) -> int:
    """Number of occupation vectors over ``n_vars`` modes with total <= ``cap``."""
    if n_vars < 1 or cap < 0:
        raise ValueError(f"need N >= 1 and m >= 0, got N={n_vars}, m={cap}")
    dim = math.comb(n_vars + cap, cap)
    if dim > INT64_MAX:
        raise BasisOverflowError(f"C({n_vars + cap}, {cap}) = {dim} exceeds 2^63 - 1")
    return dim


@lru_cache(maxsize=32)
def _pascal(size: int) -> np.ndarray:
    """``table[n, k] = C(n, k)`` for ``0 <= n, k <= size`` as int64.

    Entries beyond int64 are clamped to ``INT64_MAX``; they are never looked
    up for a basis whose dimension fits.
    """
    table = np.zeros((size + 1, size + 1), dtype=np.int64)
    row = [1]
    for n in range(size + 1):
        table[n, : n + 1] = [min(v, INT64_MAX) for v in row]
        row = [1] + [row[k] + row[k + 1] for k in range(n)] + [1]
    table.flags.writeable = False
    return table


def _check_word(n_vars: int, cap: int, word: Sequence[int]) -> tuple[int, ...]:
    word = tuple(int(s) for s in word)
    if len(word) != cap:
        raise ValueError(f"word {word} has length {len(word)}, expected m={cap}")
    if any(s < 0 or s > n_vars for s in word):
        raise ValueError(f"word {word} has symbols outside 0..{n_vars}")
    if any(a > b for a, b in zip(word, word[1:])):
        raise ValueError(f"word {word} is not non-decreasing")
    return word


def rank(n_vars: int, cap: int, word: Sequence[int]) -> int:
    """Index of an occupation word: ``sum_k C(N - a_k + m - k - 1, m - k)``."""
    word = _check_word(n_vars, cap, word)
    dimension(n_vars, cap)
    return sum(math.comb(n_vars - a + cap - k - 1, cap - k) for k, a in enumerate(word))


def unrank(n_vars: int, cap: int, index: int) -> tuple[int, ...]:
    """Occupation word at ``index``.

    With ``r`` slots left, the next symbol is the smallest ``a`` with
    ``C(N - a + r - 1, r) <= index``; that count is subtracted and the
    search continues over symbols ``>= a``. Small alphabets use a linear
    scan, large ones bisection.
    """
    dim = dimension(n_vars, cap)
    if not 0 <= index < dim:
        raise IndexError(f"index {index} out of range [0, {dim})")
    table = _pascal(n_vars + cap)
    word = []
    lo = 0
    for r in range(cap, 0, -1):
        # below(a) = C(N - a + r - 1, r) is non-increasing in a; below(N) = 0
        def below(a, r=r):
            return int(table[n_vars - a + r - 1, r]) if n_vars - a + r - 1 >= 0 else 0

        if n_vars <= LINEAR_SCAN_MAX_N:
            a = lo
            while below(a) > index:
                a += 1
        else:
            keys = _Descending(below, lo, n_vars)
            a = lo + bisect.bisect_left(keys, -index)
        index -= below(a)
        word.append(a)
        lo = a
    return tuple(word)


class _Descending:
    """Sequence view ``-below(lo + j)`` (non-decreasing) for :func:`bisect`."""

    def __init__(self, below, lo, hi):
        self.below, self.lo, self.hi = below, lo, hi

    def __len__(self):
        return self.hi - self.lo + 1

    def __getitem__(self, j):
        return -self.below(self.lo + j)


def occupations(word: Sequence[int], n_vars: int) -> np.ndarray:
    """Multiplicity of each symbol ``1..N`` in the word (padding ignored)."""
    counts = np.bincount(np.asarray(word, dtype=int), minlength=n_vars + 1)
    return counts[1 : n_vars + 1]


def word_from_occupations(occ: Sequence[int], cap: int) -> tuple[int, ...]:
    occ = [int(v) for v in occ]
    if any(v < 0 for v in occ):
        raise ValueError(f"negative occupation in {occ}")
    total = sum(occ)
    if total > cap:
        raise ValueError(f"total occupation {total} exceeds cap m={cap}")
    word = [0] * (cap - total)
    for i, v in enumerate(occ, start=1):
        word.extend([i] * v)
    return tuple(word)


@dataclass(frozen=True)
class FockBasis:
    """All occupation vectors over ``n_vars`` modes with total at most ``cap``."""

    n_vars: int
    cap: int

    def __post_init__(self):
        dimension(self.n_vars, self.cap)

    @property
    def dim(self) -> int:
        return dimension(self.n_vars, self.cap)

    @cached_property
    def words(self) -> np.ndarray:
        """All words in index order, shape ``(dim, m)``.

        Reverse lexicographic order of ascending multisets coincides with the
        ranking order (checked against :func:`unrank` in the tests).
        """
        combos = combinations_with_replacement(range(self.n_vars + 1), self.cap)
        arr = np.array(list(combos), dtype=np.int64).reshape(self.dim, self.cap)
        return arr[::-1].copy()

    @cached_property
    def occupation_table(self) -> np.ndarray:
        """Occupation vectors in index order, shape ``(dim, N)``."""
        words = self.words
        occ = np.zeros((self.dim, self.n_vars + 1), dtype=np.int64)
        rows = np.arange(self.dim)
        for k in range(self.cap):
            np.add.at(occ, (rows, words[:, k]), 1)
        return occ[:, 1:]

    @cached_property
    def totals(self) -> np.ndarray:
        return self.occupation_table.sum(axis=1)

    @cached_property
    def _rank_tables(self):
        # prefix[s, j] = sum_{j'=1..j} C(N - s - 1 + j', j'): the rank contribution
        # of one symbol s occupying the slot with j slots remaining.
        n, m = self.n_vars, self.cap
        table = _pascal(n + m).astype(object)
        prefix = np.zeros((n + 1, m + 1), dtype=np.int64)
        for s in range(n + 1):
            acc = 0
            for j in range(1, m + 1):
                top = n - s - 1 + j
                acc += int(table[top, j]) if top >= 0 else 0
                prefix[s, j] = min(acc, INT64_MAX)
        return prefix

    def rank_occupations(self, occ) -> np.ndarray:
        """Vectorised rank of occupation vectors, shape ``(..., N)`` -> ``(...)``.

        Symbol ``s`` fills the slots after padding and lower symbols, so its
        contribution is a difference of prefix sums over remaining-slot counts.
        """
        occ = np.asarray(occ, dtype=np.int64)
        prefix = self._rank_tables
        m = self.cap
        total = occ.sum(axis=-1)
        if np.any(total > m) or np.any(occ < 0):
            raise ValueError("occupation outside the truncated basis")
        pad = m - total
        start = pad.copy()
        idx = prefix[0, m] - prefix[0, m - pad]
        for s in range(1, self.n_vars + 1):
            n_s = occ[..., s - 1]
            idx = idx + prefix[s, m - start] - prefix[s, m - start - n_s]
            start = start + n_s
        return idx

    def index_of(self, occ) -> int:
        return int(self.rank_occupations(np.asarray(occ)[None, :])[0])


@dataclass(frozen=True)
class StateVector:
    """Amplitudes over a :class:`FockBasis` in index order (float or complex)."""

    amplitudes: np.ndarray
    basis: FockBasis

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if not np.issubdtype(amps.dtype, np.complexfloating):
            amps = amps.astype(float)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"amplitudes shape {amps.shape} != ({self.basis.dim},)")
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitudes")
        object.__setattr__(self, "amplitudes", amps)

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.amplitudes) or not np.any(self.amplitudes.imag)

    def inner(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def sector_norms(self) -> np.ndarray:
        """Norm restricted to each total-occupation sector ``0..m``."""
        weights = np.abs(self.amplitudes) ** 2
        return np.sqrt(np.bincount(self.basis.totals, weights=weights, minlength=self.basis.cap + 1))


@dataclass(frozen=True)
class ObservableSpec:
    """Polynomial output ``sum_n c_n prod_i p_{n_i}(x_i)`` with ``|n| <= b``.

    ``terms`` holds ``({mode: count}, coefficient)`` pairs with 0-based modes.
    """

    degree_cap: int
    terms: tuple[tuple[Mapping[int, int], float], ...]

    def __post_init__(self):
        terms = tuple(({int(k): int(v) for k, v in occ.items() if int(v) != 0}, float(c)) for occ, c in self.terms)
        if not terms:
            raise ValueError("observable needs at least one term")
        for occ, _ in terms:
            if any(v < 0 for v in occ.values()) or any(k < 0 for k in occ):
                raise ValueError(f"invalid occupation {occ}")
            if sum(occ.values()) > self.degree_cap:
                raise ValueError(f"term {occ} has degree above b={self.degree_cap}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def single(cls, mode: int, power: int = 1, coeff: float = 1.0) -> "ObservableSpec":
        return cls(power, (({mode: power}, coeff),))

    def occupation_array(self, n_vars: int) -> tuple[np.ndarray, np.ndarray]:
        occ = np.zeros((len(self.terms), n_vars), dtype=np.int64)
        for r, (term, _) in enumerate(self.terms):
            for k, v in term.items():
                if k >= n_vars:
                    raise ValueError(f"observable mode {k + 1} exceeds N={n_vars}")
                occ[r, k] = v
        return occ, np.array([c for _, c in self.terms])

    @classmethod
    def from_dict(cls, data: Mapping) -> "ObservableSpec":
        terms = tuple(({int(k) - 1: int(v) for k, v in t["occ"].items()}, float(t["coeff"])) for t in data["terms"])
        return cls(int(data["b"]), terms)

    def to_dict(self) -> dict:
        return {
            "b": self.degree_cap,
            "terms": [{"occ": {str(k + 1): v for k, v in occ.items()}, "coeff": c} for occ, c in self.terms],
        }


def monomial_observable(n_vars: int, powers: Mapping[int, int], coeff: float = 1.0) -> ObservableSpec:
    """Observable whose classical value is ``coeff * prod_i x_i^{k_i}``.

    Each power is expanded in normalised Hermite functions, and modes absent
    from ``powers`` contribute ``1 = pi^{1/4} p_0``.
    """
    if any(not 0 <= i < n_vars for i in powers) or any(k < 0 for k in powers.values()):
        raise ValueError(f"invalid powers {dict(powers)} for N={n_vars}")
    per_mode = []
    for i, k in sorted(powers.items()):
        unit = np.zeros(k + 1)
        unit[k] = 1.0
        h = np.polynomial.hermite.poly2herm(unit)
        per_mode.append(
            [(i, n, h[n] * math.sqrt(2.0**n * math.factorial(n)) * math.pi**0.25) for n in range(k + 1) if h[n] != 0]
        )
    base = coeff * math.pi ** ((n_vars - len(per_mode)) / 4)
    terms = []
    for combo in itertools.product(*per_mode):
        c = base * math.prod(w for _, _, w in combo)
        terms.append(({i: n for i, n, _ in combo if n}, c))
    return ObservableSpec(sum(powers.values()), tuple(terms))


def load_observable(path) -> ObservableSpec:
    return ObservableSpec.from_dict(json.loads(Path(path).read_text()))


def hermite_table(n_max: int, x) -> np.ndarray:
    """``p_0(x) .. p_{n_max}(x)`` stacked on axis 0 (orthonormal for ``exp(-x^2)``).

    Forward recurrence ``p_{n+1} = sqrt(2/(n+1)) x p_n - sqrt(n/(n+1)) p_{n-1}``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = PI_QUARTER
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * PI_QUARTER
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max):
            out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
            if not np.all(np.isfinite(out[n + 1])):
                raise HermiteOverflowError(n + 1)
    return out


def hermite_value(n: int, x):
    """Normalised Hermite polynomial ``p_n(x)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    val = hermite_table(n, x)[n]
    return float(val) if np.ndim(val) == 0 else val


def _product_amplitudes(basis: FockBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.n_vars,):
        raise ValueError(f"x has shape {x.shape}, basis has N={basis.n_vars}")
    table = hermite_table(basis.cap, x)  # (m+1, N)
    occ = basis.occupation_table
    return np.prod(table[occ, np.arange(basis.n_vars)], axis=1)


def position_norm(basis: FockBasis, x) -> float:
    """Truncated normalisation ``L(x) = sum_{|n| <= m} prod_i p_{n_i}(x_i)^2``."""
    return float(np.sum(_product_amplitudes(basis, x) ** 2))


def encode_position(basis: FockBasis, x) -> tuple[StateVector, float]:
    """Unit-norm truncated position state and its normalisation constant ``L``."""
    amps = _product_amplitudes(basis, x)
    L = float(np.sum(amps**2))
    return StateVector(amps / math.sqrt(L), basis), L


def encode_observable(basis: FockBasis, obs: ObservableSpec) -> StateVector:
    """Coefficient state ``|c>``; unnormalised so ``<c|psi>`` is the raw output."""
    if obs.degree_cap > basis.cap:
        raise ValueError(f"observable degree b={obs.degree_cap} exceeds cap m={basis.cap}")
    occ, coeffs = obs.occupation_array(basis.n_vars)
    idx = basis.rank_occupations(occ)
    amps = np.zeros(basis.dim)
    np.add.at(amps, idx, coeffs)
    return StateVector(amps, basis)
