"""Spin operators on N qubits, Weyl-ordered polynomial Hamiltonians and
total-spin sector combinatorics.

Basis convention: site 1 is the most significant bit of the basis index and
bit value 0 is spin up (s_z = +1/2), so lifted operators agree with
``kron(s, 1, ..., 1)`` style constructions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

N_MAX = 14
DEGREE_MAX = 6

AXES = "xyz"

Powers = tuple[int, int, int]


def _twice(J) -> int:
    """Return 2J as an int, rejecting values that are not half-integers."""
    two_j = Fraction(J) * 2
    if two_j.denominator != 1 or two_j < 0:
        raise ValueError(f"J={J!r} is not a nonnegative half-integer")
    return int(two_j)


def _check_size(N: int) -> None:
    if not isinstance(N, (int, np.integer)) or N < 1 or N > N_MAX:
        raise ValueError(f"N={N!r} outside supported range 1..{N_MAX}")


# ---------------------------------------------------------------------------
# polynomial symbols


@dataclass(frozen=True)
class PolynomialSymbol:
    """Real polynomial on the unit ball, stored as ``{(a, b, c): coeff}``.

    Doubles as a classical function of m = (m_x, m_y, m_z) and as the recipe
    for the Weyl-ordered operator ``N * P(2S/N)``.
    """

    terms: Mapping[Powers, float] = field(default_factory=dict)

    def __post_init__(self):
        merged: dict[Powers, float] = {}
        for powers, coeff in dict(self.terms).items():
            powers = tuple(int(p) for p in powers)
            if len(powers) != 3 or min(powers) < 0:
                raise ValueError(f"bad exponent triple {powers}")
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError("coefficients must be finite")
            merged[powers] = merged.get(powers, 0.0) + coeff
        merged = {k: v for k, v in sorted(merged.items()) if v != 0.0}
        object.__setattr__(self, "terms", merged)

    @classmethod
    def from_monomials(cls, monomials) -> "PolynomialSymbol":
        """Build from an iterable of ``(coeff, (a, b, c))`` pairs; duplicates merge."""
        terms: dict[Powers, float] = {}
        for coeff, powers in monomials:
            powers = tuple(powers)
            terms[powers] = terms.get(powers, 0.0) + float(coeff)
        return cls(terms)

    @classmethod
    def parse(cls, text: str) -> "PolynomialSymbol":
        """Parse ``'1*z^2; 0.5*x^1'``.

        A bare variable has exponent 1; repeated variables multiply.
        """
        terms: dict[Powers, float] = {}
        for chunk in text.replace(" ", "").replace("\t", "").split(";"):
            if not chunk:
                continue
            factors = chunk.split("*")
            coeff = float(factors[0])
            powers = [0, 0, 0]
            for factor in factors[1:]:
                m = re.fullmatch(r"([xyz])(?:\^(\d+))?", factor)
                if m is None:
                    raise ValueError(f"cannot parse factor {factor!r} in {chunk!r}")
                powers[AXES.index(m.group(1))] += int(m.group(2) or 1)
            key = tuple(powers)
            terms[key] = terms.get(key, 0.0) + coeff
        return cls(terms)

    def format(self) -> str:
        if not self.terms:
            return "0"
        return "; ".join(
            f"{c!r}*x^{a}*y^{b}*z^{cz}" for (a, b, cz), c in self.terms.items()
        )

    @property
    def degree(self) -> int:
        return max((sum(p) for p in self.terms), default=0)

    @property
    def monomials(self) -> list[tuple[float, Powers]]:
        return [(c, p) for p, c in self.terms.items()]

    def __call__(self, m) -> float | np.ndarray:
        return symbol_eval(self, m)

    def __add__(self, other: "PolynomialSymbol") -> "PolynomialSymbol":
        return PolynomialSymbol.from_monomials(self.monomials + other.monomials)

    def __neg__(self) -> "PolynomialSymbol":
        return self.scaled(-1.0)

    def __sub__(self, other: "PolynomialSymbol") -> "PolynomialSymbol":
        return self + (-other)

    def scaled(self, factor: float) -> "PolynomialSymbol":
        return PolynomialSymbol({p: factor * c for p, c in self.terms.items()})

    def coefficient_l1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def homogeneous_part(self, d: int) -> "PolynomialSymbol":
        return PolynomialSymbol({p: c for p, c in self.terms.items() if sum(p) == d})

    def gradient(self, m) -> np.ndarray:
        """Gradient of the classical polynomial, vectorised over leading axes."""
        m = np.asarray(m, dtype=float)
        out = np.zeros(m.shape)
        for (a, b, c), coeff in self.terms.items():
            pw = (a, b, c)
            for axis in range(3):
                if pw[axis] == 0:
                    continue
                lowered = list(pw)
                lowered[axis] -= 1
                out[..., axis] += coeff * pw[axis] * _monomial(m, lowered)
        return out

    def hessian(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        out = np.zeros(m.shape + (3,))
        for pw, coeff in self.terms.items():
            for i in range(3):
                for j in range(3):
                    low = list(pw)
                    f = low[i]
                    low[i] -= 1
                    if f == 0:
                        continue
                    g = low[j]
                    low[j] -= 1
                    if g <= 0:
                        continue
                    out[..., i, j] += coeff * f * g * _monomial(m, low)
        return out


def _monomial(m: np.ndarray, powers) -> np.ndarray:
    a, b, c = powers
    return m[..., 0] ** a * m[..., 1] ** b * m[..., 2] ** c


def symbol_eval(P: PolynomialSymbol, m) -> float | np.ndarray:
    """Evaluate ``P`` at points of the closed unit ball.

    ``m`` may carry leading batch axes; the last axis has length 3.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != 3:
        raise ValueError("points must have 3 components")
    if np.any(np.linalg.norm(m, axis=-1) > 1 + 1e-12):
        raise ValueError("symbol evaluated outside the unit ball")
    total = np.zeros(m.shape[:-1])
    for powers, coeff in P.terms.items():
        total = total + coeff * _monomial(m, powers)
    return float(total) if total.ndim == 0 else total


# ---------------------------------------------------------------------------
# spin operators


@dataclass(frozen=True)
class SpinOperatorSet:
    """Three spin components on a common space.

    ``context`` is ``"product"`` (N qubits, sparse CSR) or ``"irrep"``
    (spin J, dense).
    """

    Sx: object
    Sy: object
    Sz: object
    context: str
    N: int | None = None
    two_j: int | None = None

    @property
    def dimension(self) -> int:
        return self.Sz.shape[0]

    @property
    def components(self) -> tuple:
        return (self.Sx, self.Sy, self.Sz)

    def casimir(self):
        return self.Sx @ self.Sx + self.Sy @ self.Sy + self.Sz @ self.Sz

    def magnetization(self):
        """``M = (2/N) S``; only meaningful in the product context."""
        if self.N is None:
            raise ValueError("magnetization needs a particle number")
        return tuple((2.0 / self.N) * S for S in self.components)


def dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def _bit(N: int, n: int) -> int:
    return 1 << (N - n)


def _site_ops(N: int, sites) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    dim = 1 << N
    idx = np.arange(dim)
    sz = np.zeros(dim)
    rows, cols, vx, vy = [], [], [], []
    for n in sites:
        mask = _bit(N, n)
        up = (idx & mask) == 0
        sz += np.where(up, 0.5, -0.5)
        rows.append(idx ^ mask)
        cols.append(idx)
        vx.append(np.full(dim, 0.5))
        # s_y|up> = (i/2)|down>, s_y|down> = (-i/2)|up>
        vy.append(np.where(up, 0.5j, -0.5j))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    Sx = sp.csr_matrix((np.concatenate(vx), (rows, cols)), shape=(dim, dim))
    Sy = sp.csr_matrix((np.concatenate(vy), (rows, cols)), shape=(dim, dim))
    Sz = sp.diags(sz, format="csr")
    return Sx, Sy, Sz


def build_site_spin(N: int, n: int) -> SpinOperatorSet:
    """Lift of the single-qubit spin vector to site ``n`` (1-based)."""
    _check_size(N)
    if not 1 <= n <= N:
        raise ValueError(f"site {n} out of range 1..{N}")
    Sx, Sy, Sz = _site_ops(N, [n])
    return SpinOperatorSet(Sx, Sy, Sz, "product", N=N)


_TOTAL_CACHE: dict[int, SpinOperatorSet] = {}


def build_total_spin(N: int) -> SpinOperatorSet:
    """Total spin S = sum_n S(n) as sparse matrices (cached, read-only)."""
    _check_size(N)
    if N not in _TOTAL_CACHE:
        Sx, Sy, Sz = _site_ops(N, range(1, N + 1))
        _TOTAL_CACHE[N] = SpinOperatorSet(Sx, Sy, Sz, "product", N=N)
    return _TOTAL_CACHE[N]


def spin_irrep(J) -> SpinOperatorSet:
    """Standard (2J+1)-dimensional generators, basis ordered m = J, ..., -J."""
    two_j = _twice(J)
    j = two_j / 2
    m = j - np.arange(two_j + 1)
    # S+|m> = sqrt(j(j+1) - m(m+1)) |m+1>; |m+1> sits one index above |m>
    sp_diag = np.sqrt(np.maximum(j * (j + 1) - m[1:] * (m[1:] + 1), 0.0))
    Splus = np.diag(sp_diag, 1).astype(complex)
    Sminus = Splus.conj().T
    Sx = (Splus + Sminus) / 2
    Sy = (Splus - Sminus) / 2j
    Sz = np.diag(m).astype(complex)
    return SpinOperatorSet(Sx, Sy, Sz, "irrep", two_j=two_j)


def raising_lowering(spins: SpinOperatorSet):
    return spins.Sx + 1j * spins.Sy, spins.Sx - 1j * spins.Sy


# ---------------------------------------------------------------------------
# Weyl ordering


def n_arrangements(powers: Powers) -> int:
    a, b, c = powers
    return math.factorial(a + b + c) // (math.factorial(a) * math.factorial(b) * math.factorial(c))


def _symmetrized_sum(ops, counts: list[int], prefix):
    """Sum over distinct words of the operator products, sharing prefixes."""
    if sum(counts) == 0:
        return prefix
    acc = None
    for letter, c in enumerate(counts):
        if c:
            counts[letter] -= 1
            nxt = ops[letter] if prefix is None else prefix @ ops[letter]
            term = _symmetrized_sum(ops, counts, nxt)
            counts[letter] += 1
            acc = term if acc is None else acc + term
    return acc


def symmetrized_monomial(ops, powers: Powers):
    """Average of ``A_x^a A_y^b A_z^c`` over all distinct factor orderings."""
    if sum(powers) == 0:
        return None
    total = _symmetrized_sum(ops, list(powers), None)
    return total / n_arrangements(powers)


def weyl_polynomial(P: PolynomialSymbol, spins: SpinOperatorSet, scale: float) -> np.ndarray:
    """Weyl-ordered ``P(scale * S)`` on the space carrying ``spins`` (dense)."""
    if P.degree > DEGREE_MAX:
        raise ValueError(f"degree {P.degree} exceeds supported maximum {DEGREE_MAX}")
    ops = [scale * S for S in spins.components]
    dim = spins.dimension
    out = np.zeros((dim, dim), dtype=complex)
    for powers, coeff in P.terms.items():
        if sum(powers) == 0:
            out[np.diag_indices(dim)] += coeff
            continue
        out += coeff * dense(symmetrized_monomial(ops, powers))
    return _maybe_real(out)


def weyl_ordered_operator(P: PolynomialSymbol, N: int) -> np.ndarray:
    """``H_P = N * P(2S/N)`` with Weyl-ordered monomials, dense 2^N x 2^N."""
    _check_size(N)
    if not P.terms:
        raise ValueError("empty polynomial")
    return N * weyl_polynomial(P, build_total_spin(N), 2.0 / N)


def _maybe_real(A: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(A) and not np.any(A.imag):
        return np.ascontiguousarray(A.real)
    return A


# ---------------------------------------------------------------------------
# directional decomposition  P(m) = sum_k beta_k <w_k, m>^{d_k}


@dataclass(frozen=True)
class DirectionalTerm:
    beta: float
    w: np.ndarray
    d: int


def _homogeneous_basis(d: int) -> list[Powers]:
    return [(a, b, d - a - b) for a in range(d, -1, -1) for b in range(d - a, -1, -1)]


def directional_decomposition(P: PolynomialSymbol, tol: float = 1e-9) -> list[DirectionalTerm]:
    """Write P as a sum of powers of linear forms in unit directions.

    Pure powers m_xi^d map to the coordinate axis directly; mixed
    homogeneous parts are fitted on principal-lattice directions, where the
    powers of linear forms span all forms of that degree.
    """
    out: list[DirectionalTerm] = []
    for d in sorted({sum(p) for p in P.terms}):
        part = P.homogeneous_part(d)
        mixed = {}
        for powers, coeff in part.terms.items():
            if d == 0:
                out.append(DirectionalTerm(coeff, np.array([0.0, 0.0, 1.0]), 0))
            elif max(powers) == d:
                axis = int(np.argmax(powers))
                out.append(DirectionalTerm(coeff, np.eye(3)[axis], d))
            else:
                mixed[powers] = coeff
        if not mixed:
            continue
        basis = _homogeneous_basis(d)
        dirs = []
        for a, b, c in basis:
            # tilt the lattice off the coordinate planes to keep it unisolvent
            w = np.array([a + 0.5, b + 0.5 * np.sqrt(2), c + 0.5 * np.sqrt(3)])
            dirs.append(w / np.linalg.norm(w))
        # coefficient of monomial (a,b,c) in <w,m>^d is multinomial * w^powers
        A = np.array(
            [[n_arrangements(p) * _monomial(w, p) for w in dirs] for p in basis]
        )
        rhs = np.array([mixed.get(p, 0.0) for p in basis])
        beta = np.linalg.solve(A, rhs)
        if np.max(np.abs(A @ beta - rhs)) > tol * max(1.0, np.max(np.abs(rhs))):
            raise ArithmeticError("directional decomposition did not reproduce P")
        for b_k, w in zip(beta, dirs):
            if b_k != 0.0:
                out.append(DirectionalTerm(float(b_k), w, d))
    return out


def decomposition_operator(terms: list[DirectionalTerm], N: int) -> np.ndarray:
    """``N * sum_k beta_k <w_k, M>^{d_k}`` built by plain matrix powers."""
    _check_size(N)
    spins = build_total_spin(N)
    M = [(2.0 / N) * S for S in spins.components]
    dim = 1 << N
    out = np.zeros((dim, dim), dtype=complex)
    for t in terms:
        if t.d == 0:
            out[np.diag_indices(dim)] += t.beta
            continue
        L = t.w[0] * M[0] + t.w[1] * M[1] + t.w[2] * M[2]
        out += t.beta * dense(_matpow(L, t.d))
    return _maybe_real(N * out)


def _matpow(A, d: int):
    result = A
    for _ in range(d - 1):
        result = result @ A
    return result


# ---------------------------------------------------------------------------
# total-spin sectors


@dataclass(frozen=True)
class Sector:
    two_j: int
    multiplicity: int

    @property
    def J(self) -> Fraction:
        return Fraction(self.two_j, 2)

    @property
    def block_dim(self) -> int:
        return self.two_j + 1


@dataclass(frozen=True)
class BlockSpectrum:
    N: int
    sectors: tuple[Sector, ...]

    def total_dimension(self) -> int:
        return sum(s.multiplicity * s.block_dim for s in self.sectors)


def admissible_two_j(N: int) -> list[int]:
    """Doubled total spins 2J from N/2 down to 0 or 1/2."""
    return list(range(N, -1, -2))


def block_degeneracy(N: int, J) -> int:
    """Multiplicity of the spin-J irrep in N qubits: (2J+1)/(N+1) binom(N+1, N/2+J+1)."""
    two_j = _twice(J)
    if N < 0 or two_j > N or (N - two_j) % 2:
        raise ValueError(f"J={J} not admissible for N={N}")
    k = (N + two_j) // 2 + 1
    num = (two_j + 1) * math.comb(N + 1, k)
    q, r = divmod(num, N + 1)
    assert r == 0
    return q


def block_spectrum(N: int) -> BlockSpectrum:
    sectors = tuple(Sector(tj, block_degeneracy(N, Fraction(tj, 2))) for tj in admissible_two_j(N))
    return BlockSpectrum(N, sectors)


def commutator(A, B):
    return A @ B - B @ A


def opnorm(A) -> float:
    """Spectral norm of a dense or sparse matrix."""
    if sp.issparse(A) and A.shape[0] > 64:
        A = A.tocsr()
        for B in (A, 1j * A):
            # Hermitian (or anti-Hermitian) sparse input: extremal eigenvalue
            if abs(B - B.conj().T).max() == 0:
                ev = spla.eigsh(B, k=1, which="LM", return_eigenvectors=False, tol=1e-14)
                return float(np.abs(ev[0]))
    A = dense(A)
    if A.size == 0:
        return 0.0
    # normal fast paths: Hermitian or anti-Hermitian input
    if np.allclose(A, A.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
        return float(np.max(np.abs(np.linalg.eigvalsh(A))))
    if np.allclose(A, -A.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
        return float(np.max(np.abs(np.linalg.eigvalsh(1j * A))))
    return float(np.linalg.norm(A, 2))


def max_norm(A) -> float:
    A = dense(A)
    return float(np.max(np.abs(A))) if A.size else 0.0


def random_polynomial(rng: np.random.Generator, max_degree: int, n_terms: int = 4) -> PolynomialSymbol:
    """Random polynomial used by property checks."""
    monos = []
    for _ in range(n_terms):
        d = int(rng.integers(0, max_degree + 1))
        cuts = sorted(rng.integers(0, d + 1, size=2)) if d else [0, 0]
        powers = (int(cuts[0]), int(cuts[1] - cuts[0]), int(d - cuts[1]))
        monos.append((float(rng.normal()), powers))
    return PolynomialSymbol.from_monomials(monos)


__all__ = [
    "AXES",
    "BlockSpectrum",
    "DEGREE_MAX",
    "DirectionalTerm",
    "N_MAX",
    "PolynomialSymbol",
    "Sector",
    "SpinOperatorSet",
    "admissible_two_j",
    "block_degeneracy",
    "block_spectrum",
    "build_site_spin",
    "build_total_spin",
    "commutator",
    "decomposition_operator",
    "dense",
    "directional_decomposition",
    "max_norm",
    "opnorm",
    "random_polynomial",
    "spin_irrep",
    "symbol_eval",
    "symmetrized_monomial",
    "weyl_ordered_operator",
    "weyl_polynomial",
]

