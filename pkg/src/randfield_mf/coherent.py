"""Bloch coherent states and operators built from classical symbols.

Irrep bases are ordered m = J, J-1, ..., -J as in ``spin_irrep``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_legendre

from .spin_algebra import (
    PolynomialSymbol,
    _twice,
    admissible_two_j,
    block_degeneracy,
    build_total_spin,
    opnorm,
    spin_irrep,
    weyl_polynomial,
)

SELF_TEST_TOL = 1e-10
SANDWICH_RTOL = 1e-8


class QuadratureError(ArithmeticError):
    """Quadrature too coarse for the requested spin."""


class SandwichViolation(ArithmeticError):
    """Berezin-Lieb ordering broken beyond tolerance."""


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) times the trapezoid rule in phi."""

    n_theta: int
    n_phi: int

    @property
    def exactness(self) -> int:
        return min(2 * self.n_theta - 1, self.n_phi - 1)

    @classmethod
    def for_degree(cls, degree: int) -> "SphereQuadrature":
        return cls(degree // 2 + 1, degree + 1)

    @property
    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat arrays (theta, phi, weight); weights sum to 4 pi."""
        return _nodes(self.n_theta, self.n_phi)

    def directions(self) -> np.ndarray:
        th, ph, _ = self.nodes
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def integrate(self, values) -> float:
        return float(np.asarray(values) @ self.nodes[2])


@lru_cache(maxsize=64)
def _nodes(n_theta: int, n_phi: int):
    x, w = roots_legendre(n_theta)
    th = np.arccos(x)
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    W = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi))
    out = TH.ravel(), PH.ravel(), W.ravel()
    for a in out:
        a.setflags(write=False)
    return out


def default_quadrature(J, degree: int = 0) -> SphereQuadrature:
    """Rule with exactness ``2 (2J) + degree + 2``."""
    return SphereQuadrature.for_degree(2 * _twice(J) + degree + 2)


def coherent_states(J, theta, phi) -> np.ndarray:
    """Columns ``|Omega, J>`` for arrays of angles, shape (2J+1, K).

    Component m is ``sqrt(C(2J, J-m)) cos^{J+m}(theta/2) sin^{J-m}(theta/2)
    e^{i (J-m) phi}``, the closed form of the rotated highest-weight state.
    """
    two_j = _twice(J)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    k = np.arange(two_j + 1)  # k = J - m
    c = np.cos(theta / 2)[None, :]
    s = np.sin(theta / 2)[None, :]
    binom = np.sqrt([comb(two_j, int(i)) for i in k])[:, None]
    amp = binom * c ** (two_j - k)[:, None] * s ** k[:, None]
    return amp * np.exp(1j * k[:, None] * phi[None, :])


def coherent_vector(J, theta: float, phi: float) -> np.ndarray:
    if not (0 <= theta <= np.pi and 0 <= phi <= 2 * np.pi):
        raise ValueError("need 0 <= theta <= pi and 0 <= phi <= 2 pi")
    return coherent_states(J, theta, phi)[:, 0]


def resolution_check(J, q: SphereQuadrature) -> float:
    """Max deviation of ``(2J+1)/(4 pi) sum w |Omega><Omega|`` from the identity."""
    two_j = _twice(J)
    if q.exactness < 2 * two_j:
        raise QuadratureError(f"exactness {q.exactness} below {2 * two_j} needed for 2J = {two_j}")
    th, ph, w = q.nodes
    Phi = coherent_states(J, th, ph)
    F = (two_j + 1) / (4 * np.pi) * (Phi * w) @ Phi.conj().T
    return float(np.max(np.abs(F - np.eye(two_j + 1))))


def lower_symbol(G, J, theta, phi):
    """``<Omega, J| G |Omega, J>``; vectorised over angle arrays."""
    G = np.asarray(G)
    if G.shape != (_twice(J) + 1,) * 2:
        raise ValueError("operator dimension does not match 2J+1")
    Phi = coherent_states(J, theta, phi)
    vals = np.real(np.einsum("ik,ij,jk->k", Phi.conj(), G, Phi))
    return float(vals[0]) if np.ndim(theta) == 0 else vals


def _symbol_values(f, points: np.ndarray) -> np.ndarray:
    if isinstance(f, PolynomialSymbol):
        return f(points)
    return np.asarray(f(points), dtype=float).reshape(points.shape[0])


def upper_symbol_operator(f, J, N: int, q: SphereQuadrature | None = None, self_test: bool = True) -> np.ndarray:
    """``(2J+1)/(4 pi) int N f((2J/N) e(Omega)) |Omega><Omega| dOmega``.

    ``f`` is a PolynomialSymbol or a vectorised callable on points (K, 3).
    """
    two_j = _twice(J)
    q = q or default_quadrature(J, getattr(f, "degree", 0))
    if self_test:
        dev = resolution_check(J, q)
        if dev > SELF_TEST_TOL:
            raise QuadratureError(f"constant-function self-test deviates by {dev:.2e}")
    th, ph, w = q.nodes
    Phi = coherent_states(J, th, ph)
    vals = N * _symbol_values(f, (two_j / N) * q.directions())
    G = (two_j + 1) / (4 * np.pi) * (Phi * (w * vals)) @ Phi.conj().T
    return 0.5 * (G + G.conj().T)


def _expm_trace(G: np.ndarray) -> float:
    return float(np.sum(np.exp(np.linalg.eigvalsh(G))))


def berezin_lieb_bounds(g, J, q: SphereQuadrature | None = None, G: np.ndarray | None = None):
    """``(lower, exact, upper)`` around ``Tr e^G``.

    ``g`` is the upper symbol as a vectorised function of (theta, phi); when
    ``G`` is omitted it is built from ``g``. Raises SandwichViolation if
    the ordering breaks beyond the relative tolerance.
    """
    two_j = _twice(J)
    q = q or default_quadrature(J, 16)
    th, ph, w = q.nodes
    Phi = coherent_states(J, th, ph)
    gv = np.asarray(g(th, ph), dtype=float) * np.ones_like(th)
    pref = (two_j + 1) / (4 * np.pi)
    if G is None:
        G = pref * (Phi * (w * gv)) @ Phi.conj().T
        G = 0.5 * (G + G.conj().T)
    low_sym = np.real(np.einsum("ik,ij,jk->k", Phi.conj(), G, Phi))
    lower = pref * float(w @ np.exp(low_sym))
    upper = pref * float(w @ np.exp(gv))
    exact = _expm_trace(G)
    tol = SANDWICH_RTOL * max(1.0, exact)
    if lower > exact + tol or exact > upper + tol:
        raise SandwichViolation(f"lower {lower:.12g}, exact {exact:.12g}, upper {upper:.12g}")
    return lower, exact, upper


def symbol_function(f, J, N: int):
    """``(theta, phi) -> N f((2J/N) e(Omega))`` for use as an upper symbol."""
    two_j = _twice(J)

    def g(theta, phi):
        e = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
        return N * _symbol_values(f, (two_j / N) * e.reshape(-1, 3)).reshape(np.shape(theta))

    return g


def sector_gap(P: PolynomialSymbol, N: int, two_j: int) -> float:
    """``|| P((2/N) S) - (1/N) upper_symbol_operator(P) ||`` on the spin-J irrep."""
    J = two_j / 2
    A = weyl_polynomial(P, spin_irrep(J), 2.0 / N) if P.terms else 0.0
    B = upper_symbol_operator(P, J, N) / N
    return opnorm(A - B)


def duffield_error(P: PolynomialSymbol, N: int) -> float:
    """Largest sector gap between the Weyl operator and the symbol operator."""
    return max(sector_gap(P, N, tj) for tj in admissible_two_j(N))


# ---------------------------------------------------------------------------
# total-spin sectors of the product space


@lru_cache(maxsize=8)
def sector_isometries(N: int) -> dict[int, list[np.ndarray]]:
    """Isometries ``W_{J,alpha}`` (2^N x (2J+1)) onto the irreducible blocks.

    Highest-weight vectors come from S^2 on the S_z = J subspace; each
    multiplicity space is orthonormalised by Gram-Schmidt over the standard
    basis in index order, then lowered with S_-.
    """
    if N > 12:
        raise ValueError("sector isometries are limited to N <= 12")
    S = build_total_spin(N)
    Sm = sp.csr_matrix((S.Sx - 1j * S.Sy).real)
    S2 = (S.Sx @ S.Sx + S.Sy @ S.Sy + S.Sz @ S.Sz).real.tocsr()
    dim = 1 << N
    ups = np.array([N - bin(i).count("1") for i in range(dim)])
    out: dict[int, list[np.ndarray]] = {}
    for tj in sorted(admissible_two_j(N), reverse=True):
        J = tj / 2
        idx = np.flatnonzero(ups == (N + tj) // 2)
        sub = S2[idx][:, idx].toarray()
        E, V = np.linalg.eigh(sub)
        hw = V[:, np.abs(E - J * (J + 1)) < 1e-8]
        mult = block_degeneracy(N, J)
        assert hw.shape[1] == mult, (N, tj, hw.shape[1], mult)
        # canonical basis of the highest-weight space: project e_1, e_2, ...
        proj = hw @ hw.T
        basis = []
        for col in range(proj.shape[1]):
            v = proj[:, col].copy()
            for b in basis:
                v -= (b @ v) * b
            n = np.linalg.norm(v)
            if n > 1e-8:
                basis.append(v / n)
            if len(basis) == mult:
                break
        blocks = []
        for b in basis:
            W = np.zeros((dim, tj + 1))
            W[idx, 0] = b
            for k in range(1, tj + 1):
                m = J - (k - 1)
                W[:, k] = Sm @ W[:, k - 1] / np.sqrt(J * (J + 1) - m * (m - 1))
            blocks.append(W)
        out[tj] = blocks
    return out


def assemble_HV_blocks(f, N: int, q: SphereQuadrature | None = None) -> np.ndarray:
    """``sum_{J, alpha} W_{J,alpha} H_J W_{J,alpha}^T`` with symbol-built blocks H_J."""
    dim = 1 << N
    H = np.zeros((dim, dim), dtype=complex)
    for tj, Ws in sector_isometries(N).items():
        HJ = upper_symbol_operator(f, tj / 2, N, q if q is not None else None)
        for W in Ws:
            H += W @ HJ @ W.T
    H = 0.5 * (H + H.conj().T)
    if not np.any(H.imag):
        return np.ascontiguousarray(H.real)
    return H


__all__ = [
    "QuadratureError",
    "SandwichViolation",
    "SphereQuadrature",
    "assemble_HV_blocks",
    "berezin_lieb_bounds",
    "coherent_states",
    "coherent_vector",
    "default_quadrature",
    "duffield_error",
    "lower_symbol",
    "resolution_check",
    "sector_gap",
    "sector_isometries",
    "symbol_function",
    "upper_symbol_operator",
]
