"""Random-field Hamiltonians plus auxiliary operators (tilts, linearized
quadratic models, penalties)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disorder import TILT_STREAM, FieldRealization, standard_normals
from .spin_algebra import (
    PolynomialSymbol,
    _check_size,
    _maybe_real,
    build_total_spin,
    dense,
    weyl_ordered_operator,
)


@dataclass(frozen=True)
class GaussianTilt:
    gamma: np.ndarray
    seed: int | None = None

    @classmethod
    def sample(cls, seed: int) -> "GaussianTilt":
        """Three standard normals on the dedicated tilt stream."""
        return cls(standard_normals(seed, TILT_STREAM, 3), int(seed))

    @classmethod
    def zero(cls) -> "GaussianTilt":
        return cls(np.zeros(3), None)


@dataclass(frozen=True)
class AssembledHamiltonian:
    matrix: np.ndarray = field(repr=False)
    N: int
    meanfield: object = None
    realization: FieldRealization | None = None
    tilt: np.ndarray | None = None
    penalty: tuple | None = None

    def with_matrix(self, matrix, **changes) -> "AssembledHamiltonian":
        kw = dict(
            meanfield=self.meanfield,
            realization=self.realization,
            tilt=self.tilt,
            penalty=self.penalty,
        )
        kw.update(changes)
        return AssembledHamiltonian(_maybe_real(matrix), self.N, **kw)


def _as_matrix(H) -> np.ndarray:
    return H.matrix if isinstance(H, AssembledHamiltonian) else H


def magnetization(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense M = (2/N) S components."""
    return tuple(dense(M) for M in build_total_spin(N).magnetization())


def linear_spin_operator(N: int, v) -> np.ndarray:
    """Dense ``<v, S>`` for a constant vector v."""
    S = build_total_spin(N)
    op = v[0] * S.Sx + v[1] * S.Sy + v[2] * S.Sz
    return _maybe_real(dense(op).astype(complex))


def assemble_field_term(r: FieldRealization) -> np.ndarray:
    """``H_b = 2 sum_n <b(n), S(n)>`` as a dense matrix."""
    N = r.N
    _check_size(N)
    dim = 1 << N
    idx = np.arange(dim)
    b = np.asarray(r.fields)
    has_y = np.any(b[:, 1] != 0)
    H = np.zeros((dim, dim), dtype=complex if has_y else float)
    diag = np.zeros(dim)
    for n in range(1, N + 1):
        bx, by, bz = b[n - 1]
        mask = 1 << (N - n)
        up = (idx & mask) == 0
        diag += np.where(up, bz, -bz)
        if bx != 0 or by != 0:
            # 2 * (b_x s_x + b_y s_y): <flip|.|up> = b_x + i b_y, <flip|.|down> = b_x - i b_y
            vals = np.where(up, bx + 1j * by, bx - 1j * by) if has_y else np.full(dim, bx)
            H[idx ^ mask, idx] += vals
    H[idx, idx] += diag
    return H


def assemble_full(P: PolynomialSymbol | None, r: FieldRealization) -> AssembledHamiltonian:
    """``H_{P,b} = N P(2S/N) + H_b``."""
    H = assemble_field_term(r)
    if P is not None and P.terms:
        H = H + weyl_ordered_operator(P, r.N)
    return AssembledHamiltonian(_maybe_real(H), r.N, meanfield=P, realization=r)


def assemble_perturbed(H: AssembledHamiltonian, t: GaussianTilt) -> AssembledHamiltonian:
    """Add the tilt ``sqrt(N) <gamma, M> = (2/sqrt(N)) <gamma, S>``."""
    gamma = np.asarray(t.gamma, dtype=float)
    if not np.any(gamma):
        return H.with_matrix(H.matrix, tilt=gamma)
    extra = (2.0 / np.sqrt(H.N)) * linear_spin_operator(H.N, gamma)
    return H.with_matrix(H.matrix + extra, tilt=gamma)


def quadratic_symbol(alpha) -> PolynomialSymbol:
    """``P_alpha(m) = -(alpha_x m_x^2 + alpha_y m_y^2 + alpha_z m_z^2)``."""
    a = _check_alpha(alpha)
    return PolynomialSymbol({(2, 0, 0): -a[0], (0, 2, 0): -a[1], (0, 0, 2): -a[2]})


def _check_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float).reshape(3)
    if np.any(a < 0):
        raise ValueError("alpha must be componentwise nonnegative")
    return a


def _check_ball(m) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(3)
    if np.linalg.norm(m) > 1 + 1e-12:
        raise ValueError("m must lie in the closed unit ball")
    return m


def assemble_linearized(alpha, m, r: FieldRealization) -> AssembledHamiltonian:
    """Linear model ``N<alpha, m*m> - 4 sum alpha_mu m_mu S_mu + H_b``.

    Equal to ``H_{P_alpha,b}`` plus the penalty with weights alpha.
    """
    a = _check_alpha(alpha)
    m = _check_ball(m)
    N = r.N
    H = assemble_field_term(r).astype(complex)
    H = H - 4.0 * linear_spin_operator(N, a * m)
    H[np.diag_indices_from(H)] += N * float(a @ (m * m))
    return AssembledHamiltonian(_maybe_real(H), N, meanfield=quadratic_symbol(a), realization=r, penalty=(a, m))


def assemble_weighted_penalty(alpha, m, N: int) -> np.ndarray:
    """``N sum_mu alpha_mu (M_mu - m_mu)^2``."""
    a = np.asarray(alpha, dtype=float).reshape(3)
    m = _check_ball(m)
    _check_size(N)
    dim = 1 << N
    out = np.zeros((dim, dim), dtype=complex)
    for a_mu, m_mu, M in zip(a, m, build_total_spin(N).magnetization()):
        if a_mu == 0:
            continue
        D = dense(M).astype(complex)
        D[np.diag_indices(dim)] -= m_mu
        out += a_mu * (D @ D)
    return _maybe_real(N * out)


def assemble_quadratic_penalty(m, N: int) -> np.ndarray:
    """``Q_m = N sum_xi (M_xi - m_xi)^2``; positive semidefinite."""
    return assemble_weighted_penalty(np.ones(3), m, N)


def assemble_framed_penalty(m, N: int, frame: np.ndarray) -> np.ndarray:
    """``N sum_k (<e_k, M> - <e_k, m>)^2`` for an orthonormal frame (rows e_k)."""
    m = _check_ball(m)
    _check_size(N)
    dim = 1 << N
    Ms = build_total_spin(N).magnetization()
    out = np.zeros((dim, dim), dtype=complex)
    for e in np.asarray(frame, dtype=float):
        D = dense(e[0] * Ms[0] + e[1] * Ms[1] + e[2] * Ms[2]).astype(complex)
        D[np.diag_indices(dim)] -= e @ m
        out += D @ D
    return _maybe_real(N * out)


def site_field_term(r: FieldRealization, n: int) -> np.ndarray:
    """Single-site piece ``2 <b(n), S(n)>`` of the field term."""
    fields = np.zeros_like(np.asarray(r.fields))
    fields[n - 1] = r.fields[n - 1]
    return assemble_field_term(FieldRealization(r.N, fields, r.seed, r.distribution))


def norm_budget(P: PolynomialSymbol | None, r: FieldRealization) -> float:
    """Triangle-inequality bound N * sum|coeff| + sum_n |b(n)| on ||H_{P,b}||."""
    l1 = P.coefficient_l1() if P is not None else 0.0
    return r.N * l1 + float(np.sum(np.linalg.norm(r.fields, axis=1)))


__all__ = [
    "AssembledHamiltonian",
    "GaussianTilt",
    "assemble_field_term",
    "assemble_framed_penalty",
    "assemble_full",
    "assemble_linearized",
    "assemble_perturbed",
    "assemble_quadratic_penalty",
    "assemble_weighted_penalty",
    "linear_spin_operator",
    "magnetization",
    "norm_budget",
    "quadratic_symbol",
    "site_field_term",
]
