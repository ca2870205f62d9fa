"""Exact finite-N statistical mechanics of dense Hamiltonians.

Pressures are per qubit: ``p_N(H) = (1/N) log Tr e^H`` with N = log2(dim)
unless given explicitly. All exponentials are shifted by the largest
eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import logsumexp

from .hamiltonian import AssembledHamiltonian, GaussianTilt, assemble_full, assemble_perturbed
from .spin_algebra import PolynomialSymbol, build_total_spin
from .disorder import FieldRealization

MAX_DIM = 1 << 14
HERMITIAN_TOL = 1e-10
DEGENERATE_REL = 1e-9
FD_STEP = 1e-3


class NotHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = field(repr=False)
    source_dim: int
    diagonal: bool = False

    @property
    def weights(self) -> np.ndarray:
        """Gibbs weights e^{E_k}/Z."""
        E = self.eigenvalues
        w = np.exp(E - E.max())
        return w / w.sum()

    @property
    def log_z(self) -> float:
        return float(logsumexp(self.eigenvalues))

    def to_eigenbasis(self, A) -> np.ndarray:
        """Matrix elements <psi_k, A psi_l>."""
        return _eigenbasis(self, A)[0]


def _split(A):
    """Real and imaginary parts, None where identically zero."""
    if not np.iscomplexobj(A):
        return A, None
    re, im = A.real, A.imag
    nz = (lambda X: X.nnz and np.any(X.data)) if sp.issparse(A) else np.any
    return (re if nz(re) else None), (im if nz(im) else None)


def _eigenbasis(spec: SpectralData, A):
    """(<psi_k, A psi_l>, ||A psi_k||^2) keeping sparse A sparse.

    With real eigenvectors the real and imaginary parts of A are contracted
    separately so that only real matrix products are formed.
    """
    A = A.matrix if isinstance(A, AssembledHamiltonian) else A
    if spec.diagonal:
        D = A.toarray() if sp.issparse(A) else np.asarray(A)
        return D, np.sum(np.abs(D) ** 2, axis=0)
    V = spec.eigenvectors
    if np.iscomplexobj(V):
        AV = A @ V
        return V.conj().T @ AV, np.sum(np.abs(AV) ** 2, axis=0)
    Mk, sq = None, np.zeros(V.shape[1])
    for part, unit in zip(_split(A), (1.0, 1j)):
        if part is None:
            continue
        PV = np.asarray(part @ V)
        sq += np.einsum("ik,ik->k", PV, PV)
        term = V.T @ PV
        del PV
        Mk = term if unit == 1.0 and Mk is None else (Mk if Mk is not None else 0) + unit * term
    if Mk is None:
        Mk = np.zeros((V.shape[1],) * 2)
    return Mk, sq


def _mat(H):
    if isinstance(H, AssembledHamiltonian):
        return H.matrix
    return np.asarray(H) if not hasattr(H, "toarray") else H.toarray()


def _is_diagonal(A: np.ndarray) -> bool:
    n = A.shape[0]
    # cheap reject before the full scan
    if n > 1 and (A[0, 1:].any() or A[1:, 0].any()):
        return False
    return np.count_nonzero(A) == np.count_nonzero(np.diagonal(A))


def _max_asymmetry(A: np.ndarray, tile: int = 256) -> float:
    """``max |A - A^H|`` over square tiles (a plain transpose is cache-hostile)."""
    n = A.shape[0]
    if n <= tile:
        return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    worst = 0.0
    for i in range(0, n, tile):
        for j in range(i, n, tile):
            d = A[i : i + tile, j : j + tile] - A[j : j + tile, i : i + tile].conj().T
            worst = max(worst, float(np.max(np.abs(d))))
    return worst


def _check_hermitian(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("operator must be square")
    if A.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {A.shape[0]} exceeds {MAX_DIM}")
    asym = _max_asymmetry(A)
    if asym > HERMITIAN_TOL:
        raise NotHermitianError(f"operator not Hermitian (max asymmetry {asym:.3e})")


def _fix_phases(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    lead = V[idx, np.arange(V.shape[1])]
    phase = lead / np.abs(lead)
    return V / phase if np.iscomplexobj(V) else V * np.sign(lead)


def diagonalize(H, vectors: bool = True) -> SpectralData:
    """Full Hermitian eigendecomposition, eigenvalues ascending.

    Eigenvectors are phase-fixed so that the largest-modulus entry of each is
    real positive. Diagonal input short-circuits (identity eigenvectors).
    """
    if isinstance(H, SpectralData):
        return H
    A = _mat(H)
    _check_hermitian(A)
    n = A.shape[0]
    if np.iscomplexobj(A) and not np.any(A.imag):
        A = A.real
    if _is_diagonal(A):
        d = np.real(np.diagonal(A)).copy()
        order = np.argsort(d, kind="stable")
        if np.all(order == np.arange(n)):
            return SpectralData(d, None, n, diagonal=True)
        V = np.eye(n)[:, order]
        return SpectralData(d[order], V, n)
    if not vectors:
        return SpectralData(sla.eigvalsh(A, check_finite=False), None, n)
    E, V = sla.eigh(A, driver="evd", check_finite=False)
    return SpectralData(E, _fix_phases(V), n)


def _spectrum(H) -> SpectralData:
    return H if isinstance(H, SpectralData) else diagonalize(H)


def _n_qubits(dim: int, N: int | None) -> int:
    if N is not None:
        return N
    N = int(round(np.log2(dim)))
    if 1 << N != dim:
        raise ValueError("pass N explicitly for non power-of-two dimensions")
    return N


def log_partition(H) -> float:
    if isinstance(H, SpectralData):
        return H.log_z
    return diagonalize(H, vectors=False).log_z


def pressure(H, N: int | None = None) -> float:
    """``(1/N) (E_max + log sum_k e^{E_k - E_max})``."""
    if isinstance(H, SpectralData):
        spec = H
    else:
        spec = diagonalize(H, vectors=False)
    return spec.log_z / _n_qubits(spec.source_dim, N)


def _diag_expectations(spec: SpectralData, A) -> np.ndarray:
    """<psi_k, A psi_k> for all k."""
    A = _mat(A)
    if spec.diagonal:
        return np.real(np.diagonal(A))
    V = spec.eigenvectors
    return np.real(np.einsum("ik,ik->k", V.conj(), A @ V))


def gibbs_average(H, A) -> float:
    """``Tr e^H A / Tr e^H`` for Hermitian A."""
    spec = _spectrum(H)
    A = _mat(A)
    if A.shape[0] != spec.source_dim:
        raise ValueError("dimension mismatch")
    return float(spec.weights @ _diag_expectations(spec, A))


def thermal_variance(H, A) -> float:
    """``<A^2> - <A>^2`` in the Gibbs state of H (A dense or sparse)."""
    spec = _spectrum(H)
    A = A.matrix if isinstance(A, AssembledHamiltonian) else A
    if not sp.issparse(A):
        A = np.asarray(A)
    if A.shape[0] != spec.source_dim:
        raise ValueError("dimension mismatch")
    w = spec.weights
    if spec.diagonal:
        D = A.toarray() if sp.issparse(A) else A
        sq = np.sum(np.abs(D) ** 2, axis=0)
        mean = np.real(np.diagonal(D))
    else:
        V = spec.eigenvectors
        AV = np.asarray(A @ V)
        sq = np.sum(np.abs(AV) ** 2, axis=0)
        mean = np.real(np.einsum("ik,ik->k", V.conj(), AV))
    avg = w @ mean
    return float(w @ sq - avg * avg)


def centered_elements(spec: SpectralData, A) -> np.ndarray:
    """Eigenbasis matrix of the centered observable A - <A>."""
    A = _mat(A)
    Mk = spec.to_eigenbasis(A).astype(complex)
    avg = float(spec.weights @ np.real(np.diagonal(Mk)))
    Mk[np.diag_indices_from(Mk)] -= avg
    return Mk


def spectral_variance_identity(H, A) -> tuple[float, float]:
    """(thermal variance, (1/2Z) sum |M_kl|^2 (e^{E_k} + e^{E_l}))."""
    spec = _spectrum(H)
    lhs = thermal_variance(spec, A)
    M2 = np.abs(centered_elements(spec, A)) ** 2
    w = spec.weights
    rhs = 0.5 * float(w @ M2.sum(axis=1) + M2.sum(axis=0) @ w)
    return lhs, rhs


def commutator_moment(H, A) -> tuple[float, float]:
    """(<[A,H]^2>, -(1/2Z) sum |M_kl|^2 (e^{E_k}+e^{E_l}) (E_k - E_l)^2)."""
    Hm = _mat(H) if not isinstance(H, SpectralData) else None
    spec = _spectrum(H)
    A = _mat(A)
    if Hm is None:
        raise ValueError("commutator_moment needs the operator, not only its spectrum")
    C = A @ Hm - Hm @ A
    lhs = gibbs_average(spec, C @ C)
    rhs = _commutator_spectral(spec, A)
    return lhs, rhs


def _commutator_spectral(spec: SpectralData, A) -> float:
    M2 = np.abs(centered_elements(spec, A)) ** 2
    E = spec.eigenvalues
    w = spec.weights
    dE2 = (E[:, None] - E[None, :]) ** 2
    return -0.5 * float(np.sum(M2 * (w[:, None] + w[None, :]) * dE2))


def _kubo_kernel(spec: SpectralData) -> np.ndarray:
    """(e^{E_k} - e^{E_l}) / ((E_k - E_l) Z), with the e^{E_k}/Z limit on ties."""
    E = spec.eigenvalues
    w = spec.weights
    dE = E[:, None] - E[None, :]
    tie = np.abs(dE) <= DEGENERATE_REL * np.maximum(1.0, np.abs(E))[:, None]
    safe = np.where(tie, 1.0, dE)
    # w_k - w_l, via expm1 where the difference would cancel
    small = np.abs(dE) < 1.0
    num = np.where(small, w[None, :] * np.expm1(np.where(small, dE, 0.0)), w[:, None] - w[None, :])
    return np.where(tie, w[:, None] * np.ones_like(dE), num / safe)


def curvature_formula(H, A) -> float:
    """Kubo-Mori variance (1/Z) sum |M_kl|^2 (e^{E_k} - e^{E_l}) / (E_k - E_l).

    For ``H(g) = H + sqrt(N) g A`` this equals ``d^2 p_N / dg^2``: the
    1/N of the pressure and the (sqrt N)^2 of the tilt cancel.
    """
    spec = _spectrum(H)
    M2 = np.abs(centered_elements(spec, A)) ** 2
    return float(np.sum(M2 * _kubo_kernel(spec)))


def duhamel_curvature(H, A, N: int | None = None, gamma: float = 0.0, step: float = FD_STEP):
    """Second derivative of ``g -> p_N(H + sqrt(N) g A)`` at ``gamma``.

    Returns ``(formula, finite_difference, richardson_check)`` where the finite
    difference uses ``step`` and the check uses ``2 * step``.
    """
    H0 = np.asarray(_mat(H))
    A = _mat(A)
    N = _n_qubits(H0.shape[0], N)
    s = np.sqrt(N)

    def p(g):
        return pressure(H0 + s * g * A, N)

    formula = curvature_formula(H0 + s * gamma * A, A)
    p0 = p(gamma)
    fd = (p(gamma + step) - 2 * p0 + p(gamma - step)) / step**2
    fd2 = (p(gamma + 2 * step) - 2 * p0 + p(gamma - 2 * step)) / (2 * step) ** 2
    return formula, fd, fd2


def bogoliubov_gap(H, A, N: int | None = None) -> float:
    """``p_N(H + A) - <A>_H / N - p_N(H)``; nonnegative by convexity."""
    H0 = _mat(H)
    A = _mat(A)
    N = _n_qubits(H0.shape[0], N)
    spec = diagonalize(H0)
    return pressure(H0 + A, N) - gibbs_average(spec, A) / N - pressure(spec, N)


def cosh_bound_gap(x) -> np.ndarray:
    """``sinh x + sinh x / x - cosh x``; nonnegative for x > 0."""
    x = np.asarray(x, dtype=float)
    # sinh x - cosh x = -e^{-x}
    return np.sinh(x) / x - np.exp(-x)


@dataclass(frozen=True)
class ChainAudit:
    """One direction mu of the fluctuation chain for one Hamiltonian."""

    variance: float
    variance_spectral: float
    curvature: float
    remainder: float
    commutator: float
    holder_bound: float

    @property
    def links_hold(self) -> bool:
        tol = 1e-12 * max(1.0, abs(self.variance), abs(self.curvature))
        return (
            self.variance <= self.curvature + self.remainder + tol
            and self.remainder <= self.holder_bound + tol
            and abs(self.variance - self.variance_spectral) <= 1e-10 * max(1.0, abs(self.variance))
        )


def chain_kernels(spec: SpectralData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair weights for curvature, remainder and commutator moment."""
    w = spec.weights
    E = spec.eigenvalues
    K = _kubo_kernel(spec)
    dW = 0.5 * np.abs(w[:, None] - w[None, :])
    C = -0.5 * (w[:, None] + w[None, :]) * (E[:, None] - E[None, :]) ** 2
    return K, dW, C


def fluctuation_chain(spec: SpectralData, A, kernels=None) -> ChainAudit:
    """Evaluate every link of var <= curvature + R <= curvature + Hoelder bound.

    ``variance`` comes from ``||A psi_k||^2`` directly and
    ``variance_spectral`` from the centred double sum.
    """
    Mk, sq = _eigenbasis(spec, A)
    w = spec.weights
    E = spec.eigenvalues
    diag = np.real(np.diagonal(Mk)).copy()
    avg = float(w @ diag)
    var = float(w @ sq - avg * avg)
    M2 = np.abs(Mk) ** 2 if np.iscomplexobj(Mk) else Mk * Mk
    del Mk
    # centre: only the diagonal changes
    M2[np.diag_indices_from(M2)] = (diag - avg) ** 2
    var_spec = 0.5 * float(w @ M2.sum(axis=1) + M2.sum(axis=0) @ w)
    K, dW, C = kernels if kernels is not None else chain_kernels(spec)
    curv = float(np.vdot(M2, K))
    # R = (1/2Z) sum |M|^2 |e^{E_k} - e^{E_l}|
    R = float(np.vdot(M2, dW))
    comm = float(np.vdot(M2, C))
    holder = (0.5 * max(curv, 0.0)) ** (2 / 3) * max(-comm, 0.0) ** (1 / 3)
    return ChainAudit(var, var_spec, curv, R, comm, holder)


def _axial_model(P: PolynomialSymbol | None, r: FieldRealization) -> bool:
    """True when the model is invariant under rotations about the z axis."""
    z_only = P is None or all(a == 0 and b == 0 for (a, b, _c) in P.terms)
    return z_only and not np.any(np.asarray(r.fields)[:, :2])


def _rotate_tilt(gamma: np.ndarray) -> np.ndarray:
    # rotate about z so the tilt lies in the xz-plane
    return np.array([np.hypot(gamma[0], gamma[1]), 0.0, gamma[2]])


def fluctuation_estimate(P: PolynomialSymbol | None, r: FieldRealization, tilt_seeds=None, audit: bool = False):
    """Monte Carlo mean over tilts of sum_mu <(M_mu - <M_mu>)^2>.

    Returns ``(mean, stderr)``, plus the per-sample chain audits when
    ``audit`` is set. ``tilt_seeds=None`` uses gamma = 0 only.

    For z-axial models the tilt is rotated into the xz-plane first. This is
    a unitary equivalence that leaves the summed variance unchanged and
    keeps the Hamiltonian real.
    """
    base = assemble_full(P, r)
    Ms = build_total_spin(r.N).magnetization()
    axial = _axial_model(P, r)
    tilts = [GaussianTilt.zero()] if not tilt_seeds else [GaussianTilt.sample(s) for s in tilt_seeds]
    totals, audits = [], []
    for t in tilts:
        if axial:
            t = GaussianTilt(_rotate_tilt(t.gamma), t.seed)
        spec = diagonalize(assemble_perturbed(base, t))
        if audit:
            kernels = chain_kernels(spec)
            chain = [fluctuation_chain(spec, M, kernels) for M in Ms]
            del kernels
            audits.append(chain)
            totals.append(sum(c.variance for c in chain))
        else:
            totals.append(sum(thermal_variance(spec, M) for M in Ms))
        del spec
    totals = np.array(totals)
    stderr = float(totals.std(ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else 0.0
    if audit:
        return float(totals.mean()), stderr, audits
    return float(totals.mean()), stderr


# ---------------------------------------------------------------------------
# product trial states


def site_state(v) -> np.ndarray:
    """``e^{2<v, s>} / Tr e^{2<v, s>}`` on one qubit."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if r == 0:
        return np.eye(2) / 2
    n = v / r
    sigma = np.array([[n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], -n[2]]])
    return 0.5 * (np.eye(2) + np.tanh(r) * sigma)


def product_trial_state(r: FieldRealization, h) -> list[np.ndarray]:
    """Site factors of the trial state e^{H_b + 2<h,S>}/Tr(...)."""
    h = np.asarray(h, dtype=float)
    return [site_state(h + b) for b in r.fields]


def kron_all(factors) -> np.ndarray:
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


def entropy_term(factors) -> float:
    """``Tr rho log rho`` of a product state from each factor's eigenvalues."""
    total = 0.0
    for f in factors:
        ev = np.linalg.eigvalsh(f)
        ev = ev[ev > 0]
        total += float(np.sum(ev * np.log(ev)))
    return total


def product_expectation(H, factors) -> float:
    """``Tr[(rho_1 x ... x rho_N) H]`` by contracting one site at a time."""
    A = np.asarray(_mat(H))
    for f in factors:
        d = A.shape[0] // 2
        A = np.einsum("aibj,ba->ij", A.reshape(2, d, 2, d), f)
    return float(np.real(A[0, 0]))


def trial_state_bound(H, r: FieldRealization, h) -> float:
    """``(1/N)(Tr[rho H] - Tr[rho log rho])`` for the product trial state."""
    factors = product_trial_state(r, h)
    return (product_expectation(H, factors) - entropy_term(factors)) / r.N


__all__ = [
    "ChainAudit",
    "NotHermitianError",
    "SpectralData",
    "bogoliubov_gap",
    "centered_elements",
    "commutator_moment",
    "cosh_bound_gap",
    "curvature_formula",
    "diagonalize",
    "duhamel_curvature",
    "entropy_term",
    "chain_kernels",
    "fluctuation_chain",
    "fluctuation_estimate",
    "gibbs_average",
    "kron_all",
    "log_partition",
    "pressure",
    "product_expectation",
    "product_trial_state",
    "site_state",
    "spectral_variance_identity",
    "thermal_variance",
    "trial_state_bound",
]
