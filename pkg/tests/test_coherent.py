import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import gamma as G

from randfield_mf.coherent import (
    QuadratureError,
    SandwichViolation,
    SphereQuadrature,
    assemble_HV_blocks,
    berezin_lieb_bounds,
    coherent_states,
    coherent_vector,
    default_quadrature,
    duffield_error,
    lower_symbol,
    resolution_check,
    sector_gap,
    sector_isometries,
    symbol_function,
    upper_symbol_operator,
)
from randfield_mf.spin_algebra import (
    PolynomialSymbol,
    admissible_two_j,
    block_degeneracy,
    build_total_spin,
    dense,
    opnorm,
    spin_irrep,
    weyl_ordered_operator,
)

MZ = PolynomialSymbol.parse("1*z")
MZ2 = PolynomialSymbol.parse("1*z^2")


def rotation_state(J, theta, phi):
    """exp((theta/2)(e^{i phi} S_- - e^{-i phi} S_+)) applied to |J>."""
    S = spin_irrep(J)
    Sp = S.Sx + 1j * S.Sy
    Sm = S.Sx - 1j * S.Sy
    U = expm(0.5 * theta * (np.exp(1j * phi) * Sm - np.exp(-1j * phi) * Sp))
    return U[:, 0]


# quadrature ---------------------------------------------------------------


def sphere_moment(a, b, c):
    if a % 2 or b % 2 or c % 2:
        return 0.0
    x, y, z = (a + 1) / 2, (b + 1) / 2, (c + 1) / 2
    return 2 * G(x) * G(y) * G(z) / G(x + y + z)


@pytest.mark.parametrize("deg", [0, 3, 8, 15])
def test_quadrature_exact_on_monomials(deg):
    q = SphereQuadrature.for_degree(deg)
    assert q.exactness >= deg
    assert q.integrate(np.ones(len(q.nodes[2]))) == pytest.approx(4 * np.pi, abs=1e-12)
    D = q.directions()
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            c = deg - a - b
            vals = D[:, 0] ** a * D[:, 1] ** b * D[:, 2] ** c
            assert q.integrate(vals) == pytest.approx(sphere_moment(a, b, c), abs=1e-10)


# coherent states --------------------------------------------------------


@pytest.mark.parametrize("J", [0.5, 1, 1.5, 3])
def test_closed_form_matches_rotation(J):
    rng = np.random.default_rng(int(2 * J))
    for theta, phi in zip(rng.uniform(0, np.pi, 5), rng.uniform(0, 2 * np.pi, 5)):
        v = coherent_vector(J, theta, phi)
        assert np.linalg.norm(v) == pytest.approx(1, abs=1e-12)
        np.testing.assert_allclose(v, rotation_state(J, theta, phi), atol=1e-12)
        Sz = spin_irrep(J).Sz
        assert np.real(v.conj() @ Sz @ v) == pytest.approx(J * np.cos(theta), abs=1e-10)


def test_coherent_examples():
    v = coherent_vector(2, 0.0, 1.3)
    np.testing.assert_allclose(v, np.eye(5)[0], atol=1e-15)
    v = coherent_vector(1, np.pi / 2, 0.4)
    assert abs(np.real(v.conj() @ spin_irrep(1).Sz @ v)) < 1e-12
    v = coherent_vector(0.5, np.pi, 0.0)
    assert np.real(v.conj() @ spin_irrep(0.5).Sz @ v) == pytest.approx(-0.5, abs=1e-15)


def test_coherent_vector_domain():
    with pytest.raises(ValueError):
        coherent_vector(1, -0.1, 0)
    with pytest.raises(ValueError):
        coherent_vector(1, 0.5, 7.0)


def test_resolution_examples():
    assert resolution_check(0.5, SphereQuadrature(8, 8)) <= 1e-12
    assert resolution_check(2, SphereQuadrature(32, 32)) <= 1e-10
    assert resolution_check(0, SphereQuadrature(1, 1)) == 0


@pytest.mark.parametrize("J", [0.5, 2, 5, 7.5])
def test_default_quadrature_resolves_identity(J):
    assert resolution_check(J, default_quadrature(J)) <= 1e-10


def test_resolution_flags_coarse_rule():
    with pytest.raises(QuadratureError):
        resolution_check(3, SphereQuadrature(2, 4))


# symbols ---------------------------------------------------------------------


@pytest.mark.parametrize("J", [0.5, 1, 2.5])
def test_lower_symbol_examples(J):
    th = np.linspace(0, np.pi, 7)
    ph = np.linspace(0, 2 * np.pi, 7)
    S = spin_irrep(J)
    np.testing.assert_allclose(lower_symbol(S.Sz, J, th, ph), J * np.cos(th), atol=1e-12)
    np.testing.assert_allclose(lower_symbol(np.eye(int(2 * J + 1)), J, th, ph), 1, atol=1e-12)
    assert lower_symbol(S.Sz @ S.Sz, J, 0.0, 0.0) == pytest.approx(J * J, abs=1e-12)


def test_lower_symbol_dimension_checked():
    with pytest.raises(ValueError):
        lower_symbol(np.eye(3), 0.5, 0.1, 0.2)


@pytest.mark.parametrize("J,N", [(0.5, 1), (2, 4), (3, 10), (4.5, 9)])
def test_upper_symbol_constant(J, N):
    G = upper_symbol_operator(PolynomialSymbol.parse("1"), J, N)
    np.testing.assert_allclose(G, N * np.eye(int(2 * J + 1)), atol=1e-10)


@pytest.mark.parametrize("J,N", [(0.5, 1), (1.5, 3), (3, 6), (3, 10)])
def test_upper_symbol_linear_is_proportional_to_sz(J, N):
    G = upper_symbol_operator(MZ, J, N)
    Sz = spin_irrep(J).Sz
    c = np.real(np.trace(G @ Sz)) / np.real(np.trace(Sz @ Sz))
    assert np.abs(G - c * Sz).max() <= 1e-10
    # the cos(theta) moment of the coherent projector is S_z / (J + 1)
    assert c == pytest.approx(2 * J / (J + 1), abs=1e-12)


def test_upper_symbol_quadratic_gap_bounded():
    gaps = []
    for tj in range(1, 25, 3):
        J, N = tj / 2, tj
        Sz = spin_irrep(J).Sz
        gaps.append(opnorm(upper_symbol_operator(MZ2, J, N) - N * (2 * Sz / N) @ (2 * Sz / N)))
    assert max(gaps) <= 4


def test_upper_symbol_hermitian_for_nonpolynomial():
    G = upper_symbol_operator(lambda m: np.linalg.norm(m, axis=1), 2.5, 5, q=default_quadrature(2.5, 10))
    assert np.abs(G - G.conj().T).max() == 0


def test_upper_symbol_self_test_rejects_coarse_rule():
    with pytest.raises(QuadratureError):
        upper_symbol_operator(MZ, 4, 8, q=SphereQuadrature(3, 3))


# Berezin-Lieb --------------------------------------------------------------------


def test_berezin_single_spin_field():
    h = 1.0
    J = 0.5
    G = 2 * h * spin_irrep(J).Sz
    low, exact, up = berezin_lieb_bounds(lambda th, ph: 2 * h * (J + 1) * np.cos(th), J, G=G)
    assert exact == pytest.approx(2 * np.cosh(h), abs=1e-12)
    assert low == pytest.approx(2 * np.sinh(h) / h, abs=1e-10)
    assert low == pytest.approx(2.3504, abs=1e-4) and exact == pytest.approx(3.0862, abs=1e-4)
    assert low <= exact <= up


@pytest.mark.parametrize("J", [0.5, 1, 3.5])
def test_berezin_zero(J):
    low, exact, up = berezin_lieb_bounds(lambda th, ph: 0.0, J)
    for v in (low, exact, up):
        assert v == pytest.approx(2 * J + 1, abs=1e-10)


@pytest.mark.parametrize("J", [1, 2, 4, 6])
def test_berezin_sandwich_battery(J):
    for f in (MZ2, PolynomialSymbol.parse("1*x*y; -0.5*z"), PolynomialSymbol.parse("-2*z^2; 1*x^3")):
        N = int(2 * J)
        low, exact, up = berezin_lieb_bounds(symbol_function(f, J, N), J)
        assert low <= exact * (1 + 1e-8) and exact <= up * (1 + 1e-8)


def test_berezin_detects_inconsistent_operator():
    J = 1
    g = symbol_function(MZ2, J, 2)
    with pytest.raises(SandwichViolation):
        berezin_lieb_bounds(g, J, G=20 * np.eye(3))


# Duffield-type error -----------------------------------------------------------


@pytest.mark.parametrize("N", [2, 5, 9, 14])
def test_duffield_linear_closed_form(N):
    # gap on the J block is (2/N) J/(J+1), maximal at J = N/2
    assert duffield_error(MZ, N) == pytest.approx(2 / (N + 2), abs=1e-12)


def test_duffield_constant_is_zero():
    for N in (3, 8):
        assert duffield_error(PolynomialSymbol.parse("2.5"), N) <= 1e-10


@pytest.mark.parametrize("P", [MZ, MZ2, PolynomialSymbol.parse("1*x*y")], ids=["mz", "mz2", "mxmy"])
def test_duffield_decreasing(P):
    errs = [duffield_error(P, N) for N in range(4, 15)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    # N * error stays bounded
    assert max(N * e for N, e in zip(range(4, 15), errs)) <= 4


def test_duffield_linear_slope():
    Ns = np.arange(4, 15)
    errs = [duffield_error(MZ, int(N)) for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert slope <= -0.8, slope


def test_duffield_quadratic_ratio():
    e6, e14 = duffield_error(MZ2, 6), duffield_error(MZ2, 14)
    assert e14 <= e6 * (6 / 14) ** 0.8, (e6, e14)


def test_sector_gap_scalar_block():
    # on J = 0 both operators reduce to P(0) = 0
    assert sector_gap(MZ2, 4, 0) <= 1e-12
    assert sector_gap(MZ2, 4, 4) > 0


# sector isometries -----------------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 3, 4, 6])
def test_sector_isometries(N):
    blocks = sector_isometries(N)
    S = build_total_spin(N)
    Sz = dense(S.Sz)
    Sx = dense(S.Sx)
    dim = 1 << N
    total = np.zeros((dim, dim))
    all_W = []
    for tj in admissible_two_j(N):
        Ws = blocks[tj]
        assert len(Ws) == block_degeneracy(N, tj / 2)
        irrep = spin_irrep(tj / 2)
        for W in Ws:
            assert W.shape == (dim, tj + 1)
            np.testing.assert_allclose(W.T @ W, np.eye(tj + 1), atol=1e-12)
            np.testing.assert_allclose(W.T @ Sz @ W, irrep.Sz, atol=1e-12)
            np.testing.assert_allclose(W.T @ Sx @ W, irrep.Sx, atol=1e-12)
            total += W @ W.T
            all_W.append(W)
    np.testing.assert_allclose(total, np.eye(dim), atol=1e-12)
    B = np.hstack(all_W)
    np.testing.assert_allclose(B.T @ B, np.eye(dim), atol=1e-12)


def test_sector_isometries_deterministic():
    a = sector_isometries.__wrapped__(5)
    b = sector_isometries.__wrapped__(5)
    for tj in a:
        for x, y in zip(a[tj], b[tj]):
            assert np.array_equal(x, y)


def test_sector_isometries_size_limit():
    with pytest.raises(ValueError):
        sector_isometries(13)


# block assembly --------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 3, 6])
def test_blocks_constant(N):
    H = assemble_HV_blocks(PolynomialSymbol.parse("1"), N)
    np.testing.assert_allclose(H, N * np.eye(1 << N), atol=1e-10)


@pytest.mark.parametrize("P", [MZ2, PolynomialSymbol.parse("1*x*y; 0.5*z^3")], ids=["mz2", "mixed"])
def test_blocks_within_duffield_error_of_weyl(P):
    N = 6
    H = assemble_HV_blocks(P, N)
    gap = opnorm(H - weyl_ordered_operator(P, N))
    # blocks carry the factor N of the Hamiltonian; the sector gap is per site
    assert gap <= N * duffield_error(P, N) + 1e-9


def test_blocks_commute_with_total_spin():
    N = 5
    H = assemble_HV_blocks(lambda m: np.linalg.norm(m, axis=1), N, q=default_quadrature(N / 2, 12))
    S = build_total_spin(N)
    C = dense(S.casimir())
    assert np.abs(H @ C - C @ H).max() < 1e-10
    assert np.abs(H - H.conj().T).max() < 1e-12


@pytest.mark.parametrize("N", [4, 8])
def test_symbol_norm_bound(N):
    pairs = [
        (MZ2, PolynomialSymbol.parse("1*z^2; 0.1*x")),
        (MZ2, PolynomialSymbol.parse("0.8*z^2")),
        (PolynomialSymbol.parse("1*x*y"), PolynomialSymbol.parse("1*x*y; -0.3*y^2")),
        (lambda m: np.linalg.norm(m, axis=1), lambda m: np.linalg.norm(m, axis=1) ** 2),
        (MZ, PolynomialSymbol.parse("-1*z")),
    ]
    q = default_quadrature(N / 2, 12)
    D = q.directions()
    for f, g in pairs:
        diff = lambda m, f=f, g=g: np.asarray(f(m)) - np.asarray(g(m))
        sup = max(np.abs(diff(r * D)).max() for r in np.linspace(0, 1, 11))
        H = assemble_HV_blocks(diff, N, q)
        assert opnorm(H) <= N * sup + 1e-9


def test_symbol_norm_bound_n12_blockwise():
    # H is block diagonal over orthonormal isometries, so its norm is the largest block norm
    N = 12
    f = lambda m: np.linalg.norm(m, axis=1) - 0.5 * m[:, 2] ** 2
    g = lambda m: m[:, 0] * m[:, 1]
    diff = lambda m: f(m) - g(m)
    q = default_quadrature(N / 2, 12)
    D = q.directions()
    sup = max(np.abs(diff(r * D)).max() for r in np.linspace(0, 1, 13))
    norm = max(opnorm(upper_symbol_operator(diff, tj / 2, N, q)) for tj in admissible_two_j(N))
    assert norm <= N * sup + 1e-9
