"""Acceptance criteria 1-10; a summary line per criterion is printed at the end."""

import time

import numpy as np
import pytest

from randfield_mf.coherent import berezin_lieb_bounds, duffield_error, symbol_function
from randfield_mf.disorder import FieldDistribution, FieldRealization, sample_fields
from randfield_mf.experiments import parse_config, run_convergence, run_fluctuation
from randfield_mf.hamiltonian import GaussianTilt, assemble_full, assemble_perturbed, assemble_quadratic_penalty, magnetization
from randfield_mf.spin_algebra import PolynomialSymbol, random_polynomial, weyl_ordered_operator
from randfield_mf.thermo import (
    bogoliubov_gap,
    commutator_moment,
    cosh_bound_gap,
    duhamel_curvature,
    pressure,
    spectral_variance_identity,
    trial_state_bound,
)
from randfield_mf.varform import (
    annealed_lambda,
    annealed_pressure,
    binary_entropy,
    curvature_constant,
    deterministic_pressure,
    lambda_star,
    lambda_value,
    make_evaluator,
    micro_gap,
    quadratic_inf_pressure,
    variational_pressure,
)

acceptance = pytest.mark.acceptance
MZ2 = PolynomialSymbol.parse("1*z^2")
ZERO = FieldDistribution.point_mass()


def note(request, text):
    request.node.user_properties.append(("detail", text))


def random_hermitian(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (A + A.conj().T) / 2


def loglog_slope(Ns, errs):
    return float(np.polyfit(np.log(Ns), np.log(errs), 1)[0])


@acceptance(1, "free-spin exactness")
def test_criterion_1_free_spins(request):
    t0 = time.perf_counter()
    worst = 0.0
    for N in range(1, 13):
        H = assemble_full(None, FieldRealization.from_fields(np.zeros((N, 3))))
        worst = max(worst, abs(pressure(H.matrix, N) - np.log(2)))
    star0 = float(lambda_star(make_evaluator(ZERO), np.zeros((1, 3)))[0])
    elapsed = time.perf_counter() - t0
    note(request, f"max |p_N - ln 2| = {worst:.1e}, Lambda*(0) + ln 2 = {star0 + np.log(2):.1e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert abs(star0 + np.log(2)) <= 1e-12
    assert elapsed < 1.0


@acceptance(2, "deterministic Curie-Weiss")
def test_criterion_2_curie_weiss(request):
    t0 = time.perf_counter()
    det = deterministic_pressure(MZ2)
    var = variational_pressure(MZ2, make_evaluator(ZERO))
    m = abs(det.maximizer[2])
    rep = run_convergence(parse_config({"model": "1*z^2", "N_list": [2, 4, 6, 8, 10, 12]}))
    gaps = rep.column("gap")
    elapsed = time.perf_counter() - t0
    note(request, f"p = {det.pressure:.7f}, |var - det| = {abs(var.pressure - det.pressure):.1e}, gap(12) = {gaps[-1]:.4f}, {elapsed:.0f} s")
    assert abs(var.pressure - det.pressure) <= 1e-6
    assert abs(m - np.tanh(2 * m)) <= 1e-9
    assert det.pressure == pytest.approx(1.0197, abs=1e-4)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] <= 0.08
    assert elapsed < 120


@acceptance(3, "Legendre transform of the free Lambda is minus the binary entropy")
def test_criterion_3_free_legendre(request):
    rng = np.random.default_rng(2024)
    u = rng.normal(size=(50, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = np.concatenate([rng.uniform(0, 1, 45) ** (1 / 3), [0.0, 0.9, 0.99, 0.999, 1 - 2e-6]])
    m = r[:, None] * u
    err = np.abs(lambda_star(make_evaluator(ZERO), m) + binary_entropy(np.linalg.norm(m, axis=1)))
    note(request, f"max error {err.max():.1e} on 50 points")
    assert err.max() <= 1e-8


@acceptance(4, "random-field Curie-Weiss stationarity and quenched convergence")
def test_criterion_4_random_field(request):
    t0 = time.perf_counter()
    dist = {"kind": "axis_dichotomous", "axis": "z", "eps": 0.5, "p": 0.5}
    ev = make_evaluator(FieldDistribution.from_dict(dist))
    res = variational_pressure(MZ2, ev)
    m = res.maximizer[2]
    resid = abs(m - 0.5 * (np.tanh(2 * m + 0.5) + np.tanh(2 * m - 0.5)))
    rep = run_convergence(parse_config({"model": "1*z^2", "distribution": dist, "N_list": [4, 12], "seeds": {"count": 32, "base": 100}}))
    g4, g12 = rep.column("gap")
    elapsed = time.perf_counter() - t0
    note(request, f"stationarity residual {resid:.1e}, gap(4) = {g4:.4f}, gap(12) = {g12:.4f}, {elapsed:.0f} s")
    assert resid <= 1e-6
    assert g12 <= g4 / 2
    assert elapsed < 600


@acceptance(5, "spectral identities and the cosh inequality")
def test_criterion_5_identities(request):
    rng = np.random.default_rng(5)
    cases = [(random_hermitian(rng, 16, 2), random_hermitian(rng, 16), 4) for _ in range(5)]
    for N in range(1, 7):
        r = sample_fields(FieldDistribution.gaussian((0, 0, 0.3), 0.8), N, N)
        H = assemble_full(PolynomialSymbol.parse("1*z^2; -0.4*x*y; 0.2*x"), r).matrix
        cases += [(H, M, N) for M in magnetization(N)]
    worst_var = worst_comm = worst_curv = 0.0
    for H, A, N in cases:
        lhs, rhs = spectral_variance_identity(H, A)
        worst_var = max(worst_var, abs(lhs - rhs) / max(1, abs(lhs)))
        lhs, rhs = commutator_moment(H, A)
        worst_comm = max(worst_comm, abs(lhs - rhs) / max(1, abs(lhs)))
        f, fd, _ = duhamel_curvature(H, A, N)
        worst_curv = max(worst_curv, abs(fd - f) / abs(f))
    x = np.logspace(-8, np.log10(50), 5000)
    cosh_min = float(cosh_bound_gap(x).min())
    note(request, f"variance {worst_var:.1e}, commutator {worst_comm:.1e}, curvature vs FD {worst_curv:.1e}, cosh gap min {cosh_min:.1e}")
    assert worst_var <= 1e-10 and worst_comm <= 1e-10
    assert worst_curv <= 1e-5
    assert cosh_min >= 0


@acceptance(6, "inequality suite")
def test_criterion_6_inequalities(request):
    rng = np.random.default_rng(6)
    bog = min(bogoliubov_gap(random_hermitian(rng, 16, 2), random_hermitian(rng, 16, 2)) for _ in range(30))

    sandwich_ok = True
    for J in (0.5, 1, 2, 4, 6):
        for text in ("1*z^2", "1*x*y; -0.5*z", "-2*z^2; 1*x^3"):
            lo, ex, up = berezin_lieb_bounds(symbol_function(PolynomialSymbol.parse(text), J, max(1, int(2 * J))), J)
            sandwich_ok &= lo <= ex * (1 + 1e-8) and ex <= up * (1 + 1e-8)

    floor = np.inf
    for _ in range(20):
        P = random_polynomial(rng, 3, n_terms=3)
        alpha = curvature_constant(P) * rng.uniform(1.1, 3) + 0.1
        g = micro_gap(P, alpha)
        N = int(rng.integers(1, 9))
        m = rng.normal(size=3)
        m *= rng.uniform(0, 1) / np.linalg.norm(m)
        A = (P(m) + g) * np.eye(2**N) + alpha * assemble_quadratic_penalty(m, N) / N - weyl_ordered_operator(P, N) / N
        floor = min(floor, np.linalg.eigvalsh(A).min())

    gibbs_excess = -np.inf
    for N in (2, 4, 6, 8):
        for seed in range(3):
            r = sample_fields(FieldDistribution.axis_dichotomous("z", 1.0), N, seed)
            H = assemble_full(PolynomialSymbol.parse("1*z^2; -0.5*x^2"), r).matrix
            p = pressure(H, N)
            for h in rng.normal(size=(4, 3)):
                gibbs_excess = max(gibbs_excess, trial_state_bound(H, r, h) - p)

    C = 2 * np.sqrt(2 / np.pi)
    gauss_ok = True
    for N in (2, 4, 6):
        r = sample_fields(FieldDistribution.axis_dichotomous("z", 1.0), N, 3)
        H = assemble_full(MZ2, r)
        p0 = pressure(H.matrix, N)
        s = np.array([pressure(assemble_perturbed(H, GaussianTilt.sample(k)).matrix, N) - p0 for k in range(400)])
        mean, se = s.mean(), s.std(ddof=1) / np.sqrt(len(s))
        gauss_ok &= mean + 5 * se >= 0 and mean - 5 * se <= C / np.sqrt(N)

    note(request, f"Bogoliubov min {bog:.1e}, micro floor {floor:.2e}, Gibbs excess max {gibbs_excess:.1e}")
    assert bog >= -1e-10
    assert sandwich_ok
    assert floor >= -1e-9
    assert gibbs_excess <= 1e-9
    assert gauss_ok


@acceptance(7, "quadratic duality")
def test_criterion_7_duality(request):
    evs = [
        make_evaluator(ZERO),
        make_evaluator(FieldDistribution.axis_dichotomous("z", 1.0)),
        make_evaluator(FieldDistribution.empirical([(0.5, 0, 0.2), (-0.3, 0.4, 0), (0, -0.6, 1.1)], [0.3, 0.3, 0.4])),
        make_evaluator(FieldDistribution.gaussian((0.2, 0, -0.1), 0.5), order=12),
    ]
    rng = np.random.default_rng(7)
    alphas = [np.zeros(3), np.array([0, 0, 1.0])] + [rng.uniform(0, 2, 3) * (rng.uniform(size=3) > 0.2) for _ in range(3)]
    gaps = [abs(np.subtract(*quadratic_inf_pressure(a, ev))) for ev in evs for a in alphas]
    note(request, f"{len(gaps)} points, max gap {max(gaps):.1e}")
    assert len(gaps) == 20
    assert max(gaps) <= 1e-6


@acceptance(8, "Duffield decay slope")
def test_criterion_8_duffield(request):
    Ns = np.arange(4, 15)
    slopes = {}
    for name in ("1*z", "1*z^2", "1*x*y"):
        P = PolynomialSymbol.parse(name)
        slopes[name] = loglog_slope(Ns, [duffield_error(P, int(N)) for N in Ns])
    note(request, ", ".join(f"{k}: {v:.3f}" for k, v in slopes.items()))
    for s in slopes.values():
        assert s <= -0.8


@acceptance(9, "annealed dominates quenched")
def test_criterion_9_annealed(request):
    models = [MZ2, PolynomialSymbol.parse("0.5*x^2; 1*z^2"), PolynomialSymbol.parse("-1*z^2; 0.3*x"), PolynomialSymbol({})]
    dists = [
        (FieldDistribution.axis_dichotomous("z", 1.0), {}),
        (FieldDistribution.empirical([(0.5, 0, 0.2), (-0.3, 0.4, 0)], [0.5, 0.5]), {}),
        (FieldDistribution.uniform_box((-0.5, 0, 0), (0.5, 0.4, 1.0)), {"order": 6}),
    ]
    worst = np.inf
    for dist, kw in dists:
        ev = make_evaluator(dist, **kw)
        for V in models:
            worst = min(worst, annealed_pressure(V, ev).pressure - variational_pressure(V, ev, grid=11).pressure)
    dich = FieldDistribution.axis_dichotomous("z", 1.0)
    ann = annealed_lambda(dich, (0, 0, 1))
    que = lambda_value(make_evaluator(dich), (0, 0, 1))
    closed = np.log(2 * np.cosh(1) ** 2)
    note(request, f"min annealed - quenched {worst:.1e}; annealed {ann:.7f} (closed form {closed:.7f}), quenched {que:.7f}")
    assert worst >= -1e-9
    # the two-atom closed form is the oracle; it is 1.5607088
    assert abs(ann - closed) <= 1e-6
    assert abs(que - 1.355649) <= 1e-6


@pytest.mark.slow
@acceptance(10, "fluctuation decay and Hoelder chain")
def test_criterion_10_fluctuations(request):
    free = run_fluctuation(parse_config({"model": "", "N_list": list(range(1, 13))}))
    free_err = float(np.max(np.abs(free.column("var_mean") - 3 / free.column("N"))))
    rep = run_fluctuation(
        parse_config(
            {
                "model": "1*z^2",
                "distribution": {"kind": "axis_dichotomous", "axis": "z", "eps": 1.0, "p": 0.5},
                "N_list": [4, 8, 12],
                "tilt": {"samples": 8, "base": 0},
            }
        )
    )
    var = rep.column("var_mean")
    viol = int(rep.column("chain_violations").sum())
    note(request, "var " + ", ".join(f"{v:.4f}" for v in var) + f"; chain violations {viol}; free error {free_err:.1e}")
    assert np.all(np.diff(var) < 0)
    assert viol == 0
    assert free_err <= 1e-12
