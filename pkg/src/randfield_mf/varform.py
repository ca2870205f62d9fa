"""Limiting variational objects.

``Lambda(h) = E log 2cosh|h + b|`` and its Legendre transform, the
variational pressure ``sup_m V(m) - Lambda*(m)``, the annealed variant,
the quadratic inf-formula with its dual, and the microcanonical gap g_P.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, roots_hermite, roots_legendre

from .disorder import FieldDistribution, FieldRealization, sample_fields
from .spin_algebra import PolynomialSymbol, directional_decomposition

INTERIOR_MARGIN = 1e-6
NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-10
GRID_POINTS = 17
RESTARTS = 3
VALUE_TOL = 1e-8
METHODS = ("closed_form", "atom_sum", "gauss_hermite", "gauss_legendre", "sample_average")
# pruning threshold for tensor quadrature weights, relative to the largest
PRUNE_REL = 1e-20
_CHUNK = 1 << 21


class LegendreConvergenceError(ArithmeticError):
    """Newton iteration for h(m) did not reach the residual target."""


def log2cosh(r):
    r = np.abs(r)
    return r + np.log1p(np.exp(-2.0 * r))


def _tanh_over_r(r):
    small = r < 1e-4
    rs = np.where(small, 1.0, r)
    return np.where(small, 1.0 - r * r / 3.0, np.tanh(rs) / rs)


def _tensor_rule(x1d: np.ndarray, w1d: np.ndarray, lo, scale) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of a 1-D rule per component; degenerate axes collapse."""
    axes, wts = [], []
    for k in range(3):
        if scale[k] == 0:
            axes.append(np.array([lo[k]]))
            wts.append(np.array([1.0]))
        else:
            axes.append(lo[k] + scale[k] * x1d)
            wts.append(w1d)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", *wts).reshape(-1)
    keep = W > PRUNE_REL * W.max()
    W = W[keep]
    return X[keep], W / W.sum()


@dataclass(frozen=True)
class LambdaEvaluator:
    """Quadrature for expectations over the field law.

    ``annealed=False`` gives ``E log 2cosh|h+b|``; ``annealed=True`` gives
    ``log E 2cosh|h+b|``.
    """

    distribution: FieldDistribution
    method: str = ""
    order: int = 40
    count: int = 0
    seed: int | None = None
    annealed: bool = False
    nodes: np.ndarray = field(default=None, repr=False, compare=False)
    weights: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        dist = self.distribution
        method = self.method or _default_method(dist)
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method == "closed_form" and dist.kind != "point_mass":
            raise ValueError("closed_form needs a point-mass field")
        if method == "atom_sum" and not dist.is_atomic:
            raise ValueError("atom_sum needs an atomic law")
        if method == "gauss_hermite" and dist.kind != "gaussian":
            raise ValueError("gauss_hermite applies only to gaussian fields")
        if method == "gauss_legendre" and dist.kind != "uniform_box":
            raise ValueError("gauss_legendre applies only to uniform_box fields")
        if method == "sample_average" and (self.seed is None or self.count < 2):
            raise ValueError("sample_average needs an explicit seed and count >= 2")
        if method in ("closed_form", "atom_sum"):
            X, W = dist.atoms()
            X, W = X[W > 0], W[W > 0]
        elif method == "gauss_hermite":
            x, w = roots_hermite(self.order)
            s = dist.params["sigma"] * np.sqrt(2.0)
            X, W = _tensor_rule(x, w, np.asarray(dist.params["mean"]), np.full(3, s))
        elif method == "gauss_legendre":
            x, w = roots_legendre(self.order)
            lo, hi = np.asarray(dist.params["lo"]), np.asarray(dist.params["hi"])
            X, W = _tensor_rule((x + 1) / 2, w, lo, hi - lo)
        else:
            X = sample_fields(dist, self.count, self.seed).fields.copy()
            W = np.full(self.count, 1.0 / self.count)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "nodes", X)
        object.__setattr__(self, "weights", W)

    def with_annealed(self, annealed: bool = True) -> "LambdaEvaluator":
        return LambdaEvaluator(self.distribution, self.method, self.order, self.count, self.seed, annealed)

    # evaluation --------------------------------------------------------
    def _chunks(self, h: np.ndarray):
        step = max(1, _CHUNK // len(self.weights))
        for i in range(0, h.shape[0], step):
            yield slice(i, i + step)

    def _terms(self, h: np.ndarray):
        v = h[:, None, :] + self.nodes[None, :, :]
        r = np.sqrt(np.einsum("bki,bki->bk", v, v))
        return v, r

    def value(self, h) -> np.ndarray | float:
        h = np.asarray(h, dtype=float)
        flat = h.reshape(-1, 3)
        out = np.empty(flat.shape[0])
        logw = np.log(self.weights)
        for sl in self._chunks(flat):
            _, r = self._terms(flat[sl])
            f = log2cosh(r)
            if self.annealed:
                out[sl] = logsumexp(f + logw, axis=1)
            else:
                out[sl] = f @ self.weights
        return out.reshape(h.shape[:-1]) if h.ndim > 1 else float(out[0])

    def _pieces(self, h: np.ndarray):
        """Per-node weights, gradients and Hessians of log 2cosh|h+b|."""
        v, r = self._terms(h)
        rs = np.where(r > 0, r, 1.0)
        u = v / rs[..., None]
        t = np.tanh(r)
        grad = t[..., None] * u
        if self.annealed:
            f = log2cosh(r) + np.log(self.weights)
            q = np.exp(f - f.max(axis=1, keepdims=True))
            q /= q.sum(axis=1, keepdims=True)
        else:
            q = np.broadcast_to(self.weights, r.shape)
        return q, u, r, t, grad

    def gradient(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        flat = h.reshape(-1, 3)
        out = np.empty_like(flat)
        for sl in self._chunks(flat):
            q, _u, _r, _t, grad = self._pieces(flat[sl])
            out[sl] = np.einsum("bk,bki->bi", q, grad)
        return out.reshape(h.shape)

    def hessian(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        flat = h.reshape(-1, 3)
        out = np.empty((flat.shape[0], 3, 3))
        eye = np.eye(3)
        for sl in self._chunks(flat):
            q, u, r, t, grad = self._pieces(flat[sl])
            sech2 = 1.0 - t * t
            tr = _tanh_over_r(r)
            # sum_k q [sech2 u u^T + (tanh r / r)(I - u u^T)]; u = 0 at r = 0
            c = q * (sech2 - tr)
            Hs = np.matmul((c[..., None] * u).transpose(0, 2, 1), u)
            Hs += np.einsum("bk,bk->b", q, tr)[:, None, None] * eye
            if self.annealed:
                g = np.einsum("bk,bki->bi", q, grad)
                Hs += np.matmul((q[..., None] * grad).transpose(0, 2, 1), grad) - g[:, :, None] * g[:, None, :]
            out[sl] = Hs
        return out.reshape(h.shape + (3,))

    def value_stderr(self, h) -> float:
        """Monte Carlo standard error of the quenched value (sample_average only)."""
        if self.method != "sample_average":
            return 0.0
        _, r = self._terms(np.asarray(h, dtype=float).reshape(1, 3))
        return float(np.std(log2cosh(r[0]), ddof=1) / np.sqrt(len(self.weights)))

    # boundary of the ball -----------------------------------------------
    def boundary_value(self, u) -> np.ndarray:
        """``Lambda*(u)`` for unit ``u``: the limit of ``t - Lambda(t u)``."""
        u = np.asarray(u, dtype=float).reshape(-1, 3)
        proj = u @ self.nodes.T
        if self.annealed:
            return -logsumexp(proj + np.log(self.weights), axis=1)
        return -(proj @ self.weights)

    @property
    def mean_field(self) -> np.ndarray:
        return self.weights @ self.nodes


def _default_method(dist: FieldDistribution) -> str:
    if dist.is_atomic:
        return "atom_sum"
    return {"gaussian": "gauss_hermite", "uniform_box": "gauss_legendre"}[dist.kind]


def make_evaluator(dist: FieldDistribution, method: str = "", **kw) -> LambdaEvaluator:
    return LambdaEvaluator(dist, method, **kw)


def lambda_value(ev: LambdaEvaluator, h) -> float:
    return ev.value(h)


def lambda_gradient(ev: LambdaEvaluator, h) -> np.ndarray:
    return ev.gradient(h)


def annealed_lambda(dist_or_ev, h) -> float:
    """``log E 2cosh|h+b|``."""
    ev = dist_or_ev if isinstance(dist_or_ev, LambdaEvaluator) else LambdaEvaluator(dist_or_ev)
    return ev.with_annealed(True).value(h)


def binary_entropy(r):
    """``-((1+r)/2) ln((1+r)/2) - ((1-r)/2) ln((1-r)/2)`` with 0 ln 0 = 0."""
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise ValueError("binary_entropy needs 0 <= r <= 1")
    p, q = (1 + r) / 2, (1 - r) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Legendre transform


@dataclass(frozen=True)
class LegendreSolution:
    m: np.ndarray
    h_of_m: np.ndarray
    lambda_value: float
    lambda_star: float
    iterations: int
    residual: float
    converged: bool
    boundary: bool = False


def _initial_h(ev: LambdaEvaluator, m: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(m, axis=1)
    scale = np.where(r > 0, np.arctanh(np.minimum(r, 1 - 1e-12)) / np.where(r > 0, r, 1.0), 1.0)
    return scale[:, None] * m


def _newton_batch(ev: LambdaEvaluator, m: np.ndarray, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """Damped Newton for argmax_h <m,h> - Lambda(h), vectorised over rows of m."""
    h = _initial_h(ev, m)
    lam = np.atleast_1d(ev.value(h))
    obj = np.einsum("bi,bi->b", m, h) - lam
    grad = np.atleast_2d(ev.gradient(h))
    res = np.linalg.norm(grad - m, axis=1)
    iters = np.zeros(len(m), dtype=int)
    active = res > tol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Hs = ev.hessian(h[idx])
        step = np.linalg.solve(Hs, (m[idx] - grad[idx])[..., None])[..., 0]
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        h_new = h[idx].copy()
        lam_new = lam[idx].copy()
        obj_new = obj[idx].copy()
        pending = np.arange(len(idx))
        for _halve in range(60):
            trial = h[idx][pending] + t[pending, None] * step[pending]
            lt = np.atleast_1d(ev.value(trial))
            ot = np.einsum("bi,bi->b", m[idx][pending], trial) - lt
            floor = obj[idx][pending] - 1e-15 * (1 + np.abs(obj[idx][pending]))
            ok = ot >= floor
            sel = pending[ok]
            h_new[sel], lam_new[sel], obj_new[sel] = trial[ok], lt[ok], ot[ok]
            accepted[sel] = True
            pending = pending[~ok]
            if not len(pending):
                break
            t[pending] *= 0.5
        h[idx], lam[idx], obj[idx] = h_new, lam_new, obj_new
        grad[idx] = np.atleast_2d(ev.gradient(h[idx]))
        res[idx] = np.linalg.norm(grad[idx] - m[idx], axis=1)
        iters[idx] += 1
        # rows whose step was rejected at every scale cannot improve further
        active[idx] = (res[idx] > tol) & accepted
    return h, lam, obj, iters, res


def legendre_batch(ev: LambdaEvaluator, ms, tol: float = NEWTON_TOL) -> dict:
    """Vectorised Legendre transform at the rows of ``ms``.

    Points with ``|m| > 1 - INTERIOR_MARGIN`` use the chord between the
    interior solution at radius ``1 - INTERIOR_MARGIN`` and the exact value
    on the unit sphere.
    """
    ms = np.asarray(ms, dtype=float).reshape(-1, 3)
    radius = np.linalg.norm(ms, axis=1)
    if np.any(radius > 1 + 1e-12):
        raise ValueError("Legendre transform requested outside the closed unit ball")
    r0 = 1.0 - INTERIOR_MARGIN
    outer = radius > r0
    unit = np.where(outer[:, None], ms / np.where(radius > 0, radius, 1.0)[:, None], 0.0)
    solve_at = np.where(outer[:, None], r0 * unit, ms)
    h, lam, obj, iters, res = _newton_batch(ev, solve_at, tol)
    star = obj.copy()
    if outer.any():
        edge = ev.boundary_value(unit[outer])
        frac = (np.minimum(radius[outer], 1.0) - r0) / (1.0 - r0)
        star[outer] = obj[outer] + frac * (edge - obj[outer])
    return {
        "m": ms,
        "h": h,
        "lambda": lam,
        "lambda_star": star,
        "iterations": iters,
        "residual": res,
        "converged": res <= tol,
        "boundary": outer,
    }


def legendre_transform(ev: LambdaEvaluator, m, strict: bool = True) -> LegendreSolution:
    """``Lambda*(m) = sup_h <m,h> - Lambda(h)`` by damped Newton.

    With ``strict`` a residual above the target raises
    LegendreConvergenceError (the message carries the best iterate).
    """
    out = legendre_batch(ev, m)
    sol = LegendreSolution(
        out["m"][0],
        out["h"][0],
        float(out["lambda"][0]),
        float(out["lambda_star"][0]),
        int(out["iterations"][0]),
        float(out["residual"][0]),
        bool(out["converged"][0]),
        bool(out["boundary"][0]),
    )
    if strict and not sol.converged:
        raise LegendreConvergenceError(
            f"residual {sol.residual:.3e} after {sol.iterations} iterations; best h = {sol.h_of_m}"
        )
    return sol


def lambda_star(ev: LambdaEvaluator, ms) -> np.ndarray:
    return legendre_batch(ev, ms)["lambda_star"]


# ---------------------------------------------------------------------------
# variational pressures


@dataclass(frozen=True)
class VariationalResult:
    pressure: float
    maximizer: np.ndarray
    h: np.ndarray | None = None
    trace: dict = field(default_factory=dict, compare=False)


def ball_grid(n: int = GRID_POINTS) -> np.ndarray:
    g = np.linspace(-1.0, 1.0, n)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts[np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12]


def _pick_starts(points: np.ndarray, values: np.ndarray, k: int, sep: float = 0.3) -> list[np.ndarray]:
    order = np.argsort(-values, kind="stable")
    starts: list[np.ndarray] = []
    for i in order:
        if all(np.linalg.norm(points[i] - s) > sep for s in starts):
            starts.append(points[i])
        if len(starts) == k:
            break
    return starts


def _maximize(objective, starts, polish, trace) -> tuple[float, np.ndarray]:
    """Nelder-Mead from each start, then a Newton polish of the best."""
    best_val, best_m = -np.inf, None
    for s in starts:
        res = optimize.minimize(
            lambda x: -objective(x),
            s,
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": VALUE_TOL * 1e-2, "maxiter": 4000, "initial_simplex": _simplex(s)},
        )
        trace.setdefault("local", []).append({"start": s.tolist(), "value": -res.fun, "evals": int(res.nfev)})
        if -res.fun > best_val:
            best_val, best_m = -res.fun, res.x
    m, val, steps = polish(best_m, best_val)
    trace["polish_steps"] = steps
    return val, m


def _simplex(s: np.ndarray, size: float = 0.06) -> np.ndarray:
    pts = [s] + [s + size * e for e in np.eye(3)]
    return np.array([_into_ball(p) for p in pts])


def _into_ball(m: np.ndarray, r_max: float = 1.0) -> np.ndarray:
    r = np.linalg.norm(m)
    return m if r <= r_max else m * (r_max / r)


def _newton_polish(V: PolynomialSymbol, value, h_of, hess_of, m, val, max_steps: int = 30):
    """Newton on grad V(m) - h(m) = 0, accepting only ascent steps."""
    steps = 0
    for _ in range(max_steps):
        if np.linalg.norm(m) >= 1 - INTERIOR_MARGIN:
            break
        h = h_of(m)
        g = V.gradient(m) - h
        if np.linalg.norm(g) < 1e-12:
            break
        # Hessian of Lambda* is the inverse Hessian of Lambda at h(m)
        Hst = np.linalg.inv(hess_of(h))
        A = V.hessian(m) - Hst
        try:
            step = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            break
        t, moved = 1.0, False
        for _h in range(30):
            trial = m + t * step
            if np.linalg.norm(trial) < 1 - INTERIOR_MARGIN:
                tv = value(trial)
                if tv >= val - 1e-14 * (1 + abs(val)):
                    m, val, moved = trial, tv, True
                    break
            t *= 0.5
        steps += 1
        if not moved:
            break
    return m, val, steps


def variational_pressure(V: PolynomialSymbol | None, ev: LambdaEvaluator, grid: int = GRID_POINTS) -> VariationalResult:
    """``sup_{|m| <= 1} V(m) - Lambda*(m)``.

    Coarse ball grid, Nelder-Mead from the best separated grid points, then
    a Newton polish of the stationarity condition ``grad V(m) = h(m)``.
    """
    V = V if V is not None else PolynomialSymbol({})
    pts = ball_grid(grid)
    sol = legendre_batch(ev, pts)
    vals = V(pts) - sol["lambda_star"]
    flagged = int(np.sum(~sol["converged"] & ~sol["boundary"]))
    trace: dict = {"grid_points": len(pts), "grid_best": float(vals.max()), "flagged": flagged}

    def objective(m):
        if np.linalg.norm(m) > 1.0:
            return -np.inf
        return float(V(m) - legendre_batch(ev, m)["lambda_star"][0])

    def h_of(m):
        return legendre_batch(ev, m)["h"][0]

    def hess_of(h):
        return ev.hessian(h.reshape(1, 3))[0]

    starts = _pick_starts(pts, vals, RESTARTS)
    val, m = _maximize(
        objective, starts, lambda m0, v0: _newton_polish(V, objective, h_of, hess_of, m0, v0), trace
    )
    # the result never falls below an audited grid value
    if vals.max() > val:
        i = int(np.argmax(vals))
        val, m = float(vals[i]), pts[i]
    h = legendre_batch(ev, m)["h"][0]
    return VariationalResult(float(val), np.asarray(m), h, trace)


def _free_hessian(h: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(h)
    if r == 0:
        return np.eye(3)
    u = h / r
    uu = np.outer(u, u)
    return (1 - np.tanh(r) ** 2) * uu + (np.tanh(r) / r) * (np.eye(3) - uu)


def _free_h(m: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(m)
    return np.zeros(3) if r == 0 else np.arctanh(r) * m / r


def deterministic_pressure(V: PolynomialSymbol | None) -> VariationalResult:
    """``max_r I(r) + max_Omega V(r e(Omega))`` for the field-free model.

    Independent of the Legendre solver: uses ``h(m) = artanh|m| m/|m|``.
    """
    V = V if V is not None else PolynomialSymbol({})
    r = np.linspace(0.0, 1.0, 41)
    th = np.linspace(0.0, np.pi, 25)
    ph = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
    R, TH, PH = np.meshgrid(r, th, ph, indexing="ij")
    pts = np.stack([R * np.sin(TH) * np.cos(PH), R * np.sin(TH) * np.sin(PH), R * np.cos(TH)], axis=-1).reshape(-1, 3)
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
    vals = V(pts) + binary_entropy(np.minimum(np.linalg.norm(pts, axis=1), 1.0))
    trace: dict = {"grid_points": len(pts), "grid_best": float(vals.max())}

    def objective(m):
        rr = np.linalg.norm(m)
        if rr > 1.0:
            return -np.inf
        return float(V(m) + binary_entropy(rr))

    starts = _pick_starts(pts, vals, RESTARTS)
    val, m = _maximize(
        objective, starts, lambda m0, v0: _newton_polish(V, objective, _free_h, _free_hessian, m0, v0), trace
    )
    if vals.max() > val:
        i = int(np.argmax(vals))
        val, m = float(vals[i]), pts[i]
    return VariationalResult(float(val), np.asarray(m), _free_h(m) if np.linalg.norm(m) < 1 else None, trace)


def annealed_pressure(V: PolynomialSymbol | None, dist_or_ev) -> VariationalResult:
    """Variational pressure with Lambda replaced by ``log E 2cosh|h+b|``."""
    ev = dist_or_ev if isinstance(dist_or_ev, LambdaEvaluator) else LambdaEvaluator(dist_or_ev)
    return variational_pressure(V, ev.with_annealed(True))


# ---------------------------------------------------------------------------
# quadratic models


def _alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float).reshape(3)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("alpha must be finite and componentwise nonnegative")
    return a


def quadratic_polynomial(alpha) -> PolynomialSymbol:
    a = _alpha(alpha)
    return PolynomialSymbol({(2, 0, 0): -a[0], (0, 2, 0): -a[1], (0, 0, 2): -a[2]})


def quadratic_inf_pressure(alpha, ev: LambdaEvaluator) -> tuple[float, float]:
    """(inf-form, dual sup-form) for the quadratic symbol ``-sum alpha m^2``.

    The inf-form ``<alpha, m*m> + Lambda(-2 alpha*m)`` is convex and coercive
    in the components with alpha > 0; its minimiser satisfies
    ``m = grad Lambda`` there, so it lies inside the ball automatically.
    """
    a = _alpha(alpha)
    act = a > 0

    def f(x):
        m = np.zeros(3)
        m[act] = x
        return float(a @ (m * m) + ev.value(-2 * a * m))

    def grad(x):
        m = np.zeros(3)
        m[act] = x
        g = 2 * a * m - 2 * a * ev.gradient(-2 * a * m)
        return g[act]

    def hess(x):
        m = np.zeros(3)
        m[act] = x
        D = np.diag(a)
        Hm = 2 * D + 4 * D @ ev.hessian((-2 * a * m).reshape(1, 3))[0] @ D
        return Hm[np.ix_(act, act)]

    if act.any():
        x = np.zeros(act.sum())
        fx = f(x)
        for _ in range(NEWTON_MAX_ITER):
            g = grad(x)
            if np.linalg.norm(g) < 1e-13:
                break
            step = -np.linalg.solve(hess(x), g)
            t = 1.0
            while t > 1e-12:
                ft = f(x + t * step)
                if ft <= fx + 1e-15 * (1 + abs(fx)):
                    x, fx = x + t * step, ft
                    break
                t *= 0.5
            else:
                break
        inf_form = fx
    else:
        inf_form = float(ev.value(np.zeros(3)))
    dual = variational_pressure(quadratic_polynomial(a), ev).pressure
    return float(inf_form), float(dual)


def linear_pressure_finiteN(alpha, m, r: FieldRealization) -> float:
    """Closed-form pressure of the linearised quadratic model."""
    a = _alpha(alpha)
    m = np.asarray(m, dtype=float).reshape(3)
    if np.linalg.norm(m) > 1 + 1e-12:
        raise ValueError("m must lie in the closed unit ball")
    v = -2 * a * m + np.asarray(r.fields)
    return float(a @ (m * m) + np.mean(log2cosh(np.linalg.norm(v, axis=1))))


# ---------------------------------------------------------------------------
# microcanonical gap


def curvature_constant(P: PolynomialSymbol) -> float:
    """``C = sum_k |beta_k| d_k (d_k - 1) / 2`` over the directional terms."""
    return float(sum(abs(t.beta) * t.d * (t.d - 1) / 2 for t in directional_decomposition(P)))


def _term_gap(c_fn, a: float, grid: int = 4001) -> float:
    """``max_{x0,x in [-1,1]} c(x0)(x-x0) - a (x-x0)^2`` with the x-max in closed form."""

    def inner(x0):
        c = c_fn(x0)
        t = np.clip(c / (2 * a), -1 - x0, 1 - x0)
        return c * t - a * t * t

    xs = np.linspace(-1.0, 1.0, grid)
    vals = inner(xs)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x0: -inner(x0), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-13})
        best = max(best, float(-res.fun))
    return best


def micro_gap(P: PolynomialSymbol, alpha: float) -> float:
    """Gap ``g_P(alpha)`` so that ``P(M) <= (P(m) + g) + alpha sum (M - m)^2``.

    Each nonconstant term ``beta <w,m>^d`` receives ``C_k`` plus an equal
    share of the excess ``alpha - C``.
    """
    terms = [t for t in directional_decomposition(P) if t.d > 0]
    C = sum(abs(t.beta) * t.d * (t.d - 1) / 2 for t in terms)
    if alpha <= C:
        raise ValueError(f"alpha = {alpha} must exceed the curvature constant {C}")
    if not terms:
        return 0.0
    excess = (alpha - C) / len(terms)
    total = 0.0
    for t in terms:
        def c_fn(x0, t=t):
            return t.beta * t.d * np.asarray(x0, dtype=float) ** (t.d - 1)

        total += _term_gap(c_fn, excess)
    return total


__all__ = [
    "INTERIOR_MARGIN",
    "LambdaEvaluator",
    "LegendreConvergenceError",
    "LegendreSolution",
    "VariationalResult",
    "annealed_lambda",
    "annealed_pressure",
    "ball_grid",
    "binary_entropy",
    "curvature_constant",
    "deterministic_pressure",
    "lambda_gradient",
    "lambda_star",
    "lambda_value",
    "legendre_batch",
    "legendre_transform",
    "linear_pressure_finiteN",
    "log2cosh",
    "make_evaluator",
    "micro_gap",
    "quadratic_inf_pressure",
    "quadratic_polynomial",
    "variational_pressure",
]
