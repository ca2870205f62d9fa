"""Configuration-driven experiments and report emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .coherent import SphereQuadrature, assemble_HV_blocks, berezin_lieb_bounds, symbol_function
from .disorder import DistributionError, FieldDistribution, bbar, sample_fields
from .hamiltonian import AssembledHamiltonian, assemble_field_term, assemble_full
from .spin_algebra import N_MAX, PolynomialSymbol
from .thermo import fluctuation_estimate, pressure, trial_state_bound
from .varform import LambdaEvaluator, lambda_star, quadratic_inf_pressure, variational_pressure

DUALITY_TOL = 1e-6
FLUCT_N_MAX = 12
BLOCK_N_MAX = 12


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


class ContractViolation(ArithmeticError):
    """A numerical contract failed (exit code 3)."""


# ---------------------------------------------------------------------------
# symbols beyond polynomials


@dataclass(frozen=True)
class NormSymbol:
    """``V(m) = c |m|``: continuous, not polynomial."""

    scale: float = 1.0
    degree: int = 1
    terms: tuple = ()

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        out = self.scale * np.linalg.norm(m, axis=-1)
        return float(out) if out.ndim == 0 else out

    def gradient(self, m):
        m = np.asarray(m, dtype=float)
        r = np.linalg.norm(m)
        return np.zeros(3) if r == 0 else self.scale * m / r

    def hessian(self, m):
        m = np.asarray(m, dtype=float)
        r = np.linalg.norm(m)
        if r == 0:
            return np.zeros((3, 3))
        u = m / r
        return self.scale * (np.eye(3) - np.outer(u, u)) / r


# ---------------------------------------------------------------------------
# configuration

_TOP_KEYS = {
    "model", "distribution", "N_list", "seeds", "tilt", "evaluator",
    "optimizer", "output", "alphas", "berezin", "ray", "threads",
}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _strict(d: Any, allowed: set, where: str) -> dict:
    _require(isinstance(d, dict), f"{where} must be an object")
    extra = set(d) - allowed
    _require(not extra, f"unknown keys in {where}: {sorted(extra)}")
    return d


def _int(v, where: str, lo: int | None = None, hi: int | None = None) -> int:
    _require(isinstance(v, int) and not isinstance(v, bool), f"{where} must be an integer")
    _require(lo is None or v >= lo, f"{where} must be >= {lo}")
    _require(hi is None or v <= hi, f"{where} must be <= {hi}")
    return v


@dataclass(frozen=True)
class ModelSpec:
    text: str
    coherent: bool = False

    def symbol(self):
        if self.text == "norm":
            return NormSymbol()
        return PolynomialSymbol.parse(self.text) if self.text.strip() else PolynomialSymbol({})

    @classmethod
    def parse(cls, v) -> "ModelSpec":
        if isinstance(v, str):
            spec = cls(v, False)
        else:
            d = _strict(v, {"polynomial", "coherent"}, "model")
            _require(len(d) == 1, "model needs exactly one of polynomial, coherent")
            key, text = next(iter(d.items()))
            _require(isinstance(text, str), "model text must be a string")
            spec = cls(text, key == "coherent")
        _require(spec.coherent or spec.text != "norm", "the norm symbol needs the coherent construction")
        try:
            spec.symbol()
        except ValueError as exc:
            raise ConfigError(f"bad model: {exc}") from exc
        return spec


@dataclass(frozen=True)
class EvaluatorSpec:
    method: str = ""
    order: int = 40
    count: int = 0
    seed: int | None = None

    def build(self, dist: FieldDistribution) -> LambdaEvaluator:
        try:
            return LambdaEvaluator(dist, self.method, self.order, self.count, self.seed)
        except ValueError as exc:
            raise ConfigError(f"evaluator: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    raw: dict = field(repr=False)
    model: ModelSpec
    distribution: FieldDistribution
    N_list: tuple[int, ...]
    seed_count: int
    seed_base: int
    tilt_samples: int
    tilt_base: int
    evaluator: EvaluatorSpec
    grid: int
    alphas: tuple[tuple[float, float, float], ...]
    berezin_J: tuple[float, ...]
    berezin_symbol: str
    berezin_N: int | None
    ray_direction: tuple[float, float, float]
    ray_points: int
    ray_max: float
    output_path: str | None
    output_format: str
    threads: int

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document completely before any computation."""
    d = _strict(doc, _TOP_KEYS, "config")
    model = ModelSpec.parse(d.get("model", ""))
    try:
        dist = FieldDistribution.from_dict(d.get("distribution", {"kind": "point_mass", "v": [0, 0, 0]}))
    except (DistributionError, TypeError) as exc:
        raise ConfigError(f"distribution: {exc}") from exc
    n_cap = BLOCK_N_MAX if model.coherent else N_MAX
    N_list = d.get("N_list", [])
    _require(isinstance(N_list, list), "N_list must be a list")
    N_list = tuple(sorted({_int(n, "N_list entry", 1, n_cap) for n in N_list}))
    seeds = _strict(d.get("seeds", {}), {"count", "base"}, "seeds")
    count = _int(seeds.get("count", 1), "seeds.count", 1)
    base = _int(seeds.get("base", 0), "seeds.base", 0)
    tilt = d.get("tilt")
    if tilt is None:
        t_samples, t_base = 0, 0
    else:
        tilt = _strict(tilt, {"samples", "base"}, "tilt")
        t_samples = _int(tilt.get("samples", 8), "tilt.samples", 8)
        t_base = _int(tilt.get("base", 0), "tilt.base", 0)
    ev = _strict(d.get("evaluator", {}), {"method", "order", "count", "seed"}, "evaluator")
    evs = EvaluatorSpec(
        ev.get("method", ""),
        _int(ev.get("order", 40), "evaluator.order", 1),
        _int(ev.get("count", 0), "evaluator.count", 0),
        None if ev.get("seed") is None else _int(ev["seed"], "evaluator.seed", 0),
    )
    evs.build(dist)
    opt = _strict(d.get("optimizer", {}), {"grid"}, "optimizer")
    grid = _int(opt.get("grid", 17), "optimizer.grid", 3)
    alphas = []
    for a in d.get("alphas", []):
        arr = np.asarray(a, dtype=float) if isinstance(a, list) else None
        _require(arr is not None and arr.shape == (3,) and np.all(arr >= 0), "alphas must be nonnegative 3-vectors")
        alphas.append(tuple(float(x) for x in arr))
    bz = _strict(d.get("berezin", {}), {"J_list", "symbol", "N"}, "berezin")
    J_list = []
    for J in bz.get("J_list", []):
        _require(isinstance(J, (int, float)) and J >= 0 and float(2 * J).is_integer(), "J must be a nonnegative half-integer")
        J_list.append(float(J))
    b_symbol = bz.get("symbol", "0")
    _require(isinstance(b_symbol, str), "berezin.symbol must be a string")
    try:
        PolynomialSymbol.parse(b_symbol)
    except ValueError as exc:
        raise ConfigError(f"berezin.symbol: {exc}") from exc
    b_N = bz.get("N")
    if b_N is not None:
        b_N = _int(b_N, "berezin.N", 1)
    ray = _strict(d.get("ray", {}), {"direction", "points", "max"}, "ray")
    direction = np.asarray(ray.get("direction", [0, 0, 1]), dtype=float)
    _require(direction.shape == (3,) and np.linalg.norm(direction) > 0, "ray.direction must be a nonzero 3-vector")
    direction = direction / np.linalg.norm(direction)
    r_points = _int(ray.get("points", 11), "ray.points", 2)
    r_max = float(ray.get("max", 0.99))
    _require(0 < r_max <= 1, "ray.max must lie in (0, 1]")
    out = _strict(d.get("output", {}), {"path", "format"}, "output")
    fmt = out.get("format", "csv")
    _require(fmt in ("csv", "json"), "output.format must be csv or json")
    threads = _int(d.get("threads", 1), "threads", 1)
    return RunConfig(
        doc, model, dist, N_list, count, base, t_samples, t_base, evs, grid,
        tuple(alphas), tuple(J_list), b_symbol, b_N,
        tuple(float(x) for x in direction), r_points, r_max, out.get("path"), fmt, threads,
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


REPORT_SCHEMA = {
    "type": "object",
    "required": ["report", "version", "config_hash", "columns", "rows", "metadata"],
    "properties": {
        "report": {"type": "string"},
        "version": {"type": "string"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "columns": {"type": "array", "items": {"type": "string"}},
        "rows": {"type": "array", "items": {"type": "array"}},
        "metadata": {"type": "object"},
    },
    "additionalProperties": False,
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12e" % float(v)
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float("%.12e" % v) if np.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render(report: Report, fmt: str, config_hash: str = "0" * 64) -> str:
    if not report.rows:
        raise ContractViolation(f"report {report.name} is empty")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.columns)
        for row in report.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "report": report.name,
            "version": __version__,
            "config_hash": config_hash,
            "columns": list(report.columns),
            "rows": [_json_value(list(r)) for r in report.rows],
            "metadata": _json_value(report.metadata),
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(report: Report, fmt: str, path: str | Path | None, config_hash: str = "0" * 64) -> str:
    """Render and write; returns the text. I/O errors carry the path."""
    text = render(report, fmt, config_hash)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return text


# ---------------------------------------------------------------------------
# task scheduling


def run_tasks(fn: Callable, tasks: list, threads: int = 1) -> list:
    """Apply ``fn`` to each task; results in task order, failures captured."""

    def safe(t):
        try:
            return fn(t), None
        except Exception as exc:  # noqa: BLE001 - degrade to a flagged row
            return None, f"{type(exc).__name__}: {exc}"

    if threads <= 1:
        return [safe(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(safe, tasks))


def _stderr(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0


def build_hamiltonian(cfg: RunConfig, N: int, seed: int) -> AssembledHamiltonian:
    r = sample_fields(cfg.distribution, N, seed)
    if cfg.model.coherent:
        H = assemble_HV_blocks(cfg.model.symbol(), N) + assemble_field_term(r)
        return AssembledHamiltonian(H, N, meanfield=cfg.model.text, realization=r)
    P = cfg.model.symbol()
    return assemble_full(P if P.terms else None, r)


def limit_pressure(cfg: RunConfig):
    ev = cfg.evaluator.build(cfg.distribution)
    return variational_pressure(cfg.model.symbol(), ev, grid=cfg.grid)


# ---------------------------------------------------------------------------
# experiments


def run_convergence(cfg: RunConfig) -> Report:
    """Quenched mean of p_N over seeds against the variational limit."""
    _require(bool(cfg.N_list), "converge needs a nonempty N_list")
    limit = limit_pressure(cfg)
    seeds = [cfg.seed_base + i for i in range(cfg.seed_count)]
    tasks = [(N, s) for N in cfg.N_list for s in seeds]
    h_star = limit.h

    def work(task):
        N, s = task
        H = build_hamiltonian(cfg, N, s)
        p = pressure(H.matrix, N)
        audit = None
        if h_star is not None:
            audit = trial_state_bound(H, H.realization, h_star) - p
        return p, audit

    results = run_tasks(work, tasks, cfg.threads)
    rows, failures, audit_max, audit_bad = [], [], -np.inf, 0
    for N in cfg.N_list:
        vals = []
        for (tN, s), (res, err) in zip(tasks, results):
            if tN != N:
                continue
            if err is not None:
                failures.append({"N": N, "seed": s, "error": err})
                continue
            vals.append(res[0])
            if res[1] is not None:
                audit_max = max(audit_max, res[1])
                audit_bad += int(res[1] > 1e-9)
        if not vals:
            continue
        vals = np.array(vals)
        mean = float(vals.mean())
        rows.append((N, mean, _stderr(vals), limit.pressure, abs(mean - limit.pressure)))
    if not rows:
        raise ContractViolation("every convergence task failed")
    meta = {
        "maximizer": limit.maximizer.tolist(),
        "seeds": cfg.seed_count,
        "failures": failures,
        "lower_bound_audit": {"max_excess": audit_max if np.isfinite(audit_max) else None, "violations": audit_bad},
    }
    return Report("convergence", ("N", "p_mean", "p_stderr", "p_limit", "gap"), rows, meta)


def run_fluctuation(cfg: RunConfig) -> Report:
    """Tilt-averaged summed magnetisation variance with the per-sample chain audit."""
    _require(bool(cfg.N_list), "fluct needs a nonempty N_list")
    _require(max(cfg.N_list) <= FLUCT_N_MAX, f"fluct supports N <= {FLUCT_N_MAX}")
    _require(not cfg.model.coherent, "fluct needs a polynomial model")
    P = cfg.model.symbol()
    P = P if P.terms else None
    tilt_seeds = [cfg.tilt_base + i for i in range(cfg.tilt_samples)] or None
    seeds = [cfg.seed_base + i for i in range(cfg.seed_count)]
    tasks = [(N, s) for N in cfg.N_list for s in seeds]

    def work(task):
        N, s = task
        r = sample_fields(cfg.distribution, N, s)
        mean, err, audits = fluctuation_estimate(P, r, tilt_seeds, audit=True)
        links = [c for sample in audits for c in sample]
        bound = np.mean([sum(c.curvature + c.holder_bound for c in sample) for sample in audits])
        violations = sum(not c.links_hold for c in links)
        return mean, bound, violations, bbar(r)

    results = run_tasks(work, tasks, cfg.threads)
    rows, failures = [], []
    for N in cfg.N_list:
        got = [res for (tN, s), (res, err) in zip(tasks, results) if tN == N and err is None]
        failures += [{"N": N, "seed": s, "error": err} for (tN, s), (res, err) in zip(tasks, results) if tN == N and err]
        if not got:
            continue
        means = np.array([g[0] for g in got])
        b = float(np.mean([g[3] for g in got]))
        rows.append((
            N,
            float(means.mean()),
            _stderr(means),
            float(np.mean([g[1] for g in got])),
            6.0 * b ** (2 / 3) * N ** (-1 / 3),
            int(sum(g[2] for g in got)),
        ))
    if not rows:
        raise ContractViolation("every fluctuation task failed")
    meta = {"tilt_samples": cfg.tilt_samples, "seeds": cfg.seed_count, "failures": failures}
    return Report("fluctuation", ("N", "var_mean", "var_stderr", "chain_bound", "field_rate", "chain_violations"), rows, meta)


def run_duality(cfg: RunConfig) -> Report:
    """Quadratic inf-form against its dual sup-form per alpha."""
    _require(bool(cfg.alphas), "duality needs a nonempty alphas list")
    ev = cfg.evaluator.build(cfg.distribution)

    def work(a):
        return quadratic_inf_pressure(a, ev)

    results = run_tasks(work, list(cfg.alphas), cfg.threads)
    rows = []
    for a, (res, err) in zip(cfg.alphas, results):
        if err is not None:
            rows.append((*a, float("nan"), float("nan"), float("nan"), False))
            continue
        inf_form, dual = res
        gap = abs(inf_form - dual)
        rows.append((*a, inf_form, dual, gap, bool(gap <= DUALITY_TOL)))
    return Report("duality", ("alpha_x", "alpha_y", "alpha_z", "inf_form", "dual_form", "gap", "ok"), rows, {})


def run_berezin(cfg: RunConfig) -> Report:
    """Berezin-Lieb sandwich per spin; a breach raises ContractViolation."""
    _require(bool(cfg.berezin_J), "berezin needs a nonempty J_list")
    P = PolynomialSymbol.parse(cfg.berezin_symbol)
    rows = []
    for J in cfg.berezin_J:
        N = cfg.berezin_N or max(1, int(round(2 * J)))
        q = SphereQuadrature.for_degree(2 * int(round(2 * J)) + P.degree + 40)
        try:
            lower, exact, upper = berezin_lieb_bounds(symbol_function(P, J, N), J, q)
        except ArithmeticError as exc:
            raise ContractViolation(f"J = {J}: {exc}") from exc
        rows.append((J, lower, exact, upper))
    return Report("berezin", ("J", "lower", "exact", "upper"), rows, {"symbol": P.format(), "N": cfg.berezin_N})


def run_lambda(cfg: RunConfig) -> Report:
    """Lambda, its gradient and Lambda* at m = s * direction along a ray."""
    ev = cfg.evaluator.build(cfg.distribution)
    d = np.asarray(cfg.ray_direction)
    s = np.linspace(0.0, cfg.ray_max, cfg.ray_points)
    pts = s[:, None] * d[None, :]
    lam = np.atleast_1d(ev.value(pts))
    grad = np.atleast_2d(ev.gradient(pts))
    star = lambda_star(ev, pts)
    rows = [(float(si), float(li), *map(float, gi), float(st)) for si, li, gi, st in zip(s, lam, grad, star)]
    return Report("lambda", ("s", "lambda", "grad_x", "grad_y", "grad_z", "lambda_star"), rows,
                  {"direction": list(cfg.ray_direction)})


EXPERIMENTS = {
    "converge": run_convergence,
    "fluct": run_fluctuation,
    "duality": run_duality,
    "berezin": run_berezin,
    "lambda": run_lambda,
}


__all__ = [
    "ConfigError",
    "ContractViolation",
    "EXPERIMENTS",
    "NormSymbol",
    "REPORT_SCHEMA",
    "Report",
    "RunConfig",
    "emit",
    "load_config",
    "parse_config",
    "render",
    "run_berezin",
    "run_convergence",
    "run_duality",
    "run_fluctuation",
    "run_lambda",
    "run_tasks",
]
