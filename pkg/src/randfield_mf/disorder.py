"""Laws of the random external field and reproducible site samples.

Every site consumes exactly four uniforms from a counter-based Philox
stream keyed by ``(seed, stream)``: one selects an atom, three feed the
continuous components. A realization for N sites is therefore a prefix of
the realization for any N' > N with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import ndtri

UNIFORMS_PER_SITE = 4
FIELD_STREAM = 0
TILT_STREAM = 1

KINDS = ("point_mass", "axis_dichotomous", "gaussian", "uniform_box", "empirical")


class DistributionError(ValueError):
    """Invalid field-distribution parameters."""


def _vec(v, name: str) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise DistributionError(f"{name} must be a finite 3-vector, got {v!r}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class FieldDistribution:
    """Law of the site field b. Only finite-mean families can be built.

    Use the classmethod constructors; ``params`` holds the normalized
    parameters for the given ``kind``.
    """

    kind: str
    params: dict = field(default_factory=dict, compare=False)
    _key: tuple = field(default=(), repr=False)

    # constructors ---------------------------------------------------------
    @classmethod
    def point_mass(cls, v=(0.0, 0.0, 0.0)) -> "FieldDistribution":
        v = _vec(v, "v")
        return cls("point_mass", {"v": v}, ("point_mass", v))

    @classmethod
    def axis_dichotomous(cls, axis: str = "z", eps: float = 1.0, p: float = 0.5) -> "FieldDistribution":
        if axis not in ("x", "y", "z"):
            raise DistributionError(f"axis must be x, y or z, got {axis!r}")
        eps, p = float(eps), float(p)
        if not np.isfinite(eps) or not 0.0 <= p <= 1.0:
            raise DistributionError("need finite eps and 0 <= p <= 1")
        return cls("axis_dichotomous", {"axis": axis, "eps": eps, "p": p}, ("axis_dichotomous", axis, eps, p))

    @classmethod
    def gaussian(cls, mean=(0.0, 0.0, 0.0), sigma: float = 1.0) -> "FieldDistribution":
        mean = _vec(mean, "mean")
        sigma = float(sigma)
        if not np.isfinite(sigma) or sigma < 0:
            raise DistributionError("sigma must be finite and >= 0")
        return cls("gaussian", {"mean": mean, "sigma": sigma}, ("gaussian", mean, sigma))

    @classmethod
    def uniform_box(cls, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> "FieldDistribution":
        lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
        if any(a > b for a, b in zip(lo, hi)):
            raise DistributionError("need lo <= hi componentwise")
        return cls("uniform_box", {"lo": lo, "hi": hi}, ("uniform_box", lo, hi))

    @classmethod
    def empirical(cls, atoms, weights=None) -> "FieldDistribution":
        atoms = tuple(_vec(a, "atom") for a in atoms)
        if not atoms:
            raise DistributionError("empirical law needs at least one atom")
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(atoms) or any(w < 0 or not np.isfinite(w) for w in weights):
            raise DistributionError("weights must be nonnegative, one per atom")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise DistributionError(f"weights sum to {sum(weights)}, not 1")
        return cls("empirical", {"atoms": atoms, "weights": weights}, ("empirical", atoms, weights))

    # serialization --------------------------------------------------------
    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "FieldDistribution":
        spec = dict(spec)
        kind = spec.pop("kind", None)
        allowed = {
            "point_mass": {"v"},
            "axis_dichotomous": {"axis", "eps", "p"},
            "gaussian": {"mean", "sigma"},
            "uniform_box": {"lo", "hi"},
            "empirical": {"atoms", "weights"},
        }
        if kind not in allowed:
            raise DistributionError(f"unknown distribution kind {kind!r}")
        extra = set(spec) - allowed[kind]
        if extra:
            raise DistributionError(f"unknown keys for {kind}: {sorted(extra)}")
        return getattr(cls, kind)(**spec)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for k, v in self.params.items():
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[k] = v
        return out

    def __hash__(self):
        return hash(self._key)

    def __eq__(self, other):
        return isinstance(other, FieldDistribution) and self._key == other._key

    # structure ------------------------------------------------------------
    @property
    def is_atomic(self) -> bool:
        return self.kind in ("point_mass", "axis_dichotomous", "empirical")

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom vectors (K, 3) and weights (K,) for atomic kinds."""
        if self.kind == "point_mass":
            return np.array([self.params["v"]]), np.array([1.0])
        if self.kind == "axis_dichotomous":
            e = np.eye(3)["xyz".index(self.params["axis"])] * self.params["eps"]
            p = self.params["p"]
            return np.array([e, -e]), np.array([p, 1.0 - p])
        if self.kind == "empirical":
            return np.array(self.params["atoms"]), np.array(self.params["weights"])
        raise DistributionError(f"{self.kind} is not atomic")

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (N, 4) to field vectors (N, 3)."""
        n = u.shape[0]
        if self.is_atomic:
            vecs, w = self.atoms()
            cdf = np.cumsum(w)
            cdf[-1] = 1.0
            idx = np.searchsorted(cdf, u[:, 0], side="right")
            idx = np.minimum(idx, len(w) - 1)
            return vecs[idx].copy()
        cont = u[:, 1:4]
        if self.kind == "gaussian":
            z = ndtri(_open_unit(cont))
            return np.asarray(self.params["mean"]) + self.params["sigma"] * z
        if self.kind == "uniform_box":
            lo, hi = np.asarray(self.params["lo"]), np.asarray(self.params["hi"])
            return lo + (hi - lo) * cont
        raise DistributionError(self.kind)  # pragma: no cover

    def component_std(self) -> np.ndarray:
        """Per-component standard deviation (used for sampling bands)."""
        if self.is_atomic:
            vecs, w = self.atoms()
            mu = w @ vecs
            return np.sqrt(np.maximum(w @ (vecs - mu) ** 2, 0.0))
        if self.kind == "gaussian":
            return np.full(3, self.params["sigma"])
        lo, hi = np.asarray(self.params["lo"]), np.asarray(self.params["hi"])
        return (hi - lo) / np.sqrt(12.0)


def _open_unit(u: np.ndarray) -> np.ndarray:
    # map [0,1) doubles to the open interval so the inverse CDF stays finite
    return (np.floor(u * 2.0**53) + 0.5) / 2.0**53


def uniform_stream(seed: int, stream: int, count: int) -> np.ndarray:
    """First ``count`` uniforms of the Philox stream keyed by (seed, stream)."""
    key = (int(seed) % 2**64) + (int(stream) << 64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(count)


@dataclass(frozen=True)
class FieldRealization:
    N: int
    fields: np.ndarray = field(repr=False)
    seed: int
    distribution: FieldDistribution

    def __post_init__(self):
        if self.fields.shape != (self.N, 3):
            raise ValueError("fields must have shape (N, 3)")
        self.fields.setflags(write=False)

    def prefix(self, n: int) -> "FieldRealization":
        return FieldRealization(n, self.fields[:n].copy(), self.seed, self.distribution)

    @classmethod
    def from_fields(cls, fields, distribution: FieldDistribution | None = None) -> "FieldRealization":
        """Wrap explicit site fields (seed recorded as -1)."""
        fields = np.array(fields, dtype=float).reshape(-1, 3)
        dist = distribution or FieldDistribution.empirical([tuple(f) for f in np.unique(fields, axis=0)])
        return cls(fields.shape[0], fields, -1, dist)


def sample_fields(dist: FieldDistribution, N: int, seed: int) -> FieldRealization:
    """i.i.d. fields b(1..N); bit-identical for equal (dist, N, seed)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    u = uniform_stream(seed, FIELD_STREAM, UNIFORMS_PER_SITE * N).reshape(N, UNIFORMS_PER_SITE)
    return FieldRealization(N, dist.transform(u), int(seed), dist)


def mean_field_vector(dist: FieldDistribution) -> np.ndarray:
    """Exact E[b]."""
    if dist.is_atomic:
        vecs, w = dist.atoms()
        return w @ vecs
    if dist.kind == "gaussian":
        return np.array(dist.params["mean"])
    lo, hi = np.asarray(dist.params["lo"]), np.asarray(dist.params["hi"])
    return 0.5 * (lo + hi)


def bbar(r: FieldRealization) -> float:
    """Mean field modulus (1/N) sum_n |b(n)|."""
    return float(np.mean(np.linalg.norm(r.fields, axis=1)))


def standard_normals(seed: int, stream: int, count: int) -> np.ndarray:
    """Reproducible standard Gaussians by inverse CDF on the counter stream."""
    return ndtri(_open_unit(uniform_stream(seed, stream, count)))
