"""Population models on the real line.

A :class:`DistributionModel` knows its CDF, the left limit of its CDF and
its generalized inverse ``inf{x : F(x) >= u}``.  The uniformize /
deuniformize pair moves samples between the model and ``Unif[0, 1]`` so
the regularizer only ever has to deal with the unit interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import special

__all__ = [
    "DistributionModel",
    "DomainError",
    "Sample",
    "UniformizedSample",
    "bernoulli",
    "cdf",
    "cdf_left",
    "deuniformize",
    "discrete",
    "exponential",
    "gaussian",
    "open_uniforms",
    "parse_distribution",
    "piecewise_linear",
    "quantile",
    "sample_iid",
    "uniform01",
    "uniformize",
]

TINY = np.nextafter(0.0, 1.0)


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations on the real line, in their original order."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DomainError("sample values must be finite")
        object.__setattr__(self, "values", v)

    @cached_property
    def sorted_view(self) -> np.ndarray:
        """Stable permutation putting `values` in nondecreasing order."""
        return _frozen(np.argsort(self.values, kind="stable"), dtype=np.int64)

    def sorted(self) -> np.ndarray:
        return self.values[self.sorted_view]

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class UniformizedSample:
    """Values on [0, 1] plus, for each entry, the index of its source observation."""

    values: np.ndarray
    provenance: np.ndarray | None = None

    def __post_init__(self):
        v = _frozen(self.values).reshape(-1)
        if v.size and (not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0):
            raise DomainError("uniformized values must lie in [0, 1]")
        prov = np.arange(v.size) if self.provenance is None else self.provenance
        prov = _frozen(prov, dtype=np.int64)
        if prov.shape != v.shape:
            raise ValueError("provenance must have one entry per value")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DistributionModel:
    """An immutable population distribution.

    Build instances with the factory functions (:func:`uniform01`,
    :func:`exponential`, :func:`gaussian`, :func:`bernoulli`,
    :func:`discrete`, :func:`piecewise_linear`) rather than directly.

    Parameters
    ----------
    kind : str
        One of ``uniform01``, ``exponential``, ``gaussian``, ``bernoulli``,
        ``discrete``, ``piecewise``.
    params : tuple
        Scalar parameters for the parametric kinds.
    xs, ps : ndarray
        Atom locations and cumulative masses (discrete kinds) or knot
        locations and CDF values (piecewise).
    """

    kind: str
    params: tuple = ()
    xs: np.ndarray = field(default_factory=lambda: _frozen([]))
    ps: np.ndarray = field(default_factory=lambda: _frozen([]))

    @property
    def is_atomic(self) -> bool:
        if self.kind in ("bernoulli", "discrete"):
            return True
        if self.kind == "piecewise":
            return bool(np.any(np.diff(self.xs) == 0))
        return False

    @property
    def support(self) -> tuple[float, float]:
        """Closed hull of the support."""
        if self.kind == "uniform01":
            return 0.0, 1.0
        if self.kind == "exponential":
            return 0.0, np.inf
        if self.kind == "gaussian":
            return -np.inf, np.inf
        if self.kind == "piecewise":
            lo = self.xs[np.searchsorted(self.ps, 0.0, side="right") - 1]
            hi = self.xs[np.searchsorted(self.ps, 1.0, side="left")]
            return float(lo), float(hi)
        mass = np.diff(self.ps, prepend=0.0)
        atoms = self.xs[mass > 0]
        return float(atoms[0]), float(atoms[-1])

    def describe(self) -> str:
        if self.kind in ("uniform01",):
            return "uniform01"
        if self.kind in ("exponential", "gaussian", "bernoulli"):
            return f"{self.kind}(" + ", ".join(repr(p) for p in self.params) + ")"
        return f"{self.kind}({self.xs.size} points)"

    def cdf(self, x):
        return cdf(self, x)

    def cdf_left(self, x):
        return cdf_left(self, x)

    def quantile(self, u):
        return quantile(self, u)


def uniform01() -> DistributionModel:
    return DistributionModel("uniform01")


def exponential(rate: float = 1.0) -> DistributionModel:
    if not rate > 0 or not np.isfinite(rate):
        raise DomainError("exponential rate must be positive")
    return DistributionModel("exponential", (float(rate),))


def gaussian(mean: float = 0.0, stddev: float = 1.0) -> DistributionModel:
    if not stddev > 0 or not np.isfinite(stddev) or not np.isfinite(mean):
        raise DomainError("gaussian needs a finite mean and positive stddev")
    return DistributionModel("gaussian", (float(mean), float(stddev)))


def bernoulli(p: float) -> DistributionModel:
    if not 0.0 <= p <= 1.0:
        raise DomainError("bernoulli p must lie in [0, 1]")
    p = float(p)
    return DistributionModel("bernoulli", (p,), _frozen([0.0, 1.0]), _frozen([1.0 - p, 1.0]))


def discrete(values, masses) -> DistributionModel:
    """Finitely supported distribution with the given atoms and masses."""
    values = np.asarray(values, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    if values.ndim != 1 or values.shape != masses.shape or values.size == 0:
        raise DomainError("need matching, nonempty value and mass lists")
    if np.any(np.diff(values) <= 0):
        raise DomainError("atom values must be strictly increasing")
    if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-12:
        raise DomainError("masses must be nonnegative and sum to 1")
    cum = np.cumsum(masses)
    cum = np.minimum(cum, 1.0)
    cum[-1] = 1.0
    return DistributionModel("discrete", (), _frozen(values), _frozen(cum))


def piecewise_linear(xs, fs) -> DistributionModel:
    """CDF interpolated linearly between knots ``(xs[i], fs[i])``.

    Repeated knot locations encode jumps; the CDF takes the last value
    listed at a repeated location, which keeps it right-continuous.
    """
    xs = np.asarray(xs, dtype=np.float64)
    fs = np.asarray(fs, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
        raise DomainError("need at least two matching knots")
    if np.any(np.diff(xs) < 0) or np.any(np.diff(fs) < 0):
        raise DomainError("knots must be nondecreasing in x and F(x)")
    if fs[0] != 0.0 or fs[-1] != 1.0:
        raise DomainError("piecewise CDF must start at 0 and end at 1")
    return DistributionModel("piecewise", (), _frozen(xs), _frozen(fs))


def _scalar_or_array(out, like):
    return float(out) if np.ndim(like) == 0 else out


def _interp_right(model, x):
    xs, fs = model.xs, model.ps
    i = np.searchsorted(xs, x, side="right") - 1
    last = xs.size - 1
    j = np.clip(i, 0, last - 1)
    x0, x1 = xs[j], xs[j + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(x1 > x0, (x - x0) / (x1 - x0), 1.0)
    out = fs[j] + np.clip(t, 0.0, 1.0) * (fs[j + 1] - fs[j])
    out = np.where(i >= last, 1.0, out)
    return np.where(i < 0, 0.0, out)


def _interp_left(model, x):
    xs, fs = model.xs, model.ps
    i = np.searchsorted(xs, x, side="left") - 1
    j = np.clip(i, 0, xs.size - 2)
    x0, x1 = xs[j], xs[j + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(x1 > x0, (x - x0) / (x1 - x0), 1.0)
    out = fs[j] + np.clip(t, 0.0, 1.0) * (fs[j + 1] - fs[j])
    out = np.where(i >= xs.size - 1, 1.0, out)
    return np.where(i < 0, 0.0, out)


def cdf(model: DistributionModel, x):
    """F(x) = P(X <= x)."""
    xa = np.asarray(x, dtype=np.float64)
    kind = model.kind
    if kind == "uniform01":
        out = np.clip(xa, 0.0, 1.0)
    elif kind == "exponential":
        out = np.where(xa > 0, -np.expm1(-model.params[0] * np.maximum(xa, 0.0)), 0.0)
    elif kind == "gaussian":
        mu, sd = model.params
        out = special.ndtr((xa - mu) / sd)
    elif kind in ("bernoulli", "discrete"):
        i = np.searchsorted(model.xs, xa, side="right")
        out = np.where(i > 0, model.ps[np.maximum(i - 1, 0)], 0.0)
    elif kind == "piecewise":
        out = _interp_right(model, xa)
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return _scalar_or_array(out, x)


def cdf_left(model: DistributionModel, x):
    """Left limit F(x-) = P(X < x)."""
    xa = np.asarray(x, dtype=np.float64)
    if model.kind in ("bernoulli", "discrete"):
        i = np.searchsorted(model.xs, xa, side="left")
        out = np.where(i > 0, model.ps[np.maximum(i - 1, 0)], 0.0)
        return _scalar_or_array(out, x)
    if model.kind == "piecewise":
        return _scalar_or_array(_interp_left(model, xa), x)
    return cdf(model, x)


def quantile(model: DistributionModel, u):
    """Generalized inverse ``inf{x : F(x) >= u}`` for u in (0, 1].

    Raises
    ------
    DomainError
        If some u is outside (0, 1], or u == 1 for a model whose support
        is unbounded above.
    """
    ua = np.asarray(u, dtype=np.float64)
    if np.any(~(ua > 0.0)) or np.any(ua > 1.0):
        raise DomainError("quantile needs u in (0, 1]")
    kind = model.kind
    if kind == "uniform01":
        out = ua.copy()
    elif kind in ("exponential", "gaussian"):
        if np.any(ua == 1.0):
            raise DomainError(f"{kind} support is unbounded above; quantile(1) is undefined")
        if kind == "exponential":
            out = -np.log1p(-ua) / model.params[0]
        else:
            mu, sd = model.params
            out = mu + sd * special.ndtri(ua)
    elif kind in ("bernoulli", "discrete"):
        out = model.xs[np.searchsorted(model.ps, ua, side="left")]
    elif kind == "piecewise":
        xs, fs = model.xs, model.ps
        j = np.searchsorted(fs, ua, side="left")
        x0, x1, f0, f1 = xs[j - 1], xs[j], fs[j - 1], fs[j]
        t = (ua - f0) / (f1 - f0)
        out = np.minimum(x0 + t * (x1 - x0), x1)
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return _scalar_or_array(out, u)


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws strictly inside (0, 1) on a 2**-53 lattice."""
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) * 2.0**-53


def sample_iid(model: DistributionModel, n: int, rng: np.random.Generator) -> Sample:
    """n independent draws by inverse transform, ``quantile(U)`` with U on (0, 1)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return Sample(np.asarray(quantile(model, open_uniforms(rng, n)), dtype=np.float64))


def _check_support(model: DistributionModel, x: np.ndarray) -> None:
    lo, hi = model.support
    bad = (x < lo) | (x > hi)
    if model.kind in ("bernoulli", "discrete"):
        mass = cdf(model, x) - cdf_left(model, x)
        bad |= ~(mass > 0)
    if np.any(bad):
        raise DomainError(f"value {x[bad][0]!r} lies outside the support of {model.describe()}")


def uniformize(sample, model: DistributionModel, rng: np.random.Generator | None = None) -> UniformizedSample:
    """Map observations to U_i on [0, 1] with ``quantile(U_i) == X_i``.

    Continuous models use ``U = F(X)``.  At atoms the randomized
    distributional transform ``U = F(X-) + V * (F(X) - F(X-))`` with V on
    (0, 1] spreads the atom's mass uniformly, so an i.i.d. sample from the
    model maps to an i.i.d. uniform sample.  `rng` is required only when
    the model has atoms.
    """
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    _check_support(model, x)
    hi = np.asarray(cdf(model, x), dtype=np.float64)
    if not model.is_atomic:
        return UniformizedSample(np.clip(hi, 0.0, 1.0))
    if rng is None:
        raise ValueError("an rng is required to uniformize a model with atoms")
    lo = np.asarray(cdf_left(model, x), dtype=np.float64)
    v = 1.0 - rng.random(x.size)
    u = lo + v * (hi - lo)
    jump = hi > lo
    # keep U strictly above F(X-) so quantile lands on X, not the atom below
    u = np.where(jump & (u <= lo), np.nextafter(lo, 1.0), u)
    u = np.where(jump, np.minimum(u, hi), u)
    return UniformizedSample(np.clip(u, 0.0, 1.0))


def deuniformize(usample, model: DistributionModel) -> Sample:
    """Apply the generalized inverse pointwise; exact zeros map to the smallest positive u."""
    u = np.asarray(usample, dtype=np.float64).reshape(-1)
    u = np.where(u <= 0.0, TINY, u)
    return Sample(np.asarray(quantile(model, u), dtype=np.float64).reshape(-1))


def _read_columns(path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}: expected two columns, got {line!r}")
            rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows)


def parse_distribution(spec) -> DistributionModel:
    """Parse a textual distribution description.

    Accepted forms: ``uniform01``, ``exp RATE``, ``gauss MEAN STD``,
    ``bern P``, ``discrete FILE`` (columns: value mass) and ``cdf FILE``
    (columns: x F(x)).  `spec` may be a string or a list of tokens.
    """
    tokens = spec.split() if isinstance(spec, str) else list(spec)
    if not tokens:
        raise ValueError("empty distribution specification")
    head, args = tokens[0].lower(), tokens[1:]
    arity = {"uniform01": 0, "exp": 1, "gauss": 2, "bern": 1, "discrete": 1, "cdf": 1}
    if head not in arity:
        raise ValueError(f"unknown distribution {tokens[0]!r}")
    if len(args) != arity[head]:
        raise ValueError(f"{head} takes {arity[head]} argument(s), got {len(args)}")
    if head == "uniform01":
        return uniform01()
    if head == "exp":
        return exponential(float(args[0]))
    if head == "gauss":
        return gaussian(float(args[0]), float(args[1]))
    if head == "bern":
        return bernoulli(float(args[0]))
    table = _read_columns(args[0])
    if head == "discrete":
        return discrete(table[:, 0], table[:, 1])
    return piecewise_linear(table[:, 0], table[:, 1])
