"""Parametrized diffusion-coefficient sets and their parameter boxes.

Every evaluator takes a parameter vector ``y`` and points ``x`` of shape
``(2,)`` or ``(m, 2)`` and returns a scalar or an array of length ``m``.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from math import comb

import numpy as np


class Variant(str, Enum):
    TRIG_POLY = "t1"
    CHESSBOARD = "t2"
    COOKIES_FIXED = "t3f"
    COOKIES_VARIABLE = "t3v"
    CLIPPED_POLY = "t4"


# Integer tags used in binary dataset headers.
VARIANT_TAGS = {v: i for i, v in enumerate(Variant)}


@dataclass(frozen=True)
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.lower.shape != self.upper.shape or not np.all(self.lower < self.upper):
            raise ValueError("parameter box needs lower < upper componentwise")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, y) -> bool:
        y = np.asarray(y)
        return bool(np.all((y >= self.lower) & (y <= self.upper)))


@dataclass(frozen=True)
class ParametricFamily:
    """One of the five coefficient sets plus its hyperparameters.

    Unused hyperparameters stay at zero.  Build instances through the
    ``trig_poly``/``chessboard``/... constructors, which derive ``p``.
    """

    variant: Variant
    p: int
    mu: float
    sigma: float = 0.0
    r: float = 0.0
    s: int = 0
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.mu > 0:
            raise ValueError(f"shift/clipping value mu must be > 0, got {self.mu}")
        expected = {
            Variant.TRIG_POLY: self.p,
            Variant.CHESSBOARD: self.s**2,
            Variant.COOKIES_FIXED: self.s**2,
            Variant.COOKIES_VARIABLE: 2 * self.s**2,
            Variant.CLIPPED_POLY: comb(self.k + 2, 2),
        }[self.variant]
        if self.p < 1 or self.p != expected:
            raise ValueError(f"inconsistent parameter dimension p={self.p} for {self}")
        if self.variant == Variant.COOKIES_FIXED and not 0 < self.r <= 1:
            raise ValueError(f"cookie radius factor must lie in (0, 1], got {self.r}")

    @property
    def affine(self) -> bool:
        return self.variant in (Variant.TRIG_POLY, Variant.CHESSBOARD, Variant.COOKIES_FIXED)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParametricFamily":
        return cls(**d)

    def box(self) -> ParameterBox:
        return parameter_box(self)

    def __call__(self, y, x):
        return evaluate(self, y, x)

    def sample(self, count: int, seed: int) -> np.ndarray:
        return sample_parameters(self, count, seed)


def trig_poly(p: int, sigma: float, mu: float = 1.0) -> ParametricFamily:
    return ParametricFamily(Variant.TRIG_POLY, p=p, mu=mu, sigma=sigma)


def chessboard(s: int, mu: float) -> ParametricFamily:
    return ParametricFamily(Variant.CHESSBOARD, p=s * s, mu=mu, s=s)


def cookies_fixed(s: int, mu: float, r: float = 0.8) -> ParametricFamily:
    return ParametricFamily(Variant.COOKIES_FIXED, p=s * s, mu=mu, s=s, r=r)


def cookies_variable(s: int, mu: float) -> ParametricFamily:
    return ParametricFamily(Variant.COOKIES_VARIABLE, p=2 * s * s, mu=mu, s=s)


def clipped_poly(k: int, mu: float) -> ParametricFamily:
    return ParametricFamily(Variant.CLIPPED_POLY, p=comb(k + 2, 2), mu=mu, k=k)


def parameter_box(family: ParametricFamily) -> ParameterBox:
    p = family.p
    if family.variant == Variant.CLIPPED_POLY:
        return ParameterBox(-np.ones(p), np.ones(p))
    if family.variant == Variant.COOKIES_VARIABLE:
        half = p // 2
        lower = np.concatenate([np.zeros(half), np.full(half, 0.5)])
        upper = np.concatenate([np.ones(half), np.full(half, 0.9)])
        return ParameterBox(lower, upper)
    return ParameterBox(np.zeros(p), np.ones(p))


def _points(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _finish(values, scalar):
    return float(values[0]) if scalar else values


def eval_trig_poly(family, y, x):
    pts, scalar = _points(x)
    y = np.asarray(y, dtype=float)
    i = np.arange(1, family.p + 1)
    f1 = np.floor((i + 2) / 2)
    f2 = np.ceil((i + 2) / 2)
    a = np.sin(np.pi * pts[:, :1] * f1) * np.sin(np.pi * pts[:, 1:] * f2)
    weights = y * i.astype(float) ** family.sigma
    return _finish(family.mu + (1.0 + a) @ weights, scalar)


def chessboard_cell(s: int, pts: np.ndarray) -> np.ndarray:
    """Row-major index of the half-open cell containing each point.

    Rows follow x2, columns follow x1; the last row/column is closed.
    """
    col = np.minimum(np.floor(pts[:, 0] * s), s - 1).astype(int)
    row = np.minimum(np.floor(pts[:, 1] * s), s - 1).astype(int)
    return row * s + col


def eval_chessboard(family, y, x):
    pts, scalar = _points(x)
    y = np.asarray(y, dtype=float)
    return _finish(family.mu + y[chessboard_cell(family.s, pts)], scalar)


def cookie_centers(s: int) -> np.ndarray:
    """Disk centers for i = k*s + l (k = 0..s-1, l = 1..s), in order of i."""
    k, l = np.divmod(np.arange(s * s), s)
    return np.column_stack([(2 * k + 1) / (2 * s), (2 * (l + 1) - 1) / (2 * s)])


def _cookie_sum(s, mu, values, radii, pts):
    centers = cookie_centers(s)
    dist = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
    inside = dist < radii[None, :]
    return mu + inside.astype(float) @ values


def eval_cookies_fixed(family, y, x):
    pts, scalar = _points(x)
    s = family.s
    radii = np.full(s * s, family.r / (2 * s))
    return _finish(_cookie_sum(s, family.mu, np.asarray(y, dtype=float), radii, pts), scalar)


def eval_cookies_variable(family, y, x):
    pts, scalar = _points(x)
    s = family.s
    y = np.asarray(y, dtype=float)
    values, radii = y[: s * s], y[s * s :] / (2 * s)
    return _finish(_cookie_sum(s, family.mu, values, radii, pts), scalar)


def monomial_exponents(k: int) -> list:
    """Exponent pairs (a, b) of x1^a x2^b, graded then by decreasing a."""
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def eval_clipped_poly(family, y, x):
    pts, scalar = _points(x)
    exps = np.array(monomial_exponents(family.k))
    basis = pts[:, :1] ** exps[:, 0] * pts[:, 1:] ** exps[:, 1]
    poly = basis @ np.asarray(y, dtype=float)
    return _finish(np.maximum(family.mu, poly), scalar)


_EVALUATORS = {
    Variant.TRIG_POLY: eval_trig_poly,
    Variant.CHESSBOARD: eval_chessboard,
    Variant.COOKIES_FIXED: eval_cookies_fixed,
    Variant.COOKIES_VARIABLE: eval_cookies_variable,
    Variant.CLIPPED_POLY: eval_clipped_poly,
}


def evaluate(family: ParametricFamily, y, x):
    y = np.asarray(y, dtype=float)
    if y.shape != (family.p,):
        raise ValueError(f"expected {family.p} parameters, got shape {y.shape}")
    return _EVALUATORS[family.variant](family, y, x)


def upper_bound(family: ParametricFamily) -> float:
    """Closed-form sup of the coefficient over the box and the domain."""
    if family.variant == Variant.TRIG_POLY:
        i = np.arange(1, family.p + 1, dtype=float)
        return family.mu + 2.0 * float(np.sum(i**family.sigma))
    if family.variant == Variant.CLIPPED_POLY:
        # |m_i| <= 1 on the unit square and |y_i| <= 1.
        return max(family.mu, float(family.p))
    # Disks and cells never overlap, so at most one unit term is active.
    return family.mu + 1.0


def sample_parameters(family: ParametricFamily, count: int, seed: int) -> np.ndarray:
    """Uniform i.i.d. draws from the parameter box.

    Row ``j`` depends only on ``(seed, j)``, so a shorter draw is always a
    prefix of a longer one.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    box = parameter_box(family)
    out = np.empty((count, family.p))
    for j in range(count):
        u = np.random.default_rng([seed, j]).random(family.p)
        out[j] = box.lower + u * (box.upper - box.lower)
    return out
