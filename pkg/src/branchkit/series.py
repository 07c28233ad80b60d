"""Truncated power series and the tail operator.

A series ``v(s) = sum v_k s**k`` is carried by its coefficients
``v_0 .. v_N``.  The tail operator

    nabla_a v(s) = (v(s) - v(a)) / (s - a),      nabla_a v(a) = v'(a),

acts on coefficients as ``u_k = sum_j a**j v_{j+k+1}``.  For non-negative
``v`` and ``a`` every term is non-negative, so the coefficient route never
cancels; this is what the rest of the package leans on whenever a divided
difference of an offspring pgf is needed near a fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateInputError, DomainError

DEFAULT_ORDER = 64


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients ``v_0 .. v_N`` of a power series.

    ``radius`` is the known radius of convergence of the full series (None
    means unbounded).  ``truncation_error`` bounds the contribution of the
    dropped tail on ``[0, min(1, radius)]``; it is carried along by the tail
    operator so that truncation stays auditable.
    """

    coeffs: np.ndarray
    radius: float | None = None
    truncation_error: float = 0.0

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DegenerateInputError("coefficients must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        if self.radius is not None and not self.radius > 0:
            raise DomainError("radius of convergence must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.coeffs >= 0))

    @property
    def is_subprobability(self) -> bool:
        return self.nonnegative and float(self.coeffs.sum()) <= 1.0 + 1e-12

    def truncate(self, order: int) -> "TruncatedSeries":
        if order < 0:
            raise DegenerateInputError("order must be non-negative")
        c = self.coeffs[: order + 1]
        return TruncatedSeries(c, self.radius, self.truncation_error)

    def __call__(self, s):
        return evaluate(self, s)

    def __len__(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class AnchorList:
    """Anchor points ``a_1 .. a_n`` for iterated tail operators."""

    anchors: tuple[float, ...]
    radius: float | None = None

    def __post_init__(self) -> None:
        a = tuple(float(x) for x in self.anchors)
        if not a:
            raise DegenerateInputError("at least one anchor is required")
        for x in a:
            _check_anchor(x, self.radius)
        object.__setattr__(self, "anchors", a)

    def __iter__(self):
        return iter(self.anchors)

    def __len__(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class MomentReport:
    """Partial sums and partial integrals behind an ``x log x`` verdict."""

    anchor: float
    power: int
    orders: np.ndarray
    sums: np.ndarray
    integrals: np.ndarray
    sum_verdict: str
    integral_verdict: str
    sum_elasticity: float = field(default=float("nan"))
    integral_elasticity: float = field(default=float("nan"))

    @property
    def verdict(self) -> str:
        if self.sum_verdict == self.integral_verdict:
            return self.sum_verdict
        return "inconclusive"

    @property
    def agree(self) -> bool:
        return self.sum_verdict == self.integral_verdict


def _check_anchor(a: float, radius: float | None) -> None:
    if not math.isfinite(a) or a < 0:
        raise DomainError(f"anchor {a!r} must be a finite non-negative number")
    if radius is not None and a > radius * (1 + 1e-15):
        raise DomainError(f"anchor {a!r} lies beyond the radius of convergence {radius!r}")


def _as_series(v) -> TruncatedSeries:
    return v if isinstance(v, TruncatedSeries) else TruncatedSeries(v)


def _as_anchors(anchors, radius: float | None) -> tuple[float, ...]:
    if isinstance(anchors, AnchorList):
        vals = anchors.anchors
    else:
        vals = tuple(float(a) for a in anchors)
    if not vals:
        raise DegenerateInputError("at least one anchor is required")
    for a in vals:
        _check_anchor(a, radius)
    return vals


def evaluate(v: TruncatedSeries, s):
    """Horner evaluation of the truncated series at ``s`` (scalar or array)."""
    v = _as_series(v)
    s_arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s_arr)):
        raise DomainError("evaluation point must be finite")
    if v.radius is not None and np.any(np.abs(s_arr) > v.radius * (1 + 1e-15)):
        raise DomainError(f"evaluation point outside radius {v.radius!r}")
    out = np.polyval(v.coeffs[::-1], s_arr)
    return float(out) if out.ndim == 0 else out


def tail_coefficients(c: np.ndarray, a: float) -> np.ndarray:
    """Coefficients of ``nabla_a`` applied to the polynomial with coefficients ``c``.

    Implements ``u_k = v_{k+1} + a u_{k+1}`` from the top down.
    """
    c = np.asarray(c, dtype=float)
    if c.size < 2:
        raise DegenerateInputError("the tail operator needs order >= 1")
    rev = c[:0:-1]
    return lfilter([1.0], [1.0, -a], rev)[::-1]


def tail_transform(v: TruncatedSeries, a: float) -> TruncatedSeries:
    """Return ``nabla_a v`` truncated at order ``N - 1``.

    Only the retained coefficients enter the sums, so the result inherits
    the dropped-tail bound of ``v``.
    """
    v = _as_series(v)
    if v.order < 1:
        raise DegenerateInputError("the tail operator needs order >= 1")
    _check_anchor(a, v.radius)
    return TruncatedSeries(tail_coefficients(v.coeffs, a), v.radius, v.truncation_error)


def iterated_tail(v: TruncatedSeries, anchors) -> TruncatedSeries:
    v = _as_series(v)
    vals = _as_anchors(anchors, v.radius)
    if len(vals) > v.order:
        raise DegenerateInputError(
            f"{len(vals)} tail operators exceed the series order {v.order}"
        )
    for a in vals:
        v = tail_transform(v, a)
    return v


def multi_tail(v: TruncatedSeries, anchors, s: float) -> float:
    """``nabla_{a_1} ... nabla_{a_n} v(s)``, independent of anchor order."""
    return evaluate(iterated_tail(v, anchors), s)


def divided_expansion(v: TruncatedSeries, anchors, s: float) -> float:
    """Rebuild ``v(s)`` from its Newton form over the given anchors.

    The expansion is

        v(a_1) + sum_{i=2..n} (s-a_1)...(s-a_{i-1}) nabla_{a_1}...nabla_{a_{i-1}} v(a_i)
               + (s-a_1)...(s-a_n) nabla_{a_1}...nabla_{a_n} v(s)

    and must reproduce ``evaluate(v, s)``.
    """
    v = _as_series(v)
    vals = _as_anchors(anchors, v.radius)
    if len(vals) > v.order:
        raise DegenerateInputError(
            f"{len(vals)} tail operators exceed the series order {v.order}"
        )
    total = 0.0
    prod = 1.0
    w = v
    for a in vals:
        total += prod * evaluate(w, a)
        prod *= s - a
        w = tail_transform(w, a)
    return total + prod * evaluate(w, s)


# ---------------------------------------------------------------------------
# x log x diagnostics
# ---------------------------------------------------------------------------

_CONVERGING_BELOW = 0.05
_DIVERGING_ABOVE = 0.2


def _order_grid(lo: int, budget: int, points: int = 24) -> np.ndarray:
    grid = np.unique(np.round(np.geomspace(lo, budget, points)).astype(int))
    return grid[grid >= lo]


def _elasticity(orders: np.ndarray, values: np.ndarray) -> float:
    """d value / d ln ln N, relative to the last value, over the top half."""
    half = max(len(orders) // 2, 2)
    x = np.log(np.log(orders[-half:].astype(float)))
    y = values[-half:]
    top = y[-1]
    if not np.isfinite(top):
        return math.inf
    if top <= 0:
        return 0.0
    slope = np.polyfit(x, y, 1)[0]
    return float(slope / top)


def _verdict(e: float) -> str:
    if e < _CONVERGING_BELOW:
        return "converging"
    if e > _DIVERGING_ABOVE:
        return "diverging"
    return "inconclusive"


def _scaled_powers(c: np.ndarray, a: float, shift: int = 0) -> np.ndarray:
    # c_k * a**(k + shift) without overflowing for a > 1
    k = np.arange(c.size) + shift
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c))
    out = np.exp(logc + k * math.log(a))
    out[c == 0] = 0.0
    return np.sign(c) * out


def xlogx_diagnostic(v: TruncatedSeries, a: float, n: int = 2, budget: int | None = None) -> MomentReport:
    """Estimate whether ``sum v_k a**k k**(n-1) ln k`` is finite.

    Two routes are tracked over increasing truncation orders ``N``: the
    partial sums of the moment series, and the partial integrals
    ``int_0^a nabla_a^n v_{<=N}(x) dx`` computed from exact polynomial
    coefficients.  Each sequence gets a verdict from its elasticity with
    respect to ``ln ln N`` over the top half of the orders explored.
    """
    v = _as_series(v)
    if not (a > 0) or (v.radius is not None and a > v.radius * (1 + 1e-15)):
        raise DomainError(f"anchor {a!r} must lie in (0, R]")
    if n < 1:
        raise DegenerateInputError("power n must be >= 1")
    budget = v.order if budget is None else min(int(budget), v.order)
    lo = max(n + 2, 8)
    if budget < lo:
        raise DegenerateInputError(f"budget {budget} too small; need at least {lo}")
    orders = _order_grid(lo, budget)

    c = v.coeffs[: budget + 1]
    k = np.arange(c.size, dtype=float)
    weight = np.zeros_like(k)
    weight[2:] = k[2:] ** (n - 1) * np.log(k[2:])
    terms = _scaled_powers(c, a) * weight
    partial = np.cumsum(terms)
    sums = partial[orders]

    integrals = np.empty(orders.size)
    for i, N in enumerate(orders):
        u = c[: N + 1]
        for _ in range(n):
            u = tail_coefficients(u, a)
        # int_0^a x**k dx = a**(k+1) / (k+1)
        scaled = _scaled_powers(u, a, shift=1) / (np.arange(u.size) + 1.0)
        integrals[i] = float(scaled.sum())

    es = _elasticity(orders, sums)
    ei = _elasticity(orders, integrals)
    return MomentReport(
        anchor=float(a),
        power=n,
        orders=orders,
        sums=sums,
        integrals=integrals,
        sum_verdict=_verdict(es),
        integral_verdict=_verdict(ei),
        sum_elasticity=es,
        integral_elasticity=ei,
    )


# ---------------------------------------------------------------------------
# Truncated series arithmetic (plain coefficient arrays)
# ---------------------------------------------------------------------------


def mul(x: np.ndarray, y: np.ndarray, order: int | None = None) -> np.ndarray:
    order = max(len(x), len(y)) - 1 if order is None else order
    return np.convolve(x[: order + 1], y[: order + 1])[: order + 1]


def reciprocal(x: np.ndarray, order: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    order = len(x) - 1 if order is None else order
    if x[0] == 0:
        raise DomainError("series with zero constant term has no reciprocal")
    xs = np.zeros(order + 1)
    m = min(len(x), order + 1)
    xs[:m] = x[:m]
    out = np.zeros(order + 1)
    out[0] = 1.0 / xs[0]
    for k in range(1, order + 1):
        out[k] = -np.dot(xs[1 : k + 1], out[k - 1 :: -1][:k]) / xs[0]
    return out


def integrate(x: np.ndarray) -> np.ndarray:
    """Antiderivative vanishing at zero, same order as ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[1:] = x[:-1] / np.arange(1, x.size)
    return out


def derivative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.zeros(1)
    return x[1:] * np.arange(1, x.size)


def exp(x: np.ndarray) -> np.ndarray:
    """``exp`` of a series via ``E' = x' E``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.zeros(n)
    out[0] = math.exp(x[0])
    dx = x[1:] * np.arange(1, n)
    for k in range(1, n):
        out[k] = np.dot(dx[:k], out[k - 1 :: -1][:k]) / k
    return out


def log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not x[0] > 0:
        raise DomainError("log needs a positive constant term")
    d = mul(derivative(x), reciprocal(x), x.size - 2) if x.size > 1 else np.zeros(0)
    out = np.zeros_like(x)
    out[0] = math.log(x[0])
    out[1:] = d / np.arange(1, x.size)
    return out


def power(x: np.ndarray, alpha: float) -> np.ndarray:
    return exp(alpha * log(x))


def compose_polynomial(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Coefficients of ``p(x(s))`` truncated at the order of ``x`` (Horner)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[0] = p[-1]
    for coef in p[-2::-1]:
        out = np.convolve(out, x)[: x.size]
        out[0] += coef
    return out


def compositions_weight(anchors: Sequence[float], k: int) -> float:
    """Brute-force ``sum over i_1+...+i_m = k of a_1**i_1 ... a_m**i_m``."""
    anchors = list(anchors)
    total = 0.0
    for combo in _compositions(k, len(anchors)):
        term = 1.0
        for a, i in zip(anchors, combo):
            term *= a**i
        total += term
    return total


def _compositions(k: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        yield (k,)
        return
    for i in range(k + 1):
        for rest in _compositions(k - i, parts - 1):
            yield (i,) + rest
