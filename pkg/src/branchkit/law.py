"""Offspring laws, fixed points and the supercritical decomposition.

Three families are supported:

* ``ExplicitLaw``: finitely many probabilities ``p_0 .. p_K``.
* ``LinearFractionalLaw``: ``f(s) = p0 + (1 - p0) p s / (1 - (1 - p) s)``,
  closed under the tail operator.
* ``TailPowerLaw``: pgfs with a regularly varying gap at 1,
  ``s + c (1-s)**(1+alpha)`` for ``alpha`` in (0, 1], a log-type
  mixture with ``f(s) - s ~ k (1-s) / ln(1/(1-s))`` for ``alpha = 0`` and
  ``1 - c (1-s)**(1+alpha)`` for ``alpha`` in (-1, 0) (infinite mean).

Every law knows how to evaluate ``nabla_{a_1}...nabla_{a_n} f(x)`` and the
gap ``f(1-y) - (1-y)`` without cancellation; the ODE and quadrature code
relies on both.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.optimize import brentq

from . import series as ser
from .errors import DomainError, InvalidLawError, PoleError

RENORMALIZE_TOL = 1e-9
R_SEARCH_CAP = 1e6
HORNER_MAX = 512


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"
    EXTENDABLE_SUBCRITICAL = "extendable-subcritical"


class OffspringLaw:
    """Common interface.  Subclasses are immutable."""

    kind: str = ""
    lam: float

    # -- pgf ---------------------------------------------------------------
    def pgf(self, x):
        raise NotImplementedError

    def derivative(self, x, order: int = 1):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def radius(self) -> float | None:
        return None

    @property
    def p0(self) -> float:
        return float(self.pgf(0.0))

    # -- divided differences ----------------------------------------------
    def nabla(self, anchors: Sequence[float], x):
        """``nabla_{a_1} ... nabla_{a_n} f(x)``; anchors may repeat or equal x."""
        raise NotImplementedError

    def nabla_series(self, anchors: Sequence[float], order: int) -> np.ndarray:
        """Coefficients ``0..order`` of ``nabla_{a_1}...nabla_{a_n} f``."""
        raise NotImplementedError

    def series(self, order: int = ser.DEFAULT_ORDER) -> ser.TruncatedSeries:
        raise NotImplementedError

    # -- gap at one ---------------------------------------------------------
    def gap_ratio(self, y):
        """``(f(1-y) - (1-y)) / y`` for ``y`` in (0, 1]."""
        raise NotImplementedError

    def gap(self, y):
        return np.asarray(y) * self.gap_ratio(y)

    def drift(self, x):
        """``f(x) - x``, computed through the gap when ``x`` is near 1."""
        x = np.asarray(x, dtype=float)
        return self.gap(1.0 - x)

    def gap_ratio_series(self, d: np.ndarray) -> np.ndarray:
        """Series of ``gap_ratio`` evaluated at the series ``d``."""
        raise NotImplementedError

    def probabilities(self, cutoff: int) -> np.ndarray:
        """``p_0 .. p_cutoff`` renormalised to a finite law (for sampling)."""
        p = np.clip(self.series(cutoff).coeffs, 0.0, None)
        return p / p.sum()

    def xlogx_holds(self, a: float) -> bool:
        """Whether ``sum p_k a**k k ln k`` is finite."""
        raise NotImplementedError

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError

    def __call__(self, x):
        return self.pgf(x)


# ---------------------------------------------------------------------------
# Explicit coefficients
# ---------------------------------------------------------------------------


class ExplicitLaw(OffspringLaw):
    kind = "explicit"

    def __init__(self, probs: Sequence[float], lam: float = 1.0):
        p = np.array(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidLawError("probabilities must be a non-empty list")
        if not np.all(np.isfinite(p)):
            raise InvalidLawError("probabilities must be finite")
        if np.any(p < 0):
            raise InvalidLawError("negative probability")
        total = p.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise InvalidLawError(f"probabilities sum to {float(total)!r}, not 1")
        p = p / total
        if p.size > 1 and p[1] >= 1.0:
            raise InvalidLawError("p_1 = 1 gives a trivial process")
        _check_lambda(lam)
        # trailing zeros only waste Horner steps
        nz = np.nonzero(p)[0]
        p = p[: nz[-1] + 1]
        if p.size == 1:
            p = np.append(p, 0.0)
        p.setflags(write=False)
        self.probs = p
        self.lam = float(lam)
        self._cache: dict[tuple[float, ...], np.ndarray] = {}

    def __repr__(self) -> str:
        body = ", ".join(f"{x:g}" for x in self.probs[:8])
        more = ", ..." if self.probs.size > 8 else ""
        return f"ExplicitLaw([{body}{more}], lam={self.lam:g})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ExplicitLaw)
            and self.lam == other.lam
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.lam, self.probs.tobytes()))

    @property
    def degree(self) -> int:
        return self.probs.size - 1

    def pgf(self, x):
        return _polyval(self.probs, x)

    def derivative(self, x, order: int = 1):
        c = self.probs
        for _ in range(order):
            c = ser.derivative(c)
        return _polyval(c, x)

    @cached_property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def _tail(self, anchors: tuple[float, ...]) -> np.ndarray:
        key = tuple(sorted(anchors))
        c = self._cache.get(key)
        if c is None:
            c = self.probs
            for a in key:
                if c.size < 2:
                    c = np.zeros(1)
                    break
                c = ser.tail_coefficients(c, a)
            self._cache[key] = c
        return c

    def nabla(self, anchors, x):
        return _polyval(self._tail(tuple(float(a) for a in anchors)), x)

    def nabla_series(self, anchors, order):
        return _pad(self._tail(tuple(float(a) for a in anchors)), order)

    def series(self, order=ser.DEFAULT_ORDER):
        c = _pad(self.probs, order)
        return ser.TruncatedSeries(c, None, float(self.probs[order + 1 :].sum()))

    def gap_ratio(self, y):
        y = np.asarray(y, dtype=float)
        return (1.0 - self.mean) + y * self.nabla((1.0, 1.0), 1.0 - y)

    def gap_ratio_series(self, d):
        second = self._tail((1.0, 1.0))
        inner = ser.compose_polynomial(second, _one_minus(d))
        out = ser.mul(d, inner)
        out[0] += 1.0 - self.mean
        return out

    def probabilities(self, cutoff=None):
        return self.probs.copy()

    def xlogx_holds(self, a):
        if self.degree <= 256:
            return True
        report = ser.xlogx_diagnostic(ser.TruncatedSeries(self.probs), a, 2)
        return report.verdict != "diverging"

    def to_spec(self):
        return {"type": "explicit", "probs": [float(x) for x in self.probs], "lambda": self.lam}


# ---------------------------------------------------------------------------
# Linear-fractional
# ---------------------------------------------------------------------------


class LinearFractionalLaw(OffspringLaw):
    kind = "linear-fractional"

    def __init__(self, p0: float, p: float, lam: float = 1.0):
        p0 = float(p0)
        p = float(p)
        if not (0.0 <= p0 < 1.0):
            raise InvalidLawError("p0 must lie in [0, 1)")
        if not (0.0 < p <= 1.0):
            raise InvalidLawError("p must lie in (0, 1]")
        if p0 == 0.0 and p == 1.0:
            raise InvalidLawError("p_1 = 1 gives a trivial process")
        _check_lambda(lam)
        self.p0_ = p0
        self.p = p
        self.lam = float(lam)

    def __repr__(self) -> str:
        return f"LinearFractionalLaw(p0={self.p0_:g}, p={self.p:g}, lam={self.lam:g})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LinearFractionalLaw)
            and (self.p0_, self.p, self.lam) == (other.p0_, other.p, other.lam)
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.p0_, self.p, self.lam))

    @property
    def p0(self) -> float:
        return self.p0_

    @property
    def ratio(self) -> float:
        """``1 - p``, the geometric ratio of the offspring tail."""
        return 1.0 - self.p

    @property
    def radius(self):
        return None if self.p == 1.0 else 1.0 / (1.0 - self.p)

    @property
    def mean(self) -> float:
        return (1.0 - self.p0_) / self.p

    def pgf(self, x):
        x = np.asarray(x, dtype=float)
        return self.p0_ + (1 - self.p0_) * self.p * x / (1 - self.ratio * x)

    def derivative(self, x, order: int = 1):
        # f^(n)(x) / n! = (1-p0) p (1-p)**(n-1) / (1-(1-p)x)**(n+1)
        if order == 0:
            return self.pgf(x)
        x = np.asarray(x, dtype=float)
        coef = (1 - self.p0_) * self.p * self.ratio ** (order - 1) * math.factorial(order)
        return coef / (1 - self.ratio * x) ** (order + 1)

    def closed_form(self, anchors) -> "ClosedForm":
        return lf_closed_forms(self.p0_, self.p, anchors)

    def nabla(self, anchors, x):
        anchors = tuple(anchors)
        if not anchors:
            return self.pgf(x)
        return self.closed_form(anchors)(x)

    def nabla_series(self, anchors, order):
        anchors = tuple(anchors)
        if not anchors:
            return self.series(order).coeffs.copy()
        cf = self.closed_form(anchors)
        return cf.constant * cf.pole ** np.arange(order + 1)

    def series(self, order=ser.DEFAULT_ORDER):
        c = np.empty(order + 1)
        c[0] = self.p0_
        n = np.arange(1, order + 1)
        c[1:] = (1 - self.p0_) * self.ratio ** (n - 1) * self.p
        err = (1 - self.p0_) * self.ratio**order
        return ser.TruncatedSeries(c, self.radius, float(err))

    def gap_ratio(self, y):
        # (1-m) + y * nabla_1^2 f(1-y),  nabla_1^2 f(x) = (1-p0)(1-p) / (p (1-(1-p)x))
        y = np.asarray(y, dtype=float)
        q2 = (1 - self.p0_) * self.ratio / (self.p * (self.p + self.ratio * y))
        return (1.0 - self.mean) + y * q2

    def gap_ratio_series(self, d):
        denom = self.ratio * np.asarray(d, dtype=float)
        denom[0] += self.p
        inner = (1 - self.p0_) * self.ratio / self.p * ser.reciprocal(denom)
        out = ser.mul(d, inner)
        out[0] += 1.0 - self.mean
        return out

    def probabilities(self, cutoff: int = 4096) -> np.ndarray:
        return super().probabilities(cutoff)

    def xlogx_holds(self, a):
        return self.ratio * a < 1.0

    def to_spec(self):
        return {"type": "linear-fractional", "p0": self.p0_, "p": self.p, "lambda": self.lam}


@dataclass(frozen=True)
class ClosedForm:
    """``constant / (1 - pole * s)``."""

    constant: float
    pole: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self.constant / (1.0 - self.pole * s)
        return float(out) if out.ndim == 0 else out

    def coefficients(self, order: int) -> np.ndarray:
        return self.constant * self.pole ** np.arange(order + 1)


def lf_closed_forms(p0: float, p: float, anchors) -> ClosedForm:
    """Tail generating function of a linear-fractional pgf over ``anchors``.

    ``nabla_{a_1}..nabla_{a_n} f(s) = p (1-p0) (1-p)**(n-1)
    / prod(1 - (1-p) a_i) / (1 - (1-p) s)``.
    """
    if isinstance(anchors, ser.AnchorList):
        anchors = anchors.anchors
    anchors = tuple(float(a) for a in anchors)
    if not anchors:
        raise DomainError("at least one anchor is required")
    ratio = 1.0 - p
    const = p * (1.0 - p0) * ratio ** (len(anchors) - 1)
    for a in anchors:
        den = 1.0 - ratio * a
        if den <= 0.0 or abs(den) < 1e-300:
            raise PoleError(f"(1-p)*a = 1 at anchor {a!r}")
        const /= den
    return ClosedForm(float(const), ratio)


def lf_beta(p0: float, p: float) -> float:
    return p / (1.0 - p0)


# ---------------------------------------------------------------------------
# Tail-power family
# ---------------------------------------------------------------------------


class TailPowerLaw(OffspringLaw):
    """Laws with ``f(1-y) - (1-y)`` regularly varying in ``y``.

    * ``alpha`` in (0, 1]: ``f(s) = s + c (1-s)**(1+alpha)``, critical,
      ``c`` in (0, 1/(1+alpha)].
    * ``alpha = 0``: ``f(s) = s + (1-s) L(1-s)`` with the slowly varying
      ``L(y) = int (1-u) y / (u + (1-u) y) nu(du)``, where ``ln(1/u)`` has
      tail ``k / (k + w)``.  Here ``scale`` is the offset ``k > 0`` and
      ``L(y) ~ k / ln(1/y)``.  Mixtures of this kind make ``nabla_1 f`` a
      Stieltjes transform, so all coefficients are non-negative.
    * ``alpha`` in (-1, 0): ``f(s) = 1 - c (1-s)**(1+alpha)``, infinite
      mean, ``c`` in (0, 1].

    ``cutoff`` is the order used whenever explicit coefficients are needed
    (series expansion, sampling); the pgf itself is evaluated in closed
    form or by quadrature.
    """

    kind = "tail-power"

    def __init__(self, alpha: float, scale: float, cutoff: int = 4096, lam: float = 1.0):
        alpha = float(alpha)
        c = float(scale)
        if not (-1.0 < alpha <= 1.0):
            raise InvalidLawError("alpha must lie in (-1, 1]")
        if alpha > 0:
            cmax = 1.0 / (1.0 + alpha)
        elif alpha == 0:
            cmax = math.inf
        else:
            cmax = 1.0
        if not (0.0 < c <= cmax):
            raise InvalidLawError(f"scale must lie in (0, {cmax:g}] for alpha={alpha:g}")
        if int(cutoff) < 2:
            raise InvalidLawError("cutoff must be >= 2")
        _check_lambda(lam)
        self.alpha = alpha
        self.scale = c
        self.cutoff = int(cutoff)
        self.lam = float(lam)
        self._series_cache: dict[int, ser.TruncatedSeries] = {}

    def __repr__(self) -> str:
        return f"TailPowerLaw(alpha={self.alpha:g}, scale={self.scale:g}, cutoff={self.cutoff}, lam={self.lam:g})"

    def __eq__(self, other) -> bool:
        return isinstance(other, TailPowerLaw) and (
            self.alpha, self.scale, self.cutoff, self.lam
        ) == (other.alpha, other.scale, other.cutoff, other.lam)

    def __hash__(self) -> int:
        return hash((self.kind, self.alpha, self.scale, self.cutoff, self.lam))

    @property
    def radius(self):
        return 1.0

    @property
    def mean(self) -> float:
        return math.inf if self.alpha < 0 else 1.0

    @property
    def b(self) -> float:
        """Half the second factorial moment ``f''(1)/2``."""
        return self.scale if self.alpha == 1.0 else math.inf

    # -- the slowly varying factor for alpha = 0 ---------------------------
    def _mixing_density(self, v):
        k = self.scale
        return k / (k + v) ** 2

    def slowly_varying(self, y: float) -> float:
        """``L(y)`` of the ``alpha = 0`` law, by quadrature over ``v = ln(1/u)``."""
        y = float(y)
        if y <= 0.0:
            return 0.0

        def integrand(v):
            u = math.exp(-v)
            w = -math.expm1(-v)
            return w * y / (u + w * y) * self._mixing_density(v)

        brk = max(math.log(1.0 / y), 1.0) if y < 1.0 else 1.0
        a = quad(integrand, 0.0, brk, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        b = quad(integrand, brk, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        return a + b

    def _slowly_varying_slope(self, y: float) -> float:
        # d/dy L(y)
        def integrand(v):
            u = math.exp(-v)
            w = -math.expm1(-v)
            return w * u / (u + w * y) ** 2 * self._mixing_density(v)

        brk = max(math.log(1.0 / y), 1.0) if 0 < y < 1.0 else 1.0
        a = quad(integrand, 0.0, brk, epsabs=0.0, epsrel=1e-12, limit=200)[0]
        b = quad(integrand, brk, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]
        return a + b

    def gap_ratio(self, y):
        y = np.asarray(y, dtype=float)
        a, c = self.alpha, self.scale
        if a > 0:
            return c * y**a
        if a == 0:
            out = np.vectorize(self.slowly_varying, otypes=[float])(y)
            return float(out) if out.ndim == 0 else out
        return 1.0 - c * y**a

    def pgf(self, x):
        x = np.asarray(x, dtype=float)
        y = 1.0 - x
        return x + y * self.gap_ratio(y)

    def derivative(self, x, order: int = 1):
        if order != 1:
            raise NotImplementedError("only the first derivative is available in closed form")
        x = np.asarray(x, dtype=float)
        y = 1.0 - x
        a, c = self.alpha, self.scale
        if a > 0:
            return 1.0 - c * (1 + a) * y**a
        if a == 0:
            slope = np.vectorize(self._slowly_varying_slope, otypes=[float])(y)
            return 1.0 - self.gap_ratio(y) - y * slope
        return c * (1 + a) * y**a

    def nabla(self, anchors, x):
        anchors = tuple(float(a) for a in anchors)
        x = np.asarray(x, dtype=float)
        y = 1.0 - x
        if anchors == (1.0,):
            # (1 - f(x)) / (1 - x) = 1 - gap_ratio
            return 1.0 - self.gap_ratio(y)
        if anchors == (1.0, 1.0) and self.alpha >= 0:
            # (nabla_1 f(x) - f'(1)) / (x - 1) with f'(1) = 1
            with np.errstate(divide="ignore"):
                return self.gap_ratio(y) / y
        return _polyval(self.nabla_series(anchors, self.cutoff), x)

    def nabla_series(self, anchors, order):
        c = self.series(max(order + len(anchors), self.cutoff)).coeffs
        for a in anchors:
            c = ser.tail_coefficients(c, a)
        return _pad(c, order)

    def series(self, order=None):
        order = self.cutoff if order is None else int(order)
        cached = self._series_cache.get(order)
        if cached is not None:
            return cached
        a, c = self.alpha, self.scale
        if a == 0:
            coeffs = self._mixture_coefficients(order)
        else:
            y = np.zeros(order + 1)
            y[0] = 1.0
            if order >= 1:
                y[1] = -1.0
            if a > 0:
                coeffs = c * ser.power(y, 1.0 + a)
                if order >= 1:
                    coeffs[1] += 1.0
            else:
                coeffs = -c * ser.power(y, 1.0 + a)
                coeffs[0] += 1.0
        err = max(0.0, 1.0 - float(coeffs.sum()))
        out = ser.TruncatedSeries(coeffs, 1.0, err)
        self._series_cache[order] = out
        return out

    def _mixture_coefficients(self, order: int) -> np.ndarray:
        # tail probabilities t_k = int x**k (1-x) nu(dx); p_k = t_{k-1} - t_k
        k = np.arange(order + 1, dtype=float)

        def integrand(v):
            x = -math.expm1(-v)
            u = math.exp(-v)
            with np.errstate(divide="ignore", invalid="ignore"):
                xp = np.where(k > 0, x ** np.maximum(k - 1, 0), 0.0)
            return xp * u * u * self._mixing_density(v)

        brk = math.log(order + 2.0)
        p = quad_vec(integrand, 0.0, brk, epsabs=1e-16, epsrel=1e-11, limit=400)[0]
        p = p + quad_vec(integrand, brk, math.inf, epsabs=1e-16, epsrel=1e-11, limit=400)[0]
        # t_0 = int (1-x) nu(dx), p_0 = 1 - t_0
        t0 = quad(lambda v: math.exp(-v) * self._mixing_density(v), 0.0, math.inf, limit=200)[0]
        p[0] = 1.0 - t0
        return p

    def gap_ratio_series(self, d):
        d = np.asarray(d, dtype=float)
        a, c = self.alpha, self.scale
        if a > 0:
            return c * ser.power(d, a)
        if a == 0:
            raise DomainError("the series route is not available for the alpha = 0 family")
        out = -c * ser.power(d, a)
        out[0] += 1.0
        return out

    def probabilities(self, cutoff=None):
        return super().probabilities(self.cutoff if cutoff is None else cutoff)

    def xlogx_holds(self, a):
        if a < 1.0:
            return True
        return self.alpha > 0

    def to_spec(self):
        return {
            "type": "tail-power",
            "alpha": self.alpha,
            "scale": self.scale,
            "cutoff": self.cutoff,
            "lambda": self.lam,
        }


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _check_lambda(lam: float) -> None:
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
        raise InvalidLawError(f"lifetime rate must be positive, got {lam!r}")


def make_law(spec: Mapping[str, Any] | OffspringLaw) -> OffspringLaw:
    """Build a validated law from a JSON-style mapping.

    Accepted shapes::

        {"type": "explicit", "probs": [...], "lambda": x}
        {"type": "linear-fractional", "p0": x, "p": y, "lambda": z}
        {"type": "tail-power", "alpha": a, "scale": c, "cutoff": K, "lambda": z}
    """
    if isinstance(spec, OffspringLaw):
        return spec
    if not isinstance(spec, Mapping):
        raise InvalidLawError("law spec must be a JSON object")
    kind = spec.get("type")
    lam = spec.get("lambda", 1.0)
    try:
        if kind == "explicit":
            return ExplicitLaw(spec["probs"], lam)
        if kind == "linear-fractional":
            return LinearFractionalLaw(spec["p0"], spec["p"], lam)
        if kind == "tail-power":
            return TailPowerLaw(spec["alpha"], spec["scale"], spec.get("cutoff", 4096), lam)
    except KeyError as exc:
        raise InvalidLawError(f"missing field {exc.args[0]!r} for {kind!r} law") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidLawError):
            raise
        raise InvalidLawError(str(exc)) from None
    raise InvalidLawError(f"unknown law type {kind!r}")


def load_law(path) -> OffspringLaw:
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidLawError(f"malformed JSON: {exc}") from None
    return make_law(spec)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoints:
    q: float
    r: float | None
    regime: Regime
    mean: float
    f_prime_q: float
    gamma_exponent: float

    @property
    def gamma(self) -> float:
        return math.exp(self.gamma_exponent)


def _newton_polish(law: OffspringLaw, x: float, lo: float, hi: float) -> float:
    for _ in range(3):
        d = float(law.derivative(x)) - 1.0
        if d == 0 or not math.isfinite(d):
            break
        nx = x - float(law.drift(x)) / d
        if not (lo <= nx <= hi) or abs(nx - x) > 1e-10:
            break
        x = nx
    return x


def _root_below_one(law: OffspringLaw) -> float:
    """Root of ``1 - nabla_1 f(x) = 0`` on [0, 1) for m > 1."""
    if law.p0 == 0.0:
        return 0.0
    k = lambda x: 1.0 - float(law.nabla((1.0,), x))
    hi = 1.0
    if not math.isfinite(law.mean):
        hi = 1.0 - 1e-3
        while k(hi) > 0:
            hi = 1.0 - (1.0 - hi) / 16.0
            if hi >= 1.0:
                raise DomainError("could not bracket the extinction probability")
    q = brentq(k, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _newton_polish(law, q, 0.0, hi)


def _root_above_one(law: OffspringLaw) -> float | None:
    """Second root r > 1 of ``nabla_1 f(x) = 1`` for m < 1, or None."""
    k = lambda x: float(law.nabla((1.0,), x)) - 1.0
    R = law.radius
    cap = R_SEARCH_CAP if R is None else R
    x = 1.0
    step = 1.0
    while True:
        nxt = 1.0 + step if R is None else 1.0 + (R - 1.0) * (1.0 - 0.5**step)
        if nxt >= cap or step > 64 and R is not None:
            return None
        try:
            val = k(nxt)
        except (PoleError, ZeroDivisionError, FloatingPointError):
            return None
        if not math.isfinite(val):
            return None
        if val > 0:
            r = brentq(k, x, nxt, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            return _newton_polish(law, r, x, nxt)
        x = nxt
        step = step * 2.0 if R is None else step + 1.0


def fixed_points(law: OffspringLaw) -> FixedPoints:
    """Extinction probability ``q``, second root ``r`` and regime."""
    m = law.mean
    if isinstance(law, LinearFractionalLaw):
        q, r = _lf_roots(law)
    elif isinstance(law, TailPowerLaw):
        if law.alpha >= 0:
            q, r = 1.0, None
        else:
            g = 1.0 + law.alpha
            q = 1.0 - law.scale ** (1.0 / (1.0 - g))
            r = 1.0
    elif abs(m - 1.0) <= 1e-12:
        q, r = 1.0, None
    elif m < 1.0:
        q, r = 1.0, _root_above_one(law)
    else:
        q, r = _root_below_one(law), 1.0

    if abs(m - 1.0) <= 1e-12:
        regime = Regime.CRITICAL
    elif m < 1.0:
        regime = Regime.EXTENDABLE_SUBCRITICAL if r is not None else Regime.SUBCRITICAL
    else:
        regime = Regime.SUPERCRITICAL

    fq = m if q == 1.0 else float(law.derivative(q))
    return FixedPoints(q=q, r=r, regime=regime, mean=m, f_prime_q=fq, gamma_exponent=law.lam * (fq - 1.0))


def _lf_roots(law: LinearFractionalLaw) -> tuple[float, float | None]:
    m = law.mean
    if abs(m - 1.0) <= 1e-12:
        return 1.0, None
    if m > 1.0:
        return law.p0 / law.ratio, 1.0
    if law.ratio == 0.0:
        return 1.0, None
    return 1.0, law.p0 / law.ratio


def beta_of(law: OffspringLaw, fp: FixedPoints | None = None) -> float | None:
    """``(1 - f'(q)) / (f'(r) - 1)`` when both roots exist, else None."""
    fp = fixed_points(law) if fp is None else fp
    if fp.r is None or fp.regime is Regime.CRITICAL or not math.isfinite(fp.mean):
        return None
    # ratio of second divided differences over (q, r), free of cancellation
    d_q = float(law.nabla((fp.q, fp.r), fp.q))
    d_r = float(law.nabla((fp.q, fp.r), fp.r))
    return d_q / d_r


# ---------------------------------------------------------------------------
# conditioned laws
# ---------------------------------------------------------------------------


def dual_law(law: OffspringLaw) -> OffspringLaw:
    """Law of particles conditioned on extinction, ``g(s) = f(sq)/q``."""
    fp = fixed_points(law)
    if fp.q <= 0.0:
        raise DomainError("q = 0: there is no extinction component")
    if fp.q >= 1.0:
        raise DomainError("q = 1: the process dies out almost surely")
    q = fp.q
    if isinstance(law, LinearFractionalLaw):
        return LinearFractionalLaw(1.0 - law.p, 1.0 - law.p0, law.lam)
    if isinstance(law, ExplicitLaw):
        k = np.arange(law.probs.size)
        g = law.probs * q ** (k - 1.0)
        return ExplicitLaw(g / g.sum(), law.lam)
    c = law.series().coeffs
    k = np.arange(c.size)
    g = c * q ** (k - 1.0)
    return ExplicitLaw(g / g.sum(), law.lam)


def success_law(law: OffspringLaw) -> OffspringLaw:
    """Law of successful lineages, ``h(s) = (f(s(1-q)+q) - q) / (1-q)``.

    Coefficients are ``h_j = nabla_q^j f(q) (1-q)**(j-1)`` for ``j >= 1``,
    obtained from the tail operator at ``q`` without any binomial
    cancellation.
    """
    fp = fixed_points(law)
    if fp.q >= 1.0:
        raise DomainError("q = 1: no successful lineages")
    q = fp.q
    if q == 0.0:
        return law
    if isinstance(law, LinearFractionalLaw):
        ratio = law.ratio * (1.0 - q) / (1.0 - law.ratio * q)
        return LinearFractionalLaw(0.0, 1.0 - ratio, law.lam)
    if isinstance(law, ExplicitLaw):
        coeffs = law.probs
    else:
        coeffs = law.series().coeffs
    h = np.zeros(coeffs.size)
    c = coeffs
    for j in range(1, coeffs.size):
        c = ser.tail_coefficients(c, q)
        h[j] = _polyval(c, q) * (1.0 - q) ** (j - 1)
    return ExplicitLaw(h / h.sum(), law.lam)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _polyval(c: np.ndarray, x):
    c = np.asarray(c)
    x = np.asarray(x, dtype=float)
    if c.size <= HORNER_MAX:
        out = np.polyval(c[::-1], x)
    else:
        # np.polyval loops in Python; long laws use a dot product with powers
        k = np.arange(c.size)
        out = np.array([np.dot(c, np.power(xi, k)) for xi in x.ravel()]).reshape(x.shape)
    return float(out) if np.ndim(out) == 0 else out


def _pad(c: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    m = min(order + 1, len(c))
    out[:m] = c[:m]
    return out


def _one_minus(d: np.ndarray) -> np.ndarray:
    out = -np.asarray(d, dtype=float)
    out[0] += 1.0
    return out
