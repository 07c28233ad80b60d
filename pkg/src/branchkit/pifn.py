"""The pi-function family with the singularity at ``q`` (and ``r``) extracted.

For a pgf ``f`` with roots ``q <= r`` of ``f(x) = x`` the reproduction
integral ``pi(s1, s2) = int_{s1}^{s2} dx / (f(x) - x)`` is singular at both
roots.  Writing ``f(x) - x = (x - q)(nabla_q f(x) - 1)`` and
``1 - nabla_q f(x) = (r - x) nabla_q nabla_r f(x)`` splits it into explicit
logarithms plus integrals of smooth ratios of tail generating functions:

* ``pi_q(s)  = int_0^s nabla_q^2 f / (1 - nabla_q f)``
* ``pi_r(s1, s2) = int nabla_r^2 f / (nabla_r f - 1)``
* ``pi_rq(s) = beta int_0^s nabla_r^2 nabla_q f / nabla_r nabla_q f``
* ``pi_qr(s) = int_0^s nabla_r nabla_q^2 f / nabla_r nabla_q f``

with ``pi_q(s) = beta ln(r/(r-s)) + pi_rq(s) - pi_qr(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .law import (
    FixedPoints,
    LinearFractionalLaw,
    OffspringLaw,
    Regime,
    TailPowerLaw,
    beta_of,
    fixed_points,
)

EPSABS = 1e-14
EPSREL = 1e-12
LIMIT = 400
# raw 1/(f(x)-x) quadrature is only used this far from a root
RAW_MARGIN = 1e-2


def _quad(fn, a: float, b: float, points=None) -> float:
    if a == b:
        return 0.0
    val, _ = quad(fn, a, b, epsabs=EPSABS, epsrel=EPSREL, limit=LIMIT, points=points)
    return val


@dataclass(frozen=True)
class Profile:
    """Values of a slowly varying factor and its elongation ratio ``L(2x)/L(x)``."""

    x: np.ndarray
    values: np.ndarray
    ratio: np.ndarray


class PiEvaluator:
    """Evaluates the pi functions of one law.  Immutable after construction."""

    def __init__(self, law: OffspringLaw, fp: FixedPoints | None = None):
        self.law = law
        self.fp = fixed_points(law) if fp is None else fp
        self.q = self.fp.q
        self.r = self.fp.r
        self.critical = self.fp.regime is Regime.CRITICAL
        self.beta = beta_of(law, self.fp)
        self.f_prime_q = self.fp.f_prime_q
        finite_r = self.r is not None and math.isfinite(self.fp.mean)
        self._decomposable = finite_r and self.beta is not None
        # finiteness of pi_q(q), pi_rq(r), pi_qr(r)
        if self.critical:
            self.pi_q_at_q_finite = None
        elif finite_r:
            self.pi_q_at_q_finite = True
        else:
            self.pi_q_at_q_finite = law.xlogx_holds(self.q)
        self.pi_rq_at_r_finite = law.xlogx_holds(self.r) if finite_r else None
        self.pi_qr_at_r_finite = True if finite_r else None

    # -- integrands -----------------------------------------------------------
    def _nabla(self, anchors, x: float) -> float:
        return float(self.law.nabla(anchors, x))

    def _one_minus_nabla_q(self, x: float) -> float:
        q, r = self.q, self.r
        if self._decomposable:
            return (r - x) * self._nabla((q, r), x)
        if q == 1.0:
            return float(self.law.gap_ratio(1.0 - x))
        return 1.0 - self._nabla((q,), x)

    def integrand_q(self, x: float) -> float:
        """``nabla_q^2 f(x) / (1 - nabla_q f(x))``."""
        return self._nabla((self.q, self.q), x) / self._one_minus_nabla_q(x)

    def integrand_rq(self, x: float) -> float:
        """``nabla_r^2 nabla_q f / nabla_r nabla_q f`` (without the factor beta)."""
        q, r = self.q, self.r
        return self._nabla((q, r, r), x) / self._nabla((q, r), x)

    def integrand_qr(self, x: float) -> float:
        q, r = self.q, self.r
        return self._nabla((q, q, r), x) / self._nabla((q, r), x)

    def integrand_r_raw(self, x: float) -> float:
        """``nabla_r^2 f / (nabla_r f - 1)``, singular at ``q``."""
        r = self.r
        return self._nabla((r, r), x) / (self._nabla((r,), x) - 1.0)

    def _extracted(self, x: float) -> float:
        # beta * A - B, smooth on [0, r]
        q, r = self.q, self.r
        d = self._nabla((q, r), x)
        return (self.beta * self._nabla((q, r, r), x) - self._nabla((q, q, r), x)) / d

    # -- checks -----------------------------------------------------------------
    def _require_noncritical(self) -> None:
        if self.critical:
            raise DomainError("the law is critical: f'(q) = 1")

    def _require_roots(self) -> None:
        if not self._decomposable:
            raise DomainError("the second root r is not available for this law")

    def _upper(self) -> float:
        bounds = [b for b in (self.r, self.law.radius) if b is not None]
        return min(bounds) if bounds else math.inf

    # -- pi_q ---------------------------------------------------------------------
    def pi_q(self, s: float) -> float:
        """``int_0^s nabla_q^2 f / (1 - nabla_q f)`` for ``0 <= s < min(r, R)``."""
        self._require_noncritical()
        s = float(s)
        if s < 0.0 or s > self._upper() or (s == self._upper() and self._decomposable):
            raise DomainError(f"pi_q needs 0 <= s < {self._upper():g}, got {s:g}")
        if not self._decomposable:
            pts = [self.q] if 0.0 < self.q < s else None
            return _quad(self.integrand_q, 0.0, s, pts)
        split = 0.5 * (self.q + self.r)
        if s <= split:
            pts = [self.q] if 0.0 < self.q < s else None
            return _quad(self.integrand_q, 0.0, s, pts)
        base = _quad(self.integrand_q, 0.0, split, [self.q] if 0.0 < self.q < split else None)
        r = self.r
        return base + self.beta * math.log((r - split) / (r - s)) + _quad(self._extracted, split, s)

    def pi_q_decomposed(self, s: float) -> float:
        """``beta ln(r/(r-s)) + pi_rq(s) - pi_qr(s)``."""
        self._require_roots()
        rq, qr = self.pi_rq_qr(s)
        return self.beta * math.log(self.r / (self.r - s)) + rq - qr

    def pi_q_at_q(self) -> float:
        """``pi_q(q)``; infinite when the x log x condition fails at ``q``."""
        if self.pi_q_at_q_finite is False:
            return math.inf
        if self.q == 1.0 and not self._decomposable:
            return _quad(self.integrand_q, 0.0, 1.0)
        return self.pi_q(self.q)

    # -- pi_rq, pi_qr ----------------------------------------------------------------
    def pi_rq_qr(self, s: float) -> tuple[float, float]:
        self._require_roots()
        s = float(s)
        if not (0.0 <= s <= self.r):
            raise DomainError(f"pi_rq/pi_qr need 0 <= s <= r = {self.r:g}")
        rq = self.beta * _quad(self.integrand_rq, 0.0, s)
        if s == self.r and self.pi_rq_at_r_finite is False:
            rq = math.inf
        return rq, _quad(self.integrand_qr, 0.0, s)

    # -- pi_r -----------------------------------------------------------------------
    def pi_r(self, s1: float, s2: float) -> float:
        """``int_{s1}^{s2} nabla_r^2 f / (nabla_r f - 1)`` for ``q < s1 <= s2 < r``."""
        self._require_roots()
        q, r = self.q, self.r
        if not (q < s1 <= s2 < r):
            raise DomainError(f"pi_r needs q < s1 <= s2 < r, got ({s1:g}, {s2:g})")
        if s1 == s2:
            return 0.0
        return (math.log((s2 - q) / (s1 - q)) + _quad(self._extracted, s1, s2)) / self.beta

    def pi_r_raw(self, s1: float, s2: float) -> float:
        """Direct quadrature of the ``pi_r`` integrand (reference only)."""
        self._require_roots()
        return _quad(self.integrand_r_raw, s1, s2)

    # -- pi -----------------------------------------------------------------------------
    def pi_plain(self, s1: float, s2: float) -> float:
        """``int_{s1}^{s2} dx / (f(x) - x)`` on one side of ``q``."""
        s1, s2 = float(s1), float(s2)
        if s1 == s2:
            return 0.0
        q = self.q
        if self.critical:
            if not (0.0 <= s1 <= s2 < 1.0):
                raise DomainError("critical pi needs 0 <= s1 <= s2 < 1")
            return self.pi_critical(s1, s2)
        lower = 0.0 <= s1 <= s2 < q
        upper = q < s2 <= s1 < self._upper()
        if not (lower or upper):
            raise DomainError(f"pi({s1:g}, {s2:g}) straddles q = {q:g} or leaves the domain")
        near_q = min(abs(s1 - q), abs(s2 - q)) < RAW_MARGIN
        near_r = self.r is not None and max(s1, s2) > self.r - RAW_MARGIN
        if not (near_q or near_r):
            return _quad(lambda x: 1.0 / float(self.law.drift(x)), s1, s2)
        return self.pi_from_q(s1, s2)

    def pi_from_q(self, s1: float, s2: float) -> float:
        """``pi(s1, s2)`` through ``ln((q-s1)/(q-s2)) + pi_q(s1) - pi_q(s2)``."""
        q = self.q
        num = math.log((q - s1) / (q - s2)) + self.pi_q(s1) - self.pi_q(s2)
        return num / (1.0 - self.f_prime_q)

    def pi_critical(self, s1: float, s2: float) -> float:
        """``int_{s1}^{s2} dx / ((1-x)^2 nabla_1^2 f(x))`` for a critical law.

        With ``w = 1/(1-x)`` the integrand becomes ``1/nabla_1^2 f(1 - 1/w)``,
        bounded when ``f''(1) < oo``; otherwise ``v = ln(1/(1-x))`` is used and
        the integrand is ``1/gap_ratio(e^{-v})``.
        """
        if not self.critical:
            raise DomainError("pi_critical needs a critical law")
        if s1 == s2:
            return 0.0
        return self.pi_critical_w(1.0 / (1.0 - s1), 1.0 / (1.0 - s2))

    def pi_critical_w(self, w1: float, w2: float) -> float:
        """Critical ``pi`` between ``1 - 1/w1`` and ``1 - 1/w2``."""
        if not self.critical:
            raise DomainError("pi_critical needs a critical law")
        if w1 == w2:
            return 0.0
        law = self.law
        if _finite_second_moment(law):
            fn = lambda w: 1.0 / float(law.nabla((1.0, 1.0), 1.0 - 1.0 / w))
            return _quad(fn, w1, w2)
        v1, v2 = math.log(w1), math.log(w2)
        return _quad(lambda v: 1.0 / float(law.gap_ratio(math.exp(-v))), v1, v2)

    # -- refined-equation residuals -------------------------------------------------------
    def main_residual(self, t: float, s: float, F: float) -> float:
        """Residual of the refined integral equation for ``F = F_t(s)``."""
        law = self.law
        lt = law.lam * t
        if self.critical:
            return abs(self.pi_critical(min(s, F), max(s, F)) - lt)
        q = self.q
        if abs(s - q) < 1e-12:
            return abs(F - q)
        lhs = (F - q) / (s - q)
        log_gamma_t = lt * (self.f_prime_q - 1.0)
        if self.fp.regime is Regime.SUPERCRITICAL and self._decomposable and self.r == 1.0:
            rq_s, qr_s = self.pi_rq_qr(s)
            rq_f, qr_f = self.pi_rq_qr(F)
            nabla1 = (1.0 - F) / (1.0 - s)
            expo = (qr_f - qr_s) - (rq_f - rq_s)
            rhs = math.exp(log_gamma_t + self.beta * math.log(nabla1) + expo)
        else:
            rhs = math.exp(log_gamma_t - (self.pi_q(F) - self.pi_q(s)))
        return abs(lhs - rhs)

    # -- slowly varying factors ------------------------------------------------------------
    def slowly_varying_profile(self, which: str, grid: Sequence[float]) -> Profile:
        """``L_q(x) = e^{pi_q(q-x)}`` or ``L_rq(x) = e^{pi_rq(r-x)}`` on ``grid``."""
        x = np.asarray(grid, dtype=float)
        if which == "Lq":
            self._require_noncritical()
            root = self.q
            fn = self.pi_q
        elif which == "Lrq":
            self._require_roots()
            root = self.r
            fn = lambda s: self.pi_rq_qr(s)[0]
        else:
            raise DomainError(f"unknown profile {which!r}")
        if np.any(x <= 0) or np.any(2 * x > root):
            raise DomainError("profile grid must lie in (0, root/2]")
        vals = np.array([math.exp(fn(root - xi)) for xi in x])
        doubled = np.array([math.exp(fn(root - 2 * xi)) for xi in x])
        return Profile(x, vals, doubled / vals)


def _finite_second_moment(law: OffspringLaw) -> bool:
    if isinstance(law, TailPowerLaw):
        return law.alpha == 1.0
    return True


def lf_pi_q(law: LinearFractionalLaw, s: float) -> float:
    """Closed-form ``pi_q`` for a non-critical linear-fractional law."""
    fp = fixed_points(law)
    if fp.regime is Regime.CRITICAL:
        raise DomainError("critical law")
    # nabla_q^2 f / (1 - nabla_q f) = c / (r' - x) with the other root r'
    if fp.q < 1.0:
        return law.p / (1.0 - law.p0) * math.log(1.0 / (1.0 - s))
    return law.mean * math.log(fp.r / (fp.r - s))
