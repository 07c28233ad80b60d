"""Three routes to ``F_t(s) = E s^{Z_t}``.

* ``scalar_F`` integrates the backward Kolmogorov equation
  ``dF/dt = lam (f(F) - F)`` for one ``s``;
* ``series_F`` integrates the same equation in the ring of truncated power
  series and returns ``P(Z_t = k)`` for ``k <= N``;
* ``integral_inverse`` solves ``pi(s, F) = lam t`` for ``F``.

Both ODE routes work with the complement ``1 - F`` so that survival
probabilities of order ``1e-200`` keep full relative precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from . import series as ser
from .errors import ConvergenceError, DomainError
from .law import FixedPoints, OffspringLaw, fixed_points
from .pifn import PiEvaluator

DEFAULT_TOL = 1e-11
DEFAULT_ORDER = 64
NEAR_Q = 1e-10
MAX_STEPS = 200_000


class Route(str, enum.Enum):
    ODE = "ODE"
    SERIES_ODE = "SeriesODE"
    INTEGRAL_INVERSION = "IntegralInversion"


@dataclass(frozen=True)
class EvolveResult:
    t: float
    s: float | int
    value: float | np.ndarray
    error_estimate: float
    route: Route

    def series(self) -> ser.TruncatedSeries:
        """The coefficient table as a series (series route only)."""
        if self.route is not Route.SERIES_ODE:
            raise TypeError("only series results carry coefficients")
        c = np.asarray(self.value)
        return ser.TruncatedSeries(c, None, max(0.0, 1.0 - float(c.sum())))


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    integral: float
    reason: str


@lru_cache(maxsize=256)
def _fixed(law: OffspringLaw) -> FixedPoints:
    return fixed_points(law)


@lru_cache(maxsize=256)
def pi_evaluator(law: OffspringLaw) -> PiEvaluator:
    """Shared read-only evaluator per law."""
    return PiEvaluator(law, _fixed(law))


def _check_time(t: float) -> float:
    t = float(t)
    if not (t >= 0.0 and math.isfinite(t)):
        raise DomainError(f"time must be finite and non-negative, got {t!r}")
    return t


def _tighter(tol: float) -> float:
    return max(tol * 1e-2, 1e-13)


def mean(t: float, law: OffspringLaw) -> float:
    """``M_t = exp(lam (m - 1) t)``."""
    t = _check_time(t)
    m = law.mean
    if not math.isfinite(m):
        return 1.0 if t == 0 else math.inf
    return math.exp(law.lam * (m - 1.0) * t)


# ---------------------------------------------------------------------------
# scalar ODE
# ---------------------------------------------------------------------------


def _solve_log_complement(law: OffspringLaw, t: float, z0: float, tol: float, sign: float = 1.0) -> float:
    lam = law.lam

    def rhs(_, z):
        return [-lam * float(law.gap_ratio(sign * math.exp(z[0])))]

    sol = solve_ivp(rhs, (0.0, t), [z0], method="RK45", rtol=tol, atol=tol)
    if not sol.success:
        raise ConvergenceError(f"ODE integration failed: {sol.message}")
    if sol.t.size > MAX_STEPS:
        raise ConvergenceError("step budget exhausted")
    return float(sol.y[0, -1])


def scalar_F(
    t: float, s: float, law: OffspringLaw, tol: float = DEFAULT_TOL, one_minus_s: float | None = None
) -> EvolveResult:
    """Integrate ``dF/dt = lam (f(F) - F)`` from ``F_0 = s``.

    The unknown is ``z = ln|1 - F|``, for which the equation reads
    ``z' = -lam * gap_ratio(+-e^z)``.  Starting points above 1 are accepted
    inside the radius of convergence (this is how ``F_t(r) = r`` is checked).
    ``one_minus_s`` supplies ``1 - s`` directly for points such as
    ``e^{-rho/M_t}`` that round to 1 in floating point.  The error estimate is the difference to a run at a hundred times
    tighter tolerance.
    """
    t = _check_time(t)
    if one_minus_s is not None:
        if not (0.0 < one_minus_s <= 1.0):
            raise DomainError("one_minus_s must lie in (0, 1]")
        s = 1.0 - one_minus_s
    s = float(s)
    R = law.radius
    if not (0.0 <= s <= 1.0 or (s > 1.0 and (R is None or s < R))):
        raise DomainError(f"s must lie in [0, 1] or inside the radius, got {s!r}")
    fp = _fixed(law)
    if t == 0.0:
        return EvolveResult(t, s, s, 0.0, Route.ODE)
    if abs(s - fp.q) < NEAR_Q:
        return EvolveResult(t, s, fp.q, 0.0, Route.ODE)
    if s == 1.0 and one_minus_s is None:
        if not regularity(law).regular:
            raise DomainError("irregular law: F_t(1) < 1 is reported, not evolved")
        return EvolveResult(t, s, 1.0, 0.0, Route.ODE)
    if one_minus_s is not None:
        sign, z0 = 1.0, math.log(one_minus_s)
    else:
        sign = 1.0 if s < 1.0 else -1.0
        z0 = math.log(abs(1.0 - s))
    z1 = _solve_log_complement(law, t, z0, tol, sign)
    z2 = _solve_log_complement(law, t, z0, _tighter(tol), sign)
    f1, f2 = 1.0 - sign * math.exp(z1), 1.0 - sign * math.exp(z2)
    return EvolveResult(t, s, f2, max(abs(f1 - f2), 1e-16), Route.ODE)


# ---------------------------------------------------------------------------
# series ODE
# ---------------------------------------------------------------------------


def _solve_series(law: OffspringLaw, t: float, N: int, tol: float) -> np.ndarray:
    # 1 - C_t(s) = D0 * U(s) with U(0) = 1; state = (ln D0, U_1 .. U_N)
    lam = law.lam

    def rhs(_, y):
        u = np.empty(N + 1)
        u[0] = 1.0
        u[1:] = y[1:]
        d = math.exp(y[0]) * u
        r = law.gap_ratio_series(d)
        out = np.empty(N + 1)
        out[0] = -lam * r[0]
        rr = r.copy()
        rr[0] = 0.0
        out[1:] = -lam * ser.mul(u, rr, N)[1:]
        return out

    y0 = np.zeros(N + 1)
    y0[1] = -1.0
    sol = solve_ivp(rhs, (0.0, t), y0, method="RK45", rtol=tol, atol=tol)
    if not sol.success:
        raise ConvergenceError(f"series ODE integration failed: {sol.message}")
    return sol.y[:, -1]


def _coefficients(y: np.ndarray) -> np.ndarray:
    c = -math.exp(y[0]) * y
    c[0] = -math.expm1(y[0])
    return c


def survival_state(t: float, N: int, law: OffspringLaw, tol: float = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """``(ln Q_t, u)`` with ``P(Z_t = k | Z_t > 0) = u_k`` for ``k = 1..N``.

    Both come straight from the factorised state, so they keep full relative
    precision however small ``Q_t`` is.
    """
    t = _check_time(t)
    N = int(N)
    u = np.zeros(N + 1)
    if t == 0.0:
        u[1] = 1.0
        return 0.0, u
    y = _solve_series(law, t, N, tol)
    u[1:] = -y[1:]
    return float(y[0]), u


def series_F(t: float, N: int, law: OffspringLaw, tol: float = DEFAULT_TOL) -> EvolveResult:
    """``P(Z_t = k)`` for ``k = 0..N`` from the series-valued Kolmogorov equation."""
    t = _check_time(t)
    N = int(N)
    if N < 1:
        raise DomainError("order N must be >= 1")
    if t == 0.0:
        c = np.zeros(N + 1)
        c[1] = 1.0
        return EvolveResult(t, N, c, 0.0, Route.SERIES_ODE)
    c1 = _coefficients(_solve_series(law, t, N, tol))
    c2 = _coefficients(_solve_series(law, t, N, _tighter(tol)))
    err = float(np.max(np.abs(c1 - c2)))
    # round-off can leave coefficients at -1e-17
    c2 = np.where((c2 < 0) & (c2 > -max(err, 1e-14)), 0.0, c2)
    return EvolveResult(t, N, c2, max(err, 1e-16), Route.SERIES_ODE)


def evaluate_series(res: EvolveResult, s: float) -> tuple[float, float]:
    """``F_t(s)`` from a series result, with truncation added to the error."""
    c = np.asarray(res.value)
    val = float(np.polyval(c[::-1], s))
    missing = max(0.0, 1.0 - float(c.sum()))
    trunc = missing * s ** (c.size) if s < 1 else missing
    return val, res.error_estimate * c.size + trunc


def derivative_at_q(t: float, law: OffspringLaw, N: int = 256, tol: float = DEFAULT_TOL) -> float:
    """``F_t'(q) = sum k P(Z_t=k) q^(k-1)`` from the series route."""
    q = _fixed(law).q
    c = np.asarray(series_F(t, N, law, tol).value)
    return float(np.polyval(ser.derivative(c)[::-1], q))


# ---------------------------------------------------------------------------
# integral equation
# ---------------------------------------------------------------------------


def integral_inverse(
    t: float, s: float, law: OffspringLaw, tol: float = 1e-12, pe: PiEvaluator | None = None
) -> EvolveResult:
    """Solve ``pi(s, F) = lam t`` for ``F`` by bracketing on the correct side of ``q``."""
    t = _check_time(t)
    s = float(s)
    if not (0.0 <= s < 1.0):
        raise DomainError(f"s must lie in [0, 1), got {s!r}")
    pe = pi_evaluator(law) if pe is None else pe
    q = pe.q
    if t == 0.0:
        return EvolveResult(t, s, s, 0.0, Route.INTEGRAL_INVERSION)
    if abs(s - q) < NEAR_Q:
        return EvolveResult(t, s, q, 0.0, Route.INTEGRAL_INVERSION)
    lt = law.lam * t
    if pe.critical:
        return _invert_critical(t, s, lt, pe, tol)

    sign = 1.0 if s > q else -1.0
    target = (1.0 - pe.f_prime_q) * lt
    w0 = math.log(abs(s - q))
    base = w0 + pe.pi_q(s) - target

    def g(w):
        return base - w - pe.pi_q(q + sign * math.exp(w))

    hi, lo = w0, w0 - max(target, 1.0)
    while g(lo) <= 0.0:
        lo -= 2.0 * (hi - lo)
        if lo < -745.0:
            lo = -745.0
            break
    w = brentq(g, lo, hi, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=500)
    F = q + sign * math.exp(w)
    err = abs(F - q) * tol + 1e-15
    return EvolveResult(t, s, F, err, Route.INTEGRAL_INVERSION)


def _invert_critical(t: float, s: float, lt: float, pe: PiEvaluator, tol: float) -> EvolveResult:
    u0 = 1.0 / (1.0 - s)

    def g(u):
        return pe.pi_critical_w(u0, u) - lt

    hi = u0 + lt
    while g(hi) < 0.0:
        hi = u0 + 2.0 * (hi - u0)
        if hi > 1e300:
            raise ConvergenceError("could not bracket the critical inversion")
    u = brentq(g, u0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    F = 1.0 - 1.0 / u
    return EvolveResult(t, s, F, tol / u + 1e-16, Route.INTEGRAL_INVERSION)


# ---------------------------------------------------------------------------
# regularity
# ---------------------------------------------------------------------------


def regularity(law: OffspringLaw, eps: float = 1e-2) -> RegularityReport:
    """Regular iff ``int_{1-eps}^1 dx / (x - f(x))`` diverges.

    A finite mean gives ``x - f(x) = (1-x)(nabla_1 f(x) - 1) = O(1-x)`` and
    hence divergence.  Otherwise the integral is computed in ``v = ln(1/(1-x))``
    where it reads ``int dv / (-gap_ratio(e^{-v}))``.
    """
    if math.isfinite(law.mean):
        return RegularityReport(True, math.inf, "finite mean")
    v0 = -math.log(eps)

    def integrand(v):
        return 1.0 / -float(law.gap_ratio(math.exp(-v)))

    # y = e^{-v} stays a normal double up to v = 700.  The decay of the
    # integrand over [350, 700] decides: anything no faster than v^{-2} is
    # treated as divergent, otherwise the tail is extrapolated exponentially.
    mid, far = 350.0, 700.0
    head = quad(integrand, v0, far, limit=400, points=[mid])[0]
    i_mid, i_far = integrand(mid), integrand(far)
    if not (math.isfinite(head) and i_far > 0.0):
        return RegularityReport(True, math.inf, "integral diverges")
    drop = math.log(i_mid / i_far)
    if drop <= 2.0 * math.log(far / mid):
        return RegularityReport(True, math.inf, "integral diverges")
    return RegularityReport(False, head + i_far * (far - mid) / drop, "integral converges")


def mean_from_series(res: EvolveResult) -> float:
    c = np.asarray(res.value)
    return float(np.dot(np.arange(c.size), c))
