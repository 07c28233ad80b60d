"""Limit laws in the three regimes.

* subcritical: ``e^{lam(1-m)t} Q_t -> c = e^{-pi_1(1)}`` and the Yaglom limit
  ``psi(s) = 1 - (1-s) e^{pi_1(s)}``;
* critical: ``Q_t ~ 1/(b lam t)`` with an exponential conditional limit,
  and the log-type ``alpha = 0`` machinery ``V(y) = pi(1 - 1/y)``;
* supercritical: ``P(Z_t = k) ~ a_k gamma^t`` and the Laplace transform of
  ``W = lim Z_t / M_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import series as ser
from .errors import ConvergenceError, DomainError, UnderflowError
from .evolve import _fixed, mean, pi_evaluator, scalar_F, survival_state
from .law import ExplicitLaw, LinearFractionalLaw, OffspringLaw, Regime, TailPowerLaw
from .pifn import PiEvaluator

DAMPING = 0.5
MAX_ITER = 200
# pi_1(1) above this counts as infinite when the x log x diagnostic agrees
PI_OVERFLOW = 700.0


@dataclass(frozen=True)
class SubcriticalLimit:
    c: float
    psi: ser.TruncatedSeries
    pi_1_at_1: float

    def psi_value(self, s: float) -> float:
        return float(self.psi(s))


@dataclass(frozen=True)
class CriticalReport:
    t: np.ndarray
    survival: np.ndarray
    predicted: np.ndarray | None
    b: float
    alpha: float
    fitted_slope: float | None
    laplace_curve: Callable[[np.ndarray], np.ndarray] = field(repr=False)


@dataclass(frozen=True)
class A0Report:
    y: np.ndarray
    V: np.ndarray
    increasing: bool
    ratio: np.ndarray
    limit_cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)


@dataclass(frozen=True)
class SupercriticalLimit:
    gamma: float
    beta: float
    a_coeffs: ser.TruncatedSeries | None = None
    extinction_limit: ser.TruncatedSeries | None = None
    phi_table: dict[float, float] = field(default_factory=dict)
    laplace_table: dict[float, float] = field(default_factory=dict)
    degenerate: bool = False


# ---------------------------------------------------------------------------
# shared series helpers
# ---------------------------------------------------------------------------


def _pi_q_series(law: OffspringLaw, q: float, N: int, r: float | None) -> np.ndarray:
    """Coefficients of ``pi_q`` from ``nabla_q^2 f / (1 - nabla_q f)``."""
    num = law.nabla_series((q, q), N)
    if r is not None:
        # 1 - nabla_q f(x) = (r - x) nabla_q nabla_r f(x)
        lin = np.zeros(N + 1)
        lin[0], lin[1] = r, -1.0
        den = ser.mul(lin, law.nabla_series((q, r), N), N)
    else:
        den = -law.nabla_series((q,), N)
        den[0] += 1.0
    return ser.integrate(ser.mul(num, ser.reciprocal(den, N), N))[: N + 1]


def _one_minus_s_times(e: np.ndarray) -> np.ndarray:
    out = e.copy()
    out[1:] -= e[:-1]
    return out


# ---------------------------------------------------------------------------
# subcritical
# ---------------------------------------------------------------------------


def subcritical_limit(law: OffspringLaw, pe: PiEvaluator | None = None, N: int = 64) -> SubcriticalLimit:
    """``c = e^{-pi_1(1)}`` and the Yaglom pgf ``psi`` to order ``N``."""
    pe = pi_evaluator(law) if pe is None else pe
    if not (law.mean < 1.0):
        raise DomainError("subcritical_limit needs m < 1")
    if pe.pi_q_at_q_finite is False:
        pi1 = math.inf
    else:
        pi1 = pe.pi_q_at_q()
    if pi1 > PI_OVERFLOW and not law.xlogx_holds(1.0):
        pi1 = math.inf
    c = 0.0 if not math.isfinite(pi1) else math.exp(-pi1)
    e = ser.exp(_pi_q_series(law, 1.0, N, pe.r))
    psi = -_one_minus_s_times(e)[: N + 1]
    psi[0] += 1.0
    psi[0] = 0.0 if abs(psi[0]) < 1e-13 else psi[0]
    return SubcriticalLimit(c, ser.TruncatedSeries(psi, pe.r), pi1)


def psi_closed(law: OffspringLaw, s: float, pe: PiEvaluator | None = None) -> float:
    """``1 - (1-s) e^{pi_1(s)}`` by quadrature."""
    pe = pi_evaluator(law) if pe is None else pe
    return 1.0 - (1.0 - s) * math.exp(pe.pi_q(s))


def conditional_law_at_t(t: float, law: OffspringLaw, N: int = 64, tol: float = 1e-11) -> ser.TruncatedSeries:
    """Coefficients of ``E(s^{Z_t} | Z_t > 0) = 1 - (1 - F_t(s))/(1 - F_t(0))``."""
    log_q, u = survival_state(t, N, law, tol)
    if log_q < math.log(1e-300):
        raise UnderflowError(f"Q_t = exp({log_q:.1f}) is below 1e-300")
    return ser.TruncatedSeries(np.clip(u, 0.0, None), None, max(0.0, 1.0 - float(u.sum())))


# ---------------------------------------------------------------------------
# critical
# ---------------------------------------------------------------------------


def half_second_moment(law: OffspringLaw) -> float:
    """``b = f''(1)/2``; infinite for heavy tails."""
    if isinstance(law, LinearFractionalLaw):
        return (1 - law.p0) * law.ratio / law.p**2
    if isinstance(law, TailPowerLaw):
        return law.b
    return 0.5 * float(law.derivative(1.0, 2))


def laplace_curve(alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    """``theta -> 1 - (1 + theta^{-alpha})^{-1/alpha}``."""

    def curve(theta):
        theta = np.asarray(theta, dtype=float)
        return 1.0 - (1.0 + theta ** (-alpha)) ** (-1.0 / alpha)

    return curve


def survival(t: float, law: OffspringLaw, tol: float = 1e-11) -> float:
    """``Q_t = 1 - F_t(0)``."""
    return 1.0 - scalar_F(t, 0.0, law, tol).value


def critical_asymptotics(law: OffspringLaw, pe: PiEvaluator | None, t_grid: Sequence[float]) -> CriticalReport:
    fp = _fixed(law)
    if fp.regime is not Regime.CRITICAL:
        raise DomainError("critical_asymptotics needs m = 1")
    t = np.asarray(t_grid, dtype=float)
    Q = np.array([survival(ti, law) for ti in t])
    b = half_second_moment(law)
    alpha = law.alpha if isinstance(law, TailPowerLaw) else 1.0
    if math.isfinite(b):
        predicted = 1.0 / (b * law.lam * t)
        slope = None
    else:
        predicted = None
        slope = float(np.polyfit(np.log(t), np.log(Q), 1)[0]) if t.size >= 2 else None
    return CriticalReport(t, Q, predicted, b, alpha, slope, laplace_curve(alpha))


def conditional_laplace(t: float, law: OffspringLaw, theta: float, tol: float = 1e-12) -> float:
    """``E(e^{-theta Q_t Z_t} | Z_t > 0) = 1 - (1 - F_t(e^{-theta Q_t}))/Q_t``."""
    Q = survival(t, law, tol)
    y = -math.expm1(-theta * Q)
    return 1.0 - (1.0 - scalar_F(t, 1.0 - y, law, tol, one_minus_s=y).value) / Q


def theorem_a0_machinery(law: OffspringLaw, pe: PiEvaluator | None, y_grid: Sequence[float]) -> A0Report:
    """``V(y) = pi(1 - 1/y)`` for the log-type critical law."""
    if not (isinstance(law, TailPowerLaw) and law.alpha == 0.0):
        raise DomainError("the A0 machinery needs the alpha = 0 tail-power law")
    pe = pi_evaluator(law) if pe is None else pe
    y = np.asarray(y_grid, dtype=float)
    if np.any(y < 1.0):
        raise DomainError("V is defined for y >= 1")
    V = np.array([pe.pi_critical_w(1.0, yi) for yi in y])
    V2 = np.array([pe.pi_critical_w(1.0, 2.0 * yi) for yi in y])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(V > 0, V2 / V, np.nan)
    increasing = bool(np.all(np.diff(V) > 0))

    def cdf(x):
        return 1.0 - np.exp(-np.asarray(x, dtype=float))

    return A0Report(y, V, increasing, ratio, cdf)


# ---------------------------------------------------------------------------
# supercritical
# ---------------------------------------------------------------------------


def _require_supercritical(law: OffspringLaw, pe: PiEvaluator) -> None:
    if pe.fp.regime is not Regime.SUPERCRITICAL or not math.isfinite(law.mean):
        raise DomainError("needs a supercritical law with finite mean")


def supercritical_local_limit(law: OffspringLaw, pe: PiEvaluator | None = None, N: int = 64) -> SupercriticalLimit:
    """``a_k`` from ``q e^{-pi_q(q)} + (s-q) e^{pi_q(s) - pi_q(q)}`` and the
    extinction-conditioned limit ``1 - (1-s) e^{pi_q(sq)}``."""
    pe = pi_evaluator(law) if pe is None else pe
    _require_supercritical(law, pe)
    q = pe.q
    piq = _pi_q_series(law, q, N, pe.r)
    e = ser.exp(piq)
    scale = math.exp(-pe.pi_q(q))
    a = np.zeros(N + 1)
    a[0] = q
    # (s - q) e(s)
    a[1:] += e[:-1]
    a -= q * e
    a *= scale
    ext = None
    if q > 0.0:
        eq = ser.exp(piq * q ** np.arange(N + 1))
        ext = -_one_minus_s_times(eq)
        ext[0] += 1.0
        ext[0] = 0.0 if abs(ext[0]) < 1e-13 else ext[0]
        ext = ser.TruncatedSeries(ext, 1.0 / q)
    return SupercriticalLimit(
        gamma=pe.fp.gamma,
        beta=pe.beta,
        a_coeffs=ser.TruncatedSeries(a, 1.0),
        extinction_limit=ext,
    )


def laplace_at_t(t: float, rho: float, law: OffspringLaw, tol: float = 1e-12) -> float:
    """``E e^{-rho Z_t / M_t} = F_t(e^{-rho/M_t})``."""
    y = -math.expm1(-rho / mean(t, law))
    return scalar_F(t, 1.0 - y, law, tol, one_minus_s=y).value


def _laplace_fixed_point(pe: PiEvaluator, rho: float, tol: float) -> float:
    # L = q + (1-q) ((1-L)/rho)^beta exp{pi_rq(1) - pi_rq(L) - pi_qr(1) + pi_qr(L)}
    q, beta = pe.q, pe.beta
    rq1, qr1 = pe.pi_rq_qr(1.0)

    def T(L):
        rq, qr = pe.pi_rq_qr(L)
        return q + (1.0 - q) * ((1.0 - L) / rho) ** beta * math.exp(rq1 - rq - qr1 + qr)

    L = q + (1.0 - q) / (1.0 + rho)
    for _ in range(MAX_ITER):
        nxt = (1.0 - DAMPING) * L + DAMPING * T(L)
        if not (q < nxt < 1.0):
            break
        if abs(nxt - L) < tol:
            return nxt
        L = nxt
    # the residual L - T(L) increases from q - T(q) < 0 to 1 - q > 0
    lo, hi = q + 1e-300 + 1e-15 * (1.0 - q), 1.0 - 1e-16
    g = lambda x: x - T(x)
    if g(lo) > 0 or g(hi) < 0:
        raise ConvergenceError(f"no bracket for the Laplace fixed point at rho={rho:g}")
    L = brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    if abs(g(L)) > 10 * tol:
        err = ConvergenceError(f"fixed point residual {abs(g(L)):.3g} at rho={rho:g}")
        err.residual = abs(g(L))
        raise err
    return L


def martingale_limit_transform(
    law: OffspringLaw, pe: PiEvaluator | None, rho_grid: Sequence[float], tol: float = 1e-12
) -> SupercriticalLimit:
    """Laplace transform ``E e^{-rho W} = q + (1-q) phi(rho)`` on ``rho_grid``.

    Without the x log x condition at 1 the limit is degenerate, ``W = 0``,
    and the table is filled with ``phi = 1``.
    """
    pe = pi_evaluator(law) if pe is None else pe
    _require_supercritical(law, pe)
    q = pe.q
    degenerate = not law.xlogx_holds(1.0)
    phi: dict[float, float] = {}
    lap: dict[float, float] = {}
    for rho in rho_grid:
        rho = float(rho)
        if rho <= 0:
            raise DomainError("rho must be positive")
        L = 1.0 if degenerate else _laplace_fixed_point(pe, rho, tol)
        lap[rho] = L
        phi[rho] = (L - q) / (1.0 - q)
    return SupercriticalLimit(
        gamma=pe.fp.gamma, beta=pe.beta, phi_table=phi, laplace_table=lap, degenerate=degenerate
    )


def degenerate_drift(law: OffspringLaw, rho: float, horizons: Sequence[float], tol: float = 1e-10) -> np.ndarray:
    """``F_t(e^{-rho/M_t})`` along ``horizons``; drifts to 1 when ``W = 0``."""
    return np.array([laplace_at_t(t, rho, law, tol) for t in horizons])


def heavy_law(K: int = 2**16, weight: float = 0.8, lam: float = 1.0) -> ExplicitLaw:
    """Supercritical law with ``p_k`` proportional to ``1/(k^2 ln^2 k)`` for ``2 <= k <= K``.

    The mean is finite but ``sum p_k k ln k`` grows like ``ln ln K``, so the
    x log x condition fails in the limit ``K -> oo``.
    """
    k = np.arange(K + 1, dtype=float)
    p = np.zeros(K + 1)
    p[2:] = weight / (k[2:] ** 2 * np.log(k[2:]) ** 2)
    p[0] = 1.0 - p.sum()
    return ExplicitLaw(p, lam)
