import math

import numpy as np
import pytest
from scipy.integrate import quad

from branchkit import ExplicitLaw, LinearFractionalLaw, TailPowerLaw, fixed_points
from branchkit.errors import DomainError
from branchkit.evolve import scalar_F
from branchkit.pifn import PiEvaluator, lf_pi_q
from branchkit.series import xlogx_diagnostic


def raw_pi(law, s1, s2):
    return quad(lambda x: 1.0 / (float(law.pgf(x)) - x), s1, s2, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@pytest.fixture
def pe_super():
    return PiEvaluator(ExplicitLaw([0.2, 0.3, 0.5]))


@pytest.fixture
def pe_lf_super():
    return PiEvaluator(LinearFractionalLaw(0.25, 0.25))


@pytest.fixture
def pe_lf_sub():
    return PiEvaluator(LinearFractionalLaw(0.75, 0.5))


# construction


def test_beta_and_flags(pe_super, pe_lf_super):
    assert pe_super.beta == pytest.approx(1.0, abs=1e-12)
    assert pe_lf_super.beta == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert pe_super.pi_qr_at_r_finite is True
    assert pe_super.pi_rq_at_r_finite is True


def test_beta_is_derivative_ratio():
    law = ExplicitLaw([0.1, 0.2, 0.3, 0.4])
    pe = PiEvaluator(law)
    fq = float(law.derivative(pe.q))
    fr = float(law.derivative(pe.r))
    assert pe.beta == pytest.approx((1 - fq) / (fr - 1), rel=1e-10)
    assert 0 < pe.beta < 1


def test_critical_has_no_beta():
    pe = PiEvaluator(LinearFractionalLaw(0.5, 0.5))
    assert pe.beta is None
    with pytest.raises(DomainError):
        pe.pi_q(0.3)


# pi_plain


def test_pi_plain_empty(pe_super):
    assert pe_super.pi_plain(0.2, 0.2) == 0.0


def test_pi_plain_straddle(pe_super):
    with pytest.raises(DomainError):
        pe_super.pi_plain(0.1, 0.6)


def test_pi_plain_ode_oracle(pe_super):
    law = pe_super.law
    F1 = scalar_F(1.0, 0.0, law).value
    assert pe_super.pi_plain(0.0, F1) == pytest.approx(1.0, abs=1e-9)


def test_pi_plain_upper_branch_ode_oracle(pe_super):
    law = pe_super.law
    s = 0.95
    F = scalar_F(0.7, s, law).value
    assert pe_super.pi_plain(s, F) == pytest.approx(0.7, abs=1e-9)


def test_pi_plain_near_q_uses_decomposition(pe_super):
    q = pe_super.q
    a, b = 0.1, q - 1e-4
    ref = raw_pi(pe_super.law, a, b)
    assert pe_super.pi_plain(a, b) == pytest.approx(ref, rel=1e-8)


def test_pi_plain_critical():
    law = LinearFractionalLaw(0.5, 0.5)
    pe = PiEvaluator(law)
    # f(x) - x = (1-x)^2 / (2 - x) here, so pi(0, s) = s/(1-s) + ln(1/(1-s))
    s = 0.8
    closed = s / (1 - s) + math.log(1 / (1 - s))
    assert pe.pi_plain(0.0, s) == pytest.approx(closed, rel=1e-12)
    assert pe.pi_plain(0.0, s) == pytest.approx(raw_pi(law, 0.0, s), rel=1e-10)


def test_pi_critical_heavy_tail():
    law = TailPowerLaw(0.5, 0.5)
    pe = PiEvaluator(law)
    s = 0.9
    # f(x) - x = c (1-x)^{3/2}: pi(0,s) = (2/c) ((1-s)^{-1/2} - 1)
    assert pe.pi_plain(0.0, s) == pytest.approx(4.0 * ((1 - s) ** -0.5 - 1), rel=1e-10)


# pi_q


def test_pi_q_zero(pe_super):
    assert pe_super.pi_q(0.0) == 0.0


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9, 0.999])
def test_pi_q_lf_super(pe_lf_super, s):
    assert pe_lf_super.pi_q(s) == pytest.approx(math.log(1 / (1 - s)) / 3.0, rel=1e-10)


@pytest.mark.parametrize("s", [0.2, 0.9, 1.0, 1.4])
def test_pi_q_lf_sub(pe_lf_sub, s):
    assert pe_lf_sub.pi_q(s) == pytest.approx(0.5 * math.log(1.5 / (1.5 - s)), rel=1e-10)
    assert lf_pi_q(pe_lf_sub.law, s) == pytest.approx(0.5 * math.log(1.5 / (1.5 - s)), rel=1e-12)


def test_pi_q_increasing(pe_super):
    vals = [pe_super.pi_q(s) for s in np.linspace(0, 0.99, 12)]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("law", [ExplicitLaw([0.2, 0.3, 0.5]), ExplicitLaw([0.1, 0.2, 0.3, 0.4]), LinearFractionalLaw(0.75, 0.5)])
@pytest.mark.parametrize("s1,s2", [(0.0, 0.1), (0.05, 0.3)])
def test_lower_branch_reconstruction(law, s1, s2):
    pe = PiEvaluator(law)
    q = pe.q
    a, b = s1 * q / 0.4, s2 * q / 0.4
    lhs = (1 - pe.f_prime_q) * raw_pi(law, a, b)
    rhs = math.log((q - a) / (q - b)) + pe.pi_q(a) - pe.pi_q(b)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@pytest.mark.parametrize("law", [ExplicitLaw([0.2, 0.3, 0.5]), ExplicitLaw([0.1, 0.2, 0.3, 0.4]), LinearFractionalLaw(0.25, 0.25), LinearFractionalLaw(0.75, 0.5)])
def test_pi_q_decomposition(law):
    pe = PiEvaluator(law)
    for s in np.linspace(0.0, 0.95 * pe.r, 9):
        assert pe.pi_q(s) == pytest.approx(pe.pi_q_decomposed(s), abs=1e-9)


@pytest.mark.parametrize("law", [ExplicitLaw([0.1, 0.2, 0.3, 0.4]), ExplicitLaw([0.3, 0.1, 0.1, 0.1, 0.4]), LinearFractionalLaw(0.25, 0.5)])
def test_integrand_splits(law):
    pe = PiEvaluator(law)
    q, r = pe.q, pe.r
    for x in np.linspace(0.0, 0.95 * r, 11):
        if abs(x - r) < 1e-9:
            continue
        d = float(law.nabla((q, r), x))
        a = float(law.nabla((q, r, r), x)) / d
        b = float(law.nabla((q, q, r), x)) / d
        assert pe.integrand_q(x) == pytest.approx(pe.beta / (r - x) + pe.beta * a - b, abs=1e-10)


def test_third_difference_at_r():
    law = ExplicitLaw([0.1, 0.2, 0.3, 0.4])
    fp = fixed_points(law)
    q, r = fp.q, fp.r
    lhs = float(law.nabla((q, q, r), r))
    rhs = (float(law.derivative(q)) + float(law.derivative(r)) - 2) / (r - q) ** 2
    assert lhs == pytest.approx(rhs, abs=1e-10)


# pi_r and pi_rq, pi_qr


def test_pi_r_empty(pe_super):
    assert pe_super.pi_r(0.6, 0.6) == 0.0


def test_pi_r_domain(pe_super):
    with pytest.raises(DomainError):
        pe_super.pi_r(0.2, 0.6)


@pytest.mark.parametrize("law", [ExplicitLaw([0.2, 0.3, 0.5]), ExplicitLaw([0.1, 0.2, 0.3, 0.4]), LinearFractionalLaw(0.75, 0.5)])
def test_upper_branch_reconstruction(law):
    pe = PiEvaluator(law)
    q, r = pe.q, pe.r
    s2, s1 = q + 0.25 * (r - q), q + 0.75 * (r - q)
    fr = float(law.derivative(r))
    lhs = (fr - 1) * raw_pi(law, s1, s2)
    rhs = math.log((r - s2) / (r - s1)) + pe.pi_r(s2, s1)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_pi_r_vs_raw(pe_super):
    assert pe_super.pi_r(0.5, 0.9) == pytest.approx(pe_super.pi_r_raw(0.5, 0.9), rel=1e-10)


def test_pi_r_lf_closed_form(pe_lf_super):
    # for this law nabla_r^2 f / (nabla_r f - 1) = (1/beta) / (x - q)
    q, b = pe_lf_super.q, pe_lf_super.beta
    assert pe_lf_super.pi_r(0.5, 0.9) == pytest.approx(math.log((0.9 - q) / (0.5 - q)) / b, rel=1e-12)


def test_pi_rq_qr_zero(pe_super):
    assert pe_super.pi_rq_qr(0.0) == (0.0, 0.0)


def test_pi_rq_qr_lf_cancel(pe_lf_super):
    # the correction integral vanishes for linear-fractional laws
    for s in (0.3, 0.9, 1.0):
        rq, qr = pe_lf_super.pi_rq_qr(s)
        assert abs(rq - qr) < 1e-12


def test_pi_rq_qr_finite_at_r(pe_super):
    rq, qr = pe_super.pi_rq_qr(1.0)
    assert math.isfinite(rq) and math.isfinite(qr)
    assert xlogx_diagnostic(pe_super.law.series(64), 1.0, 2).verdict == "converging"


def test_pi_rq_qr_needs_r():
    with pytest.raises(DomainError):
        PiEvaluator(TailPowerLaw(-0.5, 0.5)).pi_rq_qr(0.5)


def test_finiteness_flags_match_diagnostic():
    for law in [ExplicitLaw([0.2, 0.3, 0.5]), LinearFractionalLaw(0.25, 0.25)]:
        pe = PiEvaluator(law)
        for flag, a in [(pe.pi_q_at_q_finite, pe.q), (pe.pi_rq_at_r_finite, pe.r)]:
            rep = xlogx_diagnostic(law.series(256), a, 2)
            assert flag is (rep.verdict == "converging")
        assert math.isfinite(pe.pi_q_at_q())


# residuals of the integral equations


@pytest.mark.parametrize("law", [ExplicitLaw([0.2, 0.3, 0.5]), LinearFractionalLaw(0.75, 0.5), LinearFractionalLaw(0.5, 0.5)])
def test_main_residual_small(law):
    pe = PiEvaluator(law)
    for t in (0.5, 2.0):
        for s in (0.0, 0.5, 0.9):
            F = scalar_F(t, s, law).value
            assert pe.main_residual(t, s, F) < 1e-8


def test_main_residual_zero_time():
    pe = PiEvaluator(LinearFractionalLaw(0.5, 0.5))
    assert pe.main_residual(0.0, 0.3, 0.3) == 0.0


def test_main_residual_detects_error():
    law = ExplicitLaw([0.2, 0.3, 0.5])
    pe = PiEvaluator(law)
    F = scalar_F(1.0, 0.2, law).value
    assert pe.main_residual(1.0, 0.2, F + 1e-3) > 1e-4


# slowly varying factors


def test_profile_lf_sub(pe_lf_sub):
    x = np.array([1e-1, 1e-2, 1e-4])
    prof = pe_lf_sub.slowly_varying_profile("Lq", x)
    np.testing.assert_allclose(prof.values, (1.5 / (0.5 + x)) ** 0.5, rtol=1e-10)
    assert abs(prof.ratio[-1] - 1) < abs(prof.ratio[0] - 1)


def test_profile_finite_support(pe_super):
    x = np.geomspace(1e-1, 1e-6, 6)
    prof = pe_super.slowly_varying_profile("Lq", x)
    assert np.all(np.isfinite(prof.values))
    assert abs(prof.ratio[-1] - 1) < 1e-5
    prof = pe_super.slowly_varying_profile("Lrq", x)
    assert abs(prof.ratio[-1] - 1) < 1e-5


def test_profile_bad_grid(pe_super):
    with pytest.raises(DomainError):
        pe_super.slowly_varying_profile("Lq", [0.5])
    with pytest.raises(DomainError):
        pe_super.slowly_varying_profile("nope", [0.01])
