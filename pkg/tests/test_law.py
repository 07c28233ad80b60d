import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchkit import (
    ExplicitLaw,
    LinearFractionalLaw,
    Regime,
    TailPowerLaw,
    dual_law,
    fixed_points,
    lf_closed_forms,
    make_law,
    success_law,
)
from branchkit.errors import DomainError, InvalidLawError, PoleError
from branchkit.law import beta_of, load_law
from branchkit.series import TruncatedSeries, tail_transform

GRID = np.linspace(0.0, 0.99, 34)


# construction


def test_explicit_mean():
    law = make_law({"type": "explicit", "probs": [0.2, 0.3, 0.5], "lambda": 1})
    assert law.mean == pytest.approx(1.3, abs=1e-15)


def test_lf_coefficients():
    c = make_law({"type": "linear-fractional", "p0": 0.25, "p": 0.5}).series(20).coeffs
    assert c[0] == 0.25
    np.testing.assert_allclose(c[1:], 0.375 * 0.5 ** np.arange(20), rtol=1e-14)


@pytest.mark.parametrize(
    "spec",
    [
        {"type": "explicit", "probs": [0.0, 1.0]},
        {"type": "explicit", "probs": [0.5, -0.1, 0.6]},
        {"type": "explicit", "probs": [0.5, 0.6]},
        {"type": "explicit", "probs": [0.5, 0.5], "lambda": 0},
        {"type": "linear-fractional", "p0": 1.0, "p": 0.5},
        {"type": "linear-fractional", "p0": 0.2},
        {"type": "tail-power", "alpha": 0.5, "scale": 0.9},
        {"type": "mystery"},
    ],
)
def test_invalid_laws(spec):
    with pytest.raises(InvalidLawError):
        make_law(spec)


def test_small_renormalization():
    law = ExplicitLaw([0.2, 0.3, 0.5 + 5e-10])
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-15)


def test_load_law(tmp_path):
    p = tmp_path / "law.json"
    p.write_text('{"type": "linear-fractional", "p0": 0.75, "p": 0.5, "lambda": 2}')
    assert load_law(p) == LinearFractionalLaw(0.75, 0.5, 2.0)
    p.write_text("{not json")
    with pytest.raises(InvalidLawError):
        load_law(p)


def test_to_spec_round_trip():
    for law in [ExplicitLaw([0.2, 0.3, 0.5], 2.0), LinearFractionalLaw(0.25, 0.5), TailPowerLaw(0.5, 0.4, 512)]:
        assert make_law(law.to_spec()) == law


# fixed points


def test_fixed_points_explicit():
    fp = fixed_points(ExplicitLaw([0.2, 0.3, 0.5]))
    assert fp.q == pytest.approx(0.4, abs=1e-14)
    assert fp.r == 1.0
    assert fp.regime is Regime.SUPERCRITICAL


def test_fixed_points_extendable():
    fp = fixed_points(LinearFractionalLaw(0.75, 0.5))
    assert fp.q == 1.0
    assert fp.r == pytest.approx(1.5, abs=1e-14)
    assert fp.regime is Regime.EXTENDABLE_SUBCRITICAL


def test_fixed_points_critical():
    fp = fixed_points(LinearFractionalLaw(0.5, 0.5))
    assert fp.q == 1.0 and fp.r is None and fp.regime is Regime.CRITICAL


def test_fixed_points_roots(ref_law):
    fp = fixed_points(ref_law)
    assert abs(float(ref_law.pgf(fp.q)) - fp.q) < 1e-12
    if fp.r is not None:
        assert abs(float(ref_law.pgf(fp.r)) - fp.r) < 1e-12 * max(1.0, fp.r)
        assert fp.q < fp.r or fp.regime is Regime.CRITICAL
    below = np.linspace(0.0, fp.q, 50, endpoint=False)
    assert np.all(ref_law.pgf(below) - below > 0)


def test_gamma_exponent():
    fp = fixed_points(ExplicitLaw([0.2, 0.3, 0.5], 2.0))
    assert fp.f_prime_q == pytest.approx(0.7, abs=1e-13)
    assert fp.gamma_exponent == pytest.approx(2.0 * (0.7 - 1.0), abs=1e-12)


# conditioned laws


def test_dual_explicit():
    g = dual_law(ExplicitLaw([0.2, 0.3, 0.5]))
    np.testing.assert_allclose(g.probs, [0.5, 0.3, 0.2], atol=1e-13)
    assert g.mean == pytest.approx(0.7, abs=1e-13)


def test_dual_lf():
    g = dual_law(LinearFractionalLaw(0.25, 0.25))
    assert g.mean == pytest.approx(1.0 / 3.0, abs=1e-14)


def test_dual_without_extinction():
    with pytest.raises(DomainError):
        dual_law(ExplicitLaw([0.0, 0.5, 0.5]))
    with pytest.raises(DomainError):
        dual_law(ExplicitLaw([0.5, 0.5]))


def test_success_explicit():
    h = success_law(ExplicitLaw([0.2, 0.3, 0.5]))
    np.testing.assert_allclose(h.probs, [0.0, 0.7, 0.3], atol=1e-13)
    assert h.mean == pytest.approx(1.3, abs=1e-13)


def test_success_first_coefficient_is_f_prime_q():
    law = ExplicitLaw([0.1, 0.2, 0.3, 0.4])
    fp = fixed_points(law)
    h = success_law(law)
    assert h.probs[1] == pytest.approx(fp.f_prime_q, rel=1e-12)


def test_success_identity_when_q_zero():
    law = ExplicitLaw([0.0, 0.4, 0.6])
    assert success_law(law) is law


def test_success_lf_matches_explicit_route():
    law = LinearFractionalLaw(0.25, 0.25)
    h = success_law(law)
    q = fixed_points(law).q
    s = np.linspace(0, 1, 11)
    ref = (law.pgf(s * (1 - q) + q) - q) / (1 - q)
    np.testing.assert_allclose(h.pgf(s), ref, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=8))
def test_dual_and_success_means(w):
    p = np.array(w) / sum(w)
    law = ExplicitLaw(p)
    if law.mean <= 1.02:
        return
    fp = fixed_points(law)
    assert dual_law(law).mean == pytest.approx(fp.f_prime_q, abs=1e-10)
    assert success_law(law).mean == pytest.approx(law.mean, abs=1e-10)


# linear-fractional closed forms


def test_closed_form_single():
    cf = lf_closed_forms(0.25, 0.5, (1.0,))
    assert cf(0.4) == pytest.approx(0.75 / (1 - 0.2), rel=1e-15)


def test_closed_form_q_one():
    q = fixed_points(LinearFractionalLaw(0.25, 0.25)).q
    cf = lf_closed_forms(0.25, 0.25, (q, 1.0))
    for s in (0.0, 0.5, 0.9):
        assert cf(s) == pytest.approx(0.75 / (1 - 0.75 * s), rel=1e-13)


def test_closed_form_pole():
    with pytest.raises(PoleError):
        lf_closed_forms(0.25, 0.5, (2.0,))


def test_lf_beta():
    assert beta_of(LinearFractionalLaw(0.25, 0.25)) == pytest.approx(1.0 / 3.0, rel=1e-13)


def test_closed_form_vs_truncated_series():
    law = LinearFractionalLaw(0.3, 0.6)
    v = TruncatedSeries(law.series(60).coeffs)
    anchors = (0.2, 0.9)
    u = tail_transform(tail_transform(v, anchors[0]), anchors[1]).coeffs
    ref = lf_closed_forms(0.3, 0.6, anchors).coefficients(u.size - 1)
    np.testing.assert_allclose(u[:30], ref[:30], rtol=1e-12)


def test_beta_in_range(ref_law):
    b = beta_of(ref_law)
    if b is not None:
        assert 0.0 < b <= 1.0 + 1e-12


def test_beta_quadratic_boundary():
    assert beta_of(ExplicitLaw([0.2, 0.3, 0.5])) == pytest.approx(1.0, abs=1e-12)


# fixed-point factorisations


def test_factorisation_at_q_and_r(ref_law):
    fp = fixed_points(ref_law)
    f = ref_law.pgf(GRID)
    if fp.q < 1.0 or fp.regime is not Regime.CRITICAL:
        nq = ref_law.nabla((fp.q,), GRID)
        np.testing.assert_allclose(f - GRID, (fp.q - GRID) * (1 - nq), atol=1e-10)
    if fp.r is not None and fp.regime is not Regime.CRITICAL:
        nr = ref_law.nabla((fp.r,), GRID)
        np.testing.assert_allclose(GRID - f, (fp.r - GRID) * (nr - 1), atol=1e-10)
        assert float(ref_law.nabla((fp.q,), fp.r)) == pytest.approx(1.0, abs=1e-10)
        assert float(ref_law.nabla((fp.r,), fp.q)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("law", [LinearFractionalLaw(0.5, 0.5), ExplicitLaw([0.3, 0.45, 0.2, 0.05]), TailPowerLaw(1.0, 0.5)])
def test_critical_factorisation(law):
    n2 = law.nabla((1.0, 1.0), GRID)
    np.testing.assert_allclose(law.pgf(GRID) - GRID, (1 - GRID) ** 2 * n2, atol=1e-10)


# tail-power family


@pytest.mark.parametrize("alpha,scale", [(0.5, 0.5), (1.0, 0.4), (-0.5, 1.0), (-0.3, 0.7), (0.0, 2.0)])
def test_tail_power_series_matches_pgf(alpha, scale):
    law = TailPowerLaw(alpha, scale, cutoff=4096)
    c = law.series(4096).coeffs
    assert np.all(c >= -1e-15)
    for s in (0.0, 0.3, 0.7):
        assert np.polynomial.polynomial.polyval(s, c) == pytest.approx(float(law.pgf(s)), abs=1e-10)


def test_tail_power_regimes():
    assert fixed_points(TailPowerLaw(0.5, 0.5)).regime is Regime.CRITICAL
    assert fixed_points(TailPowerLaw(-0.5, 1.0)).regime is Regime.SUPERCRITICAL
    assert TailPowerLaw(-0.5, 1.0).mean == np.inf
