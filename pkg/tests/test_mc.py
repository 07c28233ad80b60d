import json
import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from branchkit import ExplicitLaw, LinearFractionalLaw, dual_law, fixed_points
from branchkit.errors import DomainError
from branchkit.evolve import mean, scalar_F, series_F
from branchkit.mc import (
    AliasTable,
    SimConfig,
    extinction_conditioned_sample,
    histogram_chisquare,
    offspring_sampler,
    simulate,
)

SUPER = ExplicitLaw([0.2, 0.3, 0.5])


def test_alias_table_frequencies(rng):
    p = np.array([0.1, 0.0, 0.45, 0.05, 0.4])
    draws = AliasTable(p).sample(rng, 200_000)
    freq = np.bincount(draws, minlength=p.size) / draws.size
    np.testing.assert_allclose(freq, p, atol=4 * np.sqrt(0.25 / draws.size))
    assert freq[1] == 0.0


def test_lf_sampler_distribution(rng):
    law = LinearFractionalLaw(0.25, 0.5)
    draws = offspring_sampler(law).sample(rng, 200_000)
    counts = np.bincount(draws)
    assert histogram_chisquare(counts, law.series(40).coeffs) > 1e-3


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(SUPER, 1.0, 0, 1)
    with pytest.raises(DomainError):
        SimConfig(SUPER, -1.0, 10, 1)
    with pytest.raises(DomainError):
        SimConfig(SUPER, 1.0, 10, 1, population_cap=0)


def test_zero_horizon():
    st = simulate(SimConfig(SUPER, 0.0, 1000, 3))
    assert st.histogram == [0.0, 1.0]
    assert st.survival == 1.0


def test_seed_determinism():
    cfg = SimConfig(SUPER, 1.0, 10_000, 42)
    a, b = simulate(cfg), simulate(cfg)
    assert a.to_json(include_samples=True) == b.to_json(include_samples=True)
    c = simulate(SimConfig(SUPER, 1.0, 10_000, 43))
    assert c.histogram != a.histogram


def test_thread_count_does_not_change_output(monkeypatch):
    cfg = SimConfig(SUPER, 1.0, 3 * 4096 + 17, 5)
    monkeypatch.setenv("BRANCHKIT_THREADS", "1")
    a = simulate(cfg)
    monkeypatch.setenv("BRANCHKIT_THREADS", "4")
    b = simulate(cfg)
    assert a.histogram == b.histogram and a.w_samples == b.w_samples


def test_json_fields():
    st = simulate(SimConfig(SUPER, 0.5, 500, 1))
    d = json.loads(st.to_json())
    assert d["seed"] == 1 and d["replicates"] == 500
    assert "w_samples" not in d
    assert sum(d["histogram"]) == pytest.approx(1.0, abs=1e-12)


def test_extinction_probability_at_one():
    n = 100_000
    st = simulate(SimConfig(SUPER, 1.0, n, 11))
    p = scalar_F(1.0, 0.0, SUPER).value
    assert abs(st.histogram[0] - p) < 3 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize(
    "law,t", [(SUPER, 1.5), (LinearFractionalLaw(0.75, 0.5), 2.0), (LinearFractionalLaw(0.5, 0.5), 3.0)]
)
def test_histogram_matches_series(law, t):
    st = simulate(SimConfig(law, t, 50_000, 7))
    probs = series_F(t, 256, law).value
    assert histogram_chisquare(st.counts, probs) > 1e-3


@pytest.mark.parametrize("law", [SUPER, LinearFractionalLaw(0.75, 0.5), LinearFractionalLaw(0.5, 0.5)])
def test_mean_and_martingale(law):
    t = 2.0
    st = simulate(SimConfig(law, t, 50_000, 9))
    z = (st.mean - mean(t, law)) / math.sqrt(st.variance / st.replicates)
    assert abs(z) < 4
    w = np.asarray(st.w_samples)
    assert abs(w.mean() - 1) < 4 * w.std(ddof=1) / math.sqrt(w.size)


def test_semigroup_restart(rng):
    # run to t directly, or to t/2 and restart every survivor's family for t/2
    law, t, n = SUPER, 1.0, 20_000
    direct = simulate(SimConfig(law, t, n, 101)).counts
    half = simulate(SimConfig(law, t / 2, n, 102))
    z_half = np.repeat(np.arange(len(half.histogram)), half.counts)
    total = int(z_half.sum())
    kids = np.asarray(simulate(SimConfig(law, t / 2, total, 103)).w_samples) * mean(t / 2, law)
    kids = np.rint(kids).astype(np.int64)
    owner = np.repeat(np.arange(z_half.size), z_half)
    two_step = np.bincount(np.bincount(owner, weights=kids, minlength=z_half.size).astype(np.int64))
    k = max(direct.size, two_step.size)
    table = np.zeros((2, k))
    table[0, : direct.size] = direct
    table[1, : two_step.size] = two_step
    # pool the sparse tail and run a homogeneity test
    keep = table.sum(axis=0) >= 10
    pooled = np.column_stack([table[:, keep], table[:, ~keep].sum(axis=1)])
    pooled = pooled[:, pooled.sum(axis=0) > 0]
    assert chi2_contingency(pooled).pvalue > 1e-3


def test_population_cap_censoring():
    with pytest.warns(UserWarning):
        st = simulate(SimConfig(ExplicitLaw([0.0, 0.0, 1.0]), 3.0, 200, 1, population_cap=5))
    assert st.censored > 2
    assert sum(st.histogram) == pytest.approx(1.0)
    assert max(np.nonzero(st.histogram)[0]) < 5
    assert st.status.startswith("warning")


def test_extinction_frequency_is_q():
    n = 100_000
    st = extinction_conditioned_sample(SimConfig(SUPER, 0.0, n, 17, t_max=40.0))
    q = fixed_points(SUPER).q
    assert abs(st.extinction_frequency - q) < 3 * math.sqrt(q * (1 - q) / n)
    assert st.ambiguous < 1e-3 * n


def test_extinction_histogram_matches_dual():
    t = 5.0
    st = extinction_conditioned_sample(SimConfig(SUPER, t, 100_000, 23))
    probs = series_F(t, 64, dual_law(SUPER)).value
    n_ext = round(st.extinction_frequency * st.replicates)
    counts = np.rint(np.asarray(st.extinction_histogram) * n_ext)
    assert histogram_chisquare(counts, probs) > 1e-3


def test_extinction_needs_zero_mass():
    with pytest.raises(DomainError):
        extinction_conditioned_sample(SimConfig(ExplicitLaw([0.0, 0.5, 0.5]), 1.0, 10, 1))


def test_chisquare_detects_mismatch(rng):
    draws = rng.poisson(2.0, 20_000)
    p_wrong = np.exp(-2.2) * 2.2 ** np.arange(30) / np.array([math.factorial(k) for k in range(30)])
    assert histogram_chisquare(np.bincount(draws), p_wrong) < 1e-3
