import numpy as np
import pytest
from scipy import stats

from erspin import readout


def bright_oracle(cfg, size):
    """Signal = Binomial(min(X, G), eta): X ~ Binomial(n, p_exc) excitations, flip on excitation G ~ Geom(eps)."""
    n, p, eps, eta = cfg.n_pulses, cfg.excitation_prob, cfg.flip_prob, cfg.detection_prob
    e = np.arange(n + 1)
    px = stats.binom.pmf(e, n, p)
    sx = stats.binom.sf(e, n, p)                    # P(X > e)
    g_ge = np.where(e == 0, 1.0, (1 - eps) ** np.maximum(e - 1, 0))
    g_eq = np.where(e == 0, 0.0, eps * (1 - eps) ** np.maximum(e - 1, 0))
    pe = px * g_ge + sx * g_eq
    sig = np.zeros(size)
    for k, w in zip(e, pe):
        m = min(k, size - 1)
        sig[: m + 1] += w * stats.binom.pmf(np.arange(m + 1), k, eta)
    pois = stats.poisson.pmf(np.arange(size), cfg.dark_mean)
    return np.convolve(sig, pois)[:size]


@pytest.mark.parametrize("n,p,eps", [(110, 0.818169, 0.0039746), (20, 0.5, 0.3), (7, 1.0, 0.0)])
def test_bright_distribution_matches_oracle(n, p, eps):
    cfg = readout.ReadoutConfig(n_pulses=n, excitation_prob=p, flip_prob=eps)
    b, d = readout.analytic_distributions(cfg)
    np.testing.assert_allclose(b, bright_oracle(cfg, b.size), atol=1e-13)
    assert b.sum() == pytest.approx(1.0, abs=1e-12)
    assert readout.mean_of(b) == pytest.approx(readout.bright_mean(cfg), rel=1e-10)


def test_dark_distribution_with_leakage():
    cfg = readout.ReadoutConfig(leakage_prob=0.002)
    _, d = readout.analytic_distributions(cfg)
    expect = np.convolve(stats.binom.pmf(np.arange(d.size), 110, 0.002),
                         stats.poisson.pmf(np.arange(d.size), cfg.dark_mean))[: d.size]
    np.testing.assert_allclose(d, expect, atol=1e-14)
    assert readout.mean_of(d) == pytest.approx(readout.dark_state_mean(cfg), rel=1e-10)


def test_fidelity_definition():
    b = np.array([0.0, 0.1, 0.9])
    d = np.array([0.7, 0.2, 0.1])
    fmin, favg = readout.fidelity(b, d, 2)
    assert fmin == pytest.approx(0.9)
    assert favg == pytest.approx(0.9)
    assert readout.fidelity(b, d, 1) == pytest.approx((0.7, 0.85))


def test_monte_carlo_matches_analytic():
    cfg = readout.ReadoutConfig()
    b, _ = readout.analytic_distributions(cfg)
    x = readout.simulate_shots(readout.BRIGHT, cfg, 40000, seed=7)
    assert x.mean() == pytest.approx(readout.mean_of(b), abs=5 * x.std() / np.sqrt(x.size))
    h = readout.Histogram.from_samples(x)
    chi2, pval = stats.chisquare(*_pooled(h.probabilities(b.size) * x.size, b * x.size))
    assert pval > 1e-4


def _pooled(obs, exp, floor=5.0):
    o, e, acc_o, acc_e = [], [], 0.0, 0.0
    for a, c in zip(obs, exp):
        acc_o, acc_e = acc_o + a, acc_e + c
        if acc_e >= floor:
            o.append(acc_o)
            e.append(acc_e)
            acc_o = acc_e = 0.0
    o[-1] += acc_o
    e[-1] += acc_e
    e = np.array(e) * sum(o) / sum(e)
    return np.array(o), e


def test_shots_deterministic_across_threads():
    cfg = readout.ReadoutConfig()
    a = readout.simulate_shots(readout.BRIGHT, cfg, 10000, seed=3, threads=1, block=1000)
    b = readout.simulate_shots(readout.BRIGHT, cfg, 10000, seed=3, threads=4, block=1000)
    np.testing.assert_array_equal(a, b)
    c = readout.simulate_shots(readout.BRIGHT, cfg, 10000, seed=4, block=1000)
    assert not np.array_equal(a, c)


def test_optimize_tie_breaking():
    cfg = readout.ReadoutConfig()
    fm = readout.optimize(cfg, [100, 110, 120], [4, 5, 6])
    assert (fm.best_pulses, fm.best_threshold) == (110, 5)
    assert fm.at(110, 5)[0] == pytest.approx(fm.best)
    assert len(list(fm.rows())) == 9
    with pytest.raises(ValueError):
        readout.optimize(cfg, [], [5])


def test_histogram_merge():
    h = readout.Histogram.from_samples([0, 1, 1, 3]).merge(readout.Histogram.from_samples([1, 5]))
    assert h.n_shots == 6
    assert h.counts == {0: 1, 1: 3, 3: 1, 5: 1}
    assert h.mean() == pytest.approx(11 / 6)


def test_invalid_config():
    with pytest.raises(ValueError):
        readout.ReadoutConfig(excitation_prob=1.5)
    with pytest.raises(ValueError):
        readout.ReadoutConfig(n_pulses=0)
    with pytest.raises(ValueError):
        readout.analytic_distributions(readout.ReadoutConfig(detection_window_us=0))
    with pytest.raises(ValueError):
        readout.simulate_shots("grey", readout.ReadoutConfig(), 10)
    with pytest.raises(ValueError):
        readout.Histogram.from_samples([1, -2])


def test_discriminator_learns_threshold():
    cfg = readout.ReadoutConfig()
    xb = readout.simulate_shots(readout.BRIGHT, cfg, 20000, seed=1)
    xd = readout.simulate_shots(readout.DARK, cfg, 20000, seed=1)
    X = np.concatenate([xb, xd])
    y = np.r_[np.ones(xb.size), np.zeros(xd.size)]
    clf = readout.ThresholdDiscriminator().fit(X, y)
    assert clf.threshold_ == 5
    assert clf.min_fidelity_ == pytest.approx(0.9096, abs=0.01)
    assert clf.fidelity(X, y) == pytest.approx((clf.min_fidelity_, clf.avg_fidelity_))
    assert set(clf.predict([0, 4, 5, 30])) == {0, 1}
    assert clf.score(X, y) == pytest.approx(clf.avg_fidelity_, abs=1e-3)


def test_discriminator_partial_fit_equals_fit():
    cfg = readout.ReadoutConfig()
    X = np.concatenate([readout.simulate_shots(s, cfg, 6000, seed=2) for s in (readout.BRIGHT, readout.DARK)])
    y = np.r_[np.ones(6000), np.zeros(6000)]
    order = np.random.default_rng(0).permutation(X.size)
    X, y = X[order], y[order]
    full = readout.ThresholdDiscriminator().fit(X, y)
    part = readout.ThresholdDiscriminator()
    for chunk in np.array_split(np.arange(X.size), 5):
        part.partial_fit(X[chunk], y[chunk])
    assert part.threshold_ == full.threshold_
    assert part.min_fidelity_ == full.min_fidelity_
    refit = part.fit(X[:100], y[:100])
    assert refit.bright_hist_.n_shots + refit.dark_hist_.n_shots == 100


def test_discriminator_requires_both_classes():
    with pytest.raises(ValueError):
        readout.ThresholdDiscriminator().fit([1, 2, 3], [1, 1, 1])
    with pytest.raises(ValueError):
        readout.ThresholdDiscriminator().fit([1, 2], [0, 2])
