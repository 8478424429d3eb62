import numpy as np
import pytest
from scipy import integrate, optimize, special

from erspin.coherence import dd, montecarlo, noise as nz, raman, sequences as sq
from erspin.coherence.noise import NoiseModel, Sinusoid

OU = NoiseModel(ou_sigma=2275.89, ou_tau=55.68)


def _y_direct(seq, w):
    edges, signs = seq.segments()
    re = sum(s * integrate.quad(lambda t: np.cos(w * t), a, b)[0] for a, b, s in zip(edges[:-1], edges[1:], signs))
    im = sum(s * integrate.quad(lambda t: np.sin(w * t), a, b)[0] for a, b, s in zip(edges[:-1], edges[1:], signs))
    return re + 1j * im


@pytest.mark.parametrize("seq", [sq.SequenceSpec.ramsey(1.0), sq.SequenceSpec.hahn(1.0), sq.SequenceSpec.xy(8, 1.0)])
@pytest.mark.parametrize("w", [0.0, 0.3, 7.0, 55.0])
def test_toggling_transform_matches_quadrature(seq, w):
    assert sq.toggling_transform(seq, w) == pytest.approx(_y_direct(seq, w), abs=1e-10)


def test_sequence_geometry():
    s = sq.SequenceSpec.xy(4, 2.0)
    np.testing.assert_allclose(s.pulse_times, [0.25, 0.75, 1.25, 1.75])
    assert s.pulse_axes == ("X", "Y", "X", "Y")
    assert sq.SequenceSpec("hahn", 1.0, 5).n_pi == 1
    with pytest.raises(ValueError):
        sq.SequenceSpec("ramsey", 1.0, 2)
    with pytest.raises(ValueError):
        sq.SequenceSpec("cpmg", 1.0, 2)
    with pytest.raises(ValueError):
        sq.SequenceSpec.xy(0, 1.0)


def test_large_frequency_weight():
    seq = sq.SequenceSpec.xy(4, 1.0)
    # every oscillating term has a period dividing 16 pi for these pulse times
    w = np.linspace(2e5, 2e5 + 16 * np.pi, 4096, endpoint=False)
    avg = np.mean(sq.filter_function(seq, w))
    assert avg == pytest.approx(sq.large_frequency_weight(seq), rel=1e-6)


@pytest.mark.parametrize("kind,n", [("ramsey", 0), ("hahn", 1), ("xy", 8)])
def test_white_noise_chi_exact(kind, n):
    noise = NoiseModel(white_floor=3.7)
    t = np.array([0.0, 0.01, 0.4])
    np.testing.assert_allclose(nz.FilterQuadrature(kind, n).chi(noise, t), 0.5 * 3.7 * t, rtol=1e-14)


@pytest.mark.parametrize("kind,n", [("ramsey", 0), ("hahn", 1), ("xy", 2), ("xy", 16)])
@pytest.mark.parametrize("tau", [1e-4, 0.01, 55.68])
def test_ou_quadrature_matches_closed_form(kind, n, tau):
    noise = NoiseModel(ou_sigma=1000.0, ou_tau=tau, white_floor=0.5)
    for t in (1e-3, 0.02, 0.3):
        seq = sq.SequenceSpec(kind, t, n)
        exact = nz.ou_chi_exact(seq, noise)
        if exact < 1e-6:
            continue
        assert nz.filter_chi(seq, noise) == pytest.approx(exact, rel=5e-4)


def test_static_offset_refocused():
    noise = NoiseModel(static_offset=1234.5)
    t = np.linspace(0, 0.1, 11)
    np.testing.assert_array_equal(nz.coherence_curve("hahn", 1, t, noise), 1.0)
    np.testing.assert_allclose(nz.coherence_curve("ramsey", 0, t, noise), np.abs(np.cos(1234.5 * t)), atol=1e-12)


def test_random_phase_tone_is_bessel():
    s = Sinusoid(150.0, 50.0)
    noise = NoiseModel(sinusoids=(s,))
    t = np.linspace(1e-3, 0.05, 15)
    w = s.omega
    y = 2 * np.sin(w * t / 2) / w                 # Ramsey |Y|
    np.testing.assert_allclose(nz.sinusoid_factors("ramsey", 0, t, noise), special.j0(150.0 * y), atol=1e-12)


def test_locked_phase_tone():
    s = Sinusoid(150.0, 50.0, phase=0.3)
    noise = NoiseModel(sinusoids=(s,))
    t = 0.013
    phi = integrate.quad(lambda x: 150 * np.cos(s.omega * x + 0.3), 0, t)[0]
    assert nz.sinusoid_factors("ramsey", 0, [t], noise)[0] == pytest.approx(np.cos(phi), abs=1e-10)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseModel(ou_tau=0)
    with pytest.raises(ValueError):
        NoiseModel(ou_sigma=-1)
    with pytest.raises(ValueError):
        Sinusoid(-1, 1)
    with pytest.raises(ValueError):
        nz.FilterQuadrature("ramsey").chi(OU, [-1.0])


def test_unresolvable_integral_raises():
    q = nz.FilterQuadrature("xy", 4, span=0.05, rtol=1e-12, atol=0)
    with pytest.raises(nz.IntegrationError):
        q.chi(NoiseModel(ou_sigma=1e3, ou_tau=1e-4), [0.1])


def test_ou_segment_law_moments():
    sigma, tau, h = 2.0, 0.3, 0.17
    a, vx, c, vi = montecarlo.ou_segment_law(h, sigma, tau)
    assert a == pytest.approx(np.exp(-h / tau))
    assert vx == pytest.approx(sigma**2 * (1 - np.exp(-2 * h / tau)))
    # Var(int x) for a stationary start minus the part explained by x0
    stationary = 2 * sigma**2 * tau**2 * (h / tau - 1 + np.exp(-h / tau))
    mean_coef = tau * (1 - np.exp(-h / tau))
    assert vi + mean_coef**2 * sigma**2 == pytest.approx(stationary, rel=1e-12)
    # series branch continuity
    lo = montecarlo.ou_segment_law(0.999e-3 * tau, sigma, tau)[3]
    hi = montecarlo.ou_segment_law(1.001e-3 * tau, sigma, tau)[3]
    assert lo == pytest.approx(hi, rel=1e-2)


def test_ou_sampler_statistics():
    seq = sq.SequenceSpec.ramsey(0.05)
    noise = NoiseModel(ou_sigma=10.0, ou_tau=0.02)
    gen = np.random.default_rng(0)
    phases = montecarlo._segment_phases(seq, noise, gen, 200000)[:, 0]
    var = 2 * 100 * 0.02**2 * (0.05 / 0.02 - 1 + np.exp(-0.05 / 0.02))
    assert phases.var() == pytest.approx(var, rel=0.02)


@pytest.mark.parametrize("kind,n", [("ramsey", 0), ("hahn", 1), ("xy", 8)])
def test_mc_matches_filter_function(kind, n):
    t = {"ramsey": 1e-3, "hahn": 0.04, "xy": 0.15}[kind]
    seq = sq.SequenceSpec(kind, t, n)
    est = montecarlo.coherence_mc(seq, OU, 20000, seed=5)
    assert est.value == pytest.approx(nz.coherence(seq, OU), abs=4 * est.stderr + 1e-3)


def test_mc_thread_invariance():
    seq = sq.SequenceSpec.xy(4, 0.1)
    a = montecarlo.coherence_mc(seq, OU, 9000, 1, threads=1, block=1000)
    b = montecarlo.coherence_mc(seq, OU, 9000, 1, threads=6, block=1000)
    assert a == b


def test_mc_constant_detuning_hahn_exact():
    noise = NoiseModel(static_offset=777.0)
    for t in (0.01, 0.033, 0.5):
        assert montecarlo.coherence_mc(sq.SequenceSpec.hahn(t), noise, 100, 0).value == 1.0


def test_pulse_area_error_bloch_path():
    seq = sq.SequenceSpec.hahn(0.01)
    zero = NoiseModel()
    assert montecarlo.coherence_mc(seq, zero, 50, 0, pulse_area_error=0.0).value == 1.0
    # one imperfect X pulse on an X-aligned Bloch vector leaves it unchanged
    assert montecarlo.coherence_mc(seq, zero, 50, 0, pulse_area_error=0.1).value == pytest.approx(1.0)
    # two pulses about different axes: cos(pi e) ** 2 type loss
    v = montecarlo.coherence_mc(sq.SequenceSpec.xy(2, 0.01), zero, 50, 0, pulse_area_error=0.1).value
    assert v < 1.0


def test_stretched_decay_measurement():
    t = np.linspace(0, 0.06, 121)
    v = np.exp(-(t / 0.015) ** 2.5)
    fit = dd.measure_decay(t, v)
    assert fit.converged
    assert fit.time == pytest.approx(0.015, rel=1e-6)
    assert fit.stretch == pytest.approx(2.5, rel=1e-6)


def test_fit_window_and_revival():
    t = np.linspace(0, 1, 201)
    v = np.abs(np.cos(np.pi * t)) * np.exp(-t / 5)
    assert dd.fit_window(v) == 101
    true_max = optimize.minimize_scalar(lambda x: -abs(np.cos(np.pi * x)) * np.exp(-x / 5),
                                        bounds=(0.8, 1.0), method="bounded").x
    assert dd.find_revival(t, v) == pytest.approx(true_max, abs=1e-3)
    v2 = np.abs(np.cos(2 * np.pi * t))
    assert dd.find_revival(t, v2) == pytest.approx(0.5, abs=1e-3)
    assert np.isnan(dd.find_revival(t, np.exp(-t)))


def test_dd_scan_pure_ou_exponent():
    scan = dd.dd_scan(NoiseModel(ou_sigma=2000.0, ou_tau=50.0))
    assert scan.exponent == pytest.approx(2 / 3, abs=0.05)
    assert all(f.converged for f in scan.fits)
    assert scan.time_at(64) == scan.fits[-1].time


def test_dd_scan_input_checks():
    with pytest.raises(ValueError):
        dd.dd_scan(OU, [])
    with pytest.raises(ValueError):
        dd.dd_scan(OU, [0, 2])
    scan = dd.dd_scan(OU, [2, 4])
    assert scan.power_law is None


def test_raman_oracles():
    cfg = raman.RamanConfig()
    assert raman.effective_rabi(cfg) == pytest.approx((2 * np.pi * 1e6) ** 2 / (2 * 2 * np.pi * 90e6))
    assert raman.pi_time(cfg) == pytest.approx(90e-6)
    assert raman.ac_stark_shift(cfg) == 0.0
    assert raman.flip_population(cfg, raman.pi_time(cfg)) == pytest.approx(0.0, abs=1e-20)
    assert raman.scattering_probability(cfg, 1.0, 1e12) == 1.0
    with pytest.raises(ValueError):
        raman.RamanConfig(one_photon_detuning=0)
    with pytest.raises(ValueError):
        raman.scattering_probability(cfg, -1.0, 1.0)


def test_raman_detuned_contrast():
    cfg = raman.RamanConfig(two_photon_detuning=5.556)   # kHz, equal to the Rabi frequency
    w = raman.effective_rabi(cfg)
    d = 2 * np.pi * 5.556e3
    t = np.pi / np.hypot(w, d)
    assert 1 - raman.flip_population(cfg, t) == pytest.approx(w**2 / (w**2 + d**2), rel=1e-12)


def test_raman_mc_envelope():
    cfg = raman.RamanConfig(pulse_area_noise_sigma=0.05)
    t = np.linspace(0, 1e-3, 41)
    data = raman.simulate_rabi(cfg, t, seed=1, n_traj=20000)
    w = raman.effective_rabi(cfg)
    expect = 0.5 * (1 + np.cos(w * t) * raman.rabi_envelope(cfg, t))
    assert np.max(np.abs(data.population - expect) / np.maximum(data.stderr, 1e-6)) < 5
    again = raman.simulate_rabi(cfg, t, seed=1, n_traj=20000, threads=4)
    np.testing.assert_array_equal(data.population, again.population)
