from fractions import Fraction

import numpy as np
import pytest

from erspin.levels import (ALL_PROJECTIONS, LOWEST, LevelSchemeError, SpinProjection, build_level_scheme,
                           list_transitions, synth_spectrum)


def _energy(a, q, m):
    # independent oracle: E(m) = a m + q (m**2 - I(I+1)/3), exact in fractions
    m = Fraction(m)
    return a * m + q * (m * m - Fraction(21, 4))


def test_spin_projection_roundtrip():
    for i, m in enumerate(ALL_PROJECTIONS):
        assert m.index == i
        assert SpinProjection.from_index(i) == m
        assert SpinProjection.from_m(str(m)) == m
    assert str(LOWEST) == "-7/2"
    with pytest.raises(ValueError):
        SpinProjection.from_m("1/3")
    with pytest.raises(ValueError):
        SpinProjection(9)


def test_energies_match_exact_formula():
    s = build_level_scheme(870, 950, 5, 2)
    for m in ALL_PROJECTIONS:
        fm = Fraction(m.twice_m_I, 2)
        assert s.ground_energy[m] == pytest.approx(float(_energy(870, 5, fm)), abs=1e-9)
        assert s.excited_energy[m] == pytest.approx(float(_energy(950, 2, fm)), abs=1e-9)


def test_transition_count_and_brute_force_frequencies():
    s = build_level_scheme()
    table = list_transitions(s)
    assert len(table) == 22
    assert [len(table.by_delta(d)) for d in (0, 1, -1)] == [8, 7, 7]
    ref = _energy(950, 2, Fraction(-7, 2)) - _energy(870, 5, Fraction(-7, 2))
    for t in table:
        g, e = Fraction(t.ground_m.twice_m_I, 2), Fraction(t.excited_m.twice_m_I, 2)
        assert abs(g - e) <= 1
        assert t.frequency_offset == pytest.approx(float(_energy(950, 2, e) - _energy(870, 5, g) - ref), abs=1e-9)


def test_preserving_lines_increase_and_max_gap():
    s = build_level_scheme()
    assert np.all(np.diff(s.preserving_offsets()) > 0)
    assert s.max_ground_gap() == pytest.approx(900.0)
    assert s.preserving_offsets()[0] == 0.0


def test_decreasing_lines_rejected():
    with pytest.raises(LevelSchemeError):
        build_level_scheme(870, 800, 5, 2)


def test_degenerate_requires_flag():
    with pytest.raises(LevelSchemeError):
        build_level_scheme(0, 0, 0, 0)
    s = build_level_scheme(0, 0, 0, 0, allow_degenerate=True)
    assert np.all(s.preserving_offsets() == 0)


def test_nonfinite_coefficient_rejected():
    with pytest.raises(LevelSchemeError):
        build_level_scheme(np.nan)


def test_synth_spectrum_peaks_at_assigned_lines():
    table = list_transitions(build_level_scheme())
    spec = synth_spectrum(table, [1.0] * 8, background=0.36, step=1.0)
    f = np.array([x[0] for x in spec])
    y = np.array([x[1] for x in spec])
    assert y.min() >= 0.36 - 1e-12
    lines = build_level_scheme().preserving_offsets()
    for off in lines:
        k = int(np.argmin(np.abs(f - off)))
        expected = 0.36 + np.sum(1 / (1 + (2 * (f[k] - lines) / 2.0) ** 2))
        assert y[k] == pytest.approx(expected, rel=1e-12)
