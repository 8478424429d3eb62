"""Raman control and qubit dephasing under classical frequency noise."""
from .dd import DDScan, DecayFit, TimeGrid, dd_scan, hahn_revival, hahn_time, measure_decay, ramsey_time
from .montecarlo import MCEstimate, coherence_mc, coherence_mc_curve
from .noise import (FilterQuadrature, IntegrationError, NoiseModel, Sinusoid, coherence, coherence_curve,
                    filter_chi, ou_chi_exact)
from .raman import RamanConfig, ac_stark_shift, effective_rabi, scattering_probability, simulate_rabi
from .sequences import HAHN, RAMSEY, XY, SequenceSpec, filter_function

__all__ = [
    "DDScan", "DecayFit", "TimeGrid", "dd_scan", "hahn_revival", "hahn_time", "measure_decay", "ramsey_time",
    "MCEstimate", "coherence_mc", "coherence_mc_curve",
    "FilterQuadrature", "IntegrationError", "NoiseModel", "Sinusoid", "coherence", "coherence_curve",
    "filter_chi", "ou_chi_exact",
    "RamanConfig", "ac_stark_shift", "effective_rabi", "scattering_probability", "simulate_rabi",
    "HAHN", "RAMSEY", "XY", "SequenceSpec", "filter_function",
]
