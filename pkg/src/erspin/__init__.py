"""Cavity-enhanced readout, control and dephasing of an Er-167 nuclear-spin qubit."""
__version__ = "0.1.0"
