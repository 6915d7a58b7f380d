"""Simulation and fitting tools for a four-photon exchange circuit.

Modules: ``fock`` (truncated operator algebra), ``circuit`` (static
Hamiltonian), ``rwa`` (rotating-frame model and dispersive shifts),
``lindblad`` (master equation and adjoint reductions), ``spectroscopy``
(reflection and flux curvatures), ``filters`` (transfer matrices),
``estimation`` (fits) and ``cli``.
"""
from .errors import (ClosureError, LabelingError, NoStopbandError, NumericalError, QuartetError,
                     ValidationError)
from .io import VERSION as __version__

__all__ = ["QuartetError", "ValidationError", "NumericalError", "LabelingError",
           "ClosureError", "NoStopbandError", "__version__"]
