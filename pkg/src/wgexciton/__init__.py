"""Nuclear excitons in planar x-ray waveguides.

Modules: ``layered_medium`` (stacks and optical constants), ``mode_solver``
(resonant modes), ``dynamics`` (exciton equation of motion), ``observables``
(hyperfine, divergence, counts), ``inference`` (Poisson MLE) and ``cli``.
"""

__version__ = "0.1.0"

from . import constants  # noqa: E402
