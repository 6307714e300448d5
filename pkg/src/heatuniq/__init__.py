"""Numerics for uniqueness classes of the heat equation.

Log-domain scalars, growth-function classification, the proof schedule,
a heat-kernel convolution solver with a finite-difference cross-check,
space-time integral estimators and the spiked counterexample.
"""

__version__ = "0.1.0"

from .logscalar import LogScalar  # noqa: E402,F401
