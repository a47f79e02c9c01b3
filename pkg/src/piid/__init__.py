"""Finite-sample confidence intervals for partially identified parameters.

The interval endpoints are the min and max of an objective over parameters
constrained jointly with a confidence set S for unknown population means.
Bilinear terms are handled by piecewise McCormick relaxations (outer
bounds) and by fixing the means that multiply parameters on a random grid
(inner bounds).
"""

__version__ = "0.1.0"
