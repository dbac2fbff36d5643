"""Numerical workbench for division and Bezout problems on planar compacta.

The pieces compose in dependency order:

  expr      symbolic complex expressions with Wirtinger calculus
  domains   compact sets rasterized to node-classified grid masks
  cauchy    Pompeiu transform and finite-difference dbar checks
  bezout    two independent Bezout solvers (polynomial fit, covering)
  corona    Koszul correction pipelines with unit and power targets
  division  quotient certificates, optimal-power probes, multi-division
  faa       higher-order chain rule with exact coefficients
  geometry  interior path-length probes and Taylor remainder fits
  cli       INI-driven experiment runner (`dbarkit` entry point)

Import the submodules for the full surface; the names re-exported here
cover the common build-something-quickly path.
"""

from .cauchy import dbar_fd, pompeiu, sample_field
from .domains import Disk, build_mask
from .expr import S, Z, conj, evaluate, parse_expr, wirtinger_d, wirtinger_dbar

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Z", "S", "conj", "evaluate", "parse_expr", "wirtinger_d",
    "wirtinger_dbar",
    "Disk", "build_mask",
    "sample_field", "pompeiu", "dbar_fd",
]
