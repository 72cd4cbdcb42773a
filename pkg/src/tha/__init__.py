"""Twisted multi-parameter harmonic analysis on periodic grids.

Submodules:
  grid      periodic grids, fields, transforms, norms, serialization
  kernels   twisted Poisson kernel, extensions, spectral derivatives
  geometry  continuous and dyadic tubes, covering sums
  operators maximal functions, area functions, inequality sweeps
  cli       scenario runner and test-function suites
"""

__version__ = "0.1.0"
