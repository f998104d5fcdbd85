"""Offline plotting for the solver harness's CSV outputs.

Consumes only the documented records.csv / compare.csv column contract; it
has no access to solver internals, and rendering never modifies its inputs.
"""

from .io import TableError, read_table
from .plots import SeriesSpec, plot_compare, plot_series, plot_trajectory

__version__ = "0.1.0"
