"""Mass-lumped P1 finite elements for Gross-Pitaevskii ground states."""

__version__ = "0.1.0"
