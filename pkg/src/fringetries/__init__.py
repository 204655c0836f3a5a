"""Random tries and patricia tries: fringe trees, additive functionals and their asymptotics."""

__version__ = "0.1.0"
