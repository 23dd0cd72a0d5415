"""Reference laws used by the validation suites, the tests and the demos."""

from __future__ import annotations

from .model import DiscreteTable, IidScaledUniform, LogNormalWeights, PoissonGW

__all__ = ["CATALOG", "catalog", "degenerate", "two_point"]


def degenerate():
    """Two children of weight 1/2 each: ``W_1 = 1`` almost surely."""
    return DiscreteTable([(1.0, [0.5, 0.5])])


def two_point():
    """Two children of weight 3/4 or one child of weight 1/2, equally likely."""
    return DiscreteTable([(0.5, [0.75, 0.75]), (0.5, [0.5])])


def catalog():
    """Name -> law for the nondegenerate reference laws."""
    return {
        "uniform": IidScaledUniform(2),
        "lognormal": LogNormalWeights(),
        "poisson": PoissonGW(2.0),
        "two_point": two_point(),
    }


CATALOG = tuple(catalog())
