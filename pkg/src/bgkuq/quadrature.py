"""Gauss-Legendre quadrature on the truncated velocity interval.

The velocity domain is truncated to [-R, R] and discretized with an
Nv-point Gauss-Legendre rule.  The resulting :class:`VelocityGrid` carries
the nodes and weights and provides the discrete moment functional
``bracket(u) = sum_k u(xi_k) w_k`` used by every other module.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["VelocityGrid", "build_gauss_legendre", "bracket"]


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Immutable Gauss-Legendre rule on [-R, R].

    Nodes are strictly increasing and symmetric about 0; weights are
    positive and sum to 2R.  Safe to share across concurrent sample solves.
    ``xjw[j] = nodes**j * weights`` (j = 0..4) is precomputed once because
    moment reductions sit on the hot path of every solver stage.
    """

    r: float
    nodes: np.ndarray
    weights: np.ndarray
    xjw: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xjw = np.stack([self.nodes**j * self.weights for j in range(5)])
        for a in (self.nodes, self.weights, xjw):
            a.setflags(write=False)
        object.__setattr__(self, "xjw", xjw)

    @property
    def nv(self) -> int:
        return self.nodes.size

    def bracket(self, values: np.ndarray) -> np.ndarray:
        """Quadrature sum over the last axis (see module-level :func:`bracket`)."""
        return bracket(self, values)


def build_gauss_legendre(nv: int, r: float) -> VelocityGrid:
    """Build the Nv-point Gauss-Legendre rule on [-R, R].

    Deterministic: identical inputs give bit-identical nodes/weights.

    Raises
    ------
    ValueError
        If ``nv < 1`` or ``r <= 0``.
    """
    if not isinstance(nv, (int, np.integer)) or nv < 1:
        raise ValueError(f"node count must be a positive integer, got {nv!r}")
    if not r > 0:
        raise ValueError(f"velocity truncation half-width must be positive, got {r!r}")
    x, w = np.polynomial.legendre.leggauss(int(nv))
    # leggauss returns a symmetrized rule on [-1, 1]; scale to [-R, R]
    return VelocityGrid(r=float(r), nodes=r * x, weights=r * w)


def bracket(grid: VelocityGrid, values: np.ndarray) -> np.ndarray:
    """Discrete moment functional: sum_k values[..., k] * w_k.

    ``values`` may carry arbitrary leading batch axes; the quadrature
    contraction is always over the last axis.
    """
    values = np.asarray(values)
    if values.shape[-1] != grid.nv:
        raise ValueError(
            f"values last axis has length {values.shape[-1]}, expected {grid.nv}"
        )
    return values @ grid.weights
