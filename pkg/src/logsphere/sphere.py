"""Geometry of the unit n-sphere in R^{n+1}: points, quadrature, integration.

Grids exist for n = 1 (uniform circle rule) and n = 2 (Gauss-Legendre in the
polar cosine times a uniform azimuth rule); closed-form quantities such as
surface areas work for every n >= 1.  A grid built with parameter `degree`
integrates all spherical polynomials of degree <= 2*degree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import ln_gamma


def sphere_area(n: int) -> float:
    """Surface measure of S^n, equal to 2 pi^{(n+1)/2} / Gamma((n+1)/2)."""
    if n < 1:
        raise ValueError(f"invalid sphere dimension n={n}")
    return 2.0 * math.exp(0.5 * (n + 1) * math.log(math.pi) - ln_gamma(0.5 * (n + 1)))


def sphere_point(coords) -> np.ndarray:
    """Normalize coords onto the unit sphere (absorbs floating-point drift)."""
    v = np.asarray(coords, dtype=float)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(r < 1e-12):
        raise ValueError("cannot normalize a (near-)zero vector onto the sphere")
    return v / r


def chordal_distance(xi, eta) -> float | np.ndarray:
    """Euclidean distance in the ambient space; ranges over [0, 2]."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if xi.shape[-1] != eta.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {xi.shape[-1]} vs {eta.shape[-1]} coordinates"
        )
    return np.linalg.norm(xi - eta, axis=-1)


@dataclass(eq=False)
class QuadratureGrid:
    """Nodes and surface-measure weights on S^n.

    For n = 2 the grid is a product rule and keeps its polar/azimuth factor
    structure so that harmonic transforms can run separably.  Instances are
    immutable by convention and hash by identity, which lets transform
    caches key on the grid object.
    """

    n: int
    degree: int
    nodes: np.ndarray  # (N, n+1), unit rows
    weights: np.ndarray  # (N,), positive, summing to |S^n|
    polar_t: np.ndarray | None = field(default=None, repr=False)
    polar_w: np.ndarray | None = field(default=None, repr=False)
    az_phi: np.ndarray | None = field(default=None, repr=False)
    thetas: np.ndarray | None = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def exact_to(self) -> int:
        """Largest spherical-polynomial degree integrated exactly."""
        return 2 * self.degree

    def function(self, values) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=float))

    def sample(self, f) -> "GridFunction":
        """Sample a callable pts -> values at the grid nodes."""
        return GridFunction(self, np.asarray(f(self.nodes), dtype=float))


@dataclass(eq=False)
class GridFunction:
    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.node_count,):
            raise ValueError(
                f"values length {self.values.shape} does not match "
                f"node count {self.grid.node_count}"
            )


def build_grid(n: int, degree: int) -> QuadratureGrid:
    """Quadrature rule on S^n exact for spherical polynomials <= 2*degree.

    n = 1: 2*(degree+1) equally weighted, half-step-offset circle nodes.
    n = 2: (degree+1) Gauss-Legendre polar nodes x (2*degree+1) uniform
    azimuth nodes.  The offsets keep nodes away from the poles and from the
    coordinate axes, so conformal-map poles never coincide with nodes.
    """
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if n == 1:
        count = 2 * (degree + 1)
        # phase keeps nodes off the coordinate semi-axes for every count, so
        # the stereographic pole (0, -1) is never a node
        thetas = 2.0 * math.pi * (np.arange(count) + 0.618033988749895) / count
        nodes = np.column_stack([np.cos(thetas), np.sin(thetas)])
        weights = np.full(count, 2.0 * math.pi / count)
        return QuadratureGrid(1, degree, nodes, weights, thetas=thetas)
    if n == 2:
        t, wt = np.polynomial.legendre.leggauss(degree + 1)
        m = 2 * degree + 1
        phi = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        s = np.sqrt(1.0 - t * t)
        # outer index polar, inner azimuth
        x = np.outer(s, np.cos(phi)).ravel()
        y = np.outer(s, np.sin(phi)).ravel()
        z = np.outer(t, np.ones(m)).ravel()
        nodes = np.column_stack([x, y, z])
        weights = np.outer(wt, np.full(m, 2.0 * math.pi / m)).ravel()
        return QuadratureGrid(2, degree, nodes, weights, polar_t=t, polar_w=wt, az_phi=phi)
    raise ValueError(f"grids are implemented only for n in {{1, 2}}, got n={n}")


def integrate(grid: QuadratureGrid, f: GridFunction) -> float:
    """Sum of w_i f(xi_i); pairwise summation keeps the reduction deterministic."""
    if f.grid is not grid:
        raise ValueError("grid mismatch: function does not live on this grid")
    return float(np.sum(grid.weights * f.values))


def inner_product(grid: QuadratureGrid, f: GridFunction, g: GridFunction) -> float:
    if f.grid is not grid or g.grid is not grid:
        raise ValueError("grid mismatch in inner product")
    return float(np.sum(grid.weights * f.values * g.values))


def north_pole(n: int) -> np.ndarray:
    e = np.zeros(n + 1)
    e[n] = 1.0
    return e


def south_pole(n: int) -> np.ndarray:
    return -north_pole(n)
