"""The quadratic energy form, the log-Sobolev functional and its deficit,
Euler-Lagrange residuals, conformal transformation identities, and the
entropy duality (Gibbs) inequality.

The spectral route is primary: for band-limited u, v the energy is the
exactly representable sum E[u,v] = sum_l h_l u_{l,m} v_{l,m}.  The direct
double-quadrature of the difference kernel is a cross-check path with a
chordal exclusion |xi-eta| >= eps and Richardson extrapolation in eps (the
excluded mass scales like eps^2 because the squared difference vanishes
quadratically on the diagonal).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conformal import ConformalMap, Moebius, inverse, jacobian, pullback
from .harmonics import (
    HarmonicCoeffs,
    MultiplierTable,
    analyze,
    as_evaluable,
    degree_of_index,
    flat_index,
    h_multiplier_table,
    harmonic_count,
    harmonic_indices,
    synthesize,
)
from .specfun import ln_gamma
from .sphere import GridFunction, QuadratureGrid, build_grid, sphere_area


def constant_Cn(n: int) -> float:
    """Sharp constant (4/n) pi^{n/2} / Gamma(n/2) of the log-Sobolev bound."""
    if n < 1:
        raise ValueError(f"invalid dimension n={n}")
    return (4.0 / n) * math.exp(0.5 * n * math.log(math.pi) - ln_gamma(0.5 * n))


def energy_spectral(u: HarmonicCoeffs, v: HarmonicCoeffs,
                    table: MultiplierTable | None = None) -> float:
    """E[u,v] = sum h_l u_{l,m} v_{l,m}; exact at the band limit."""
    if u.n != v.n or u.L != v.L:
        raise ValueError(
            f"coefficient shape mismatch: (n={u.n}, L={u.L}) vs (n={v.n}, L={v.L})"
        )
    if table is None:
        table = h_multiplier_table(u.n, u.L)
    ls = degree_of_index(u.n, u.L)
    # grouping u*v first makes the form exactly symmetric in its arguments
    return float(np.sum(table.values[ls] * (u.coeffs * v.coeffs)))


def min_internode_distance(grid: QuadratureGrid) -> float:
    """Smallest chordal gap between distinct nodes (closed form per grid type)."""
    if grid.n == 1:
        return 2.0 * math.sin(math.pi / grid.node_count)
    t = grid.polar_t
    nphi = grid.az_phi.size
    s = np.sqrt(1.0 - t * t)
    ring = 2.0 * s * math.sin(math.pi / nphi)
    theta = np.sort(np.arccos(t))
    polar = 2.0 * np.sin(np.diff(theta) / 2.0)
    return float(min(ring.min(), polar.min()))


def _pair_energy_sums(grid: QuadratureGrid, V: np.ndarray, eps_list, workers: int = 1,
                      chunk: int = 1024) -> np.ndarray:
    """sum_{|xi_i - xi_j| >= eps} w_i w_j (V_i - V_j)^2 / |xi_i - xi_j|^n
    for each eps and each column of V.  Deterministic chunk-ordered reduction.
    """
    nodes, w, n = grid.nodes, grid.weights, grid.n
    N = nodes.shape[0]
    V = np.atleast_2d(V.T).T  # (N, k)
    nsq = np.sum(nodes * nodes, axis=1)
    starts = list(range(0, N, chunk))

    def do_chunk(s0):
        sl = slice(s0, min(s0 + chunk, N))
        d2 = nsq[sl, None] + nsq[None, :] - 2.0 * (nodes[sl] @ nodes.T)
        np.maximum(d2, 0.0, out=d2)
        kern0 = np.maximum(d2, 1e-300) ** (-0.5 * n)
        ii = np.arange(sl.start, sl.stop)
        out = np.zeros((len(eps_list), V.shape[1]))
        for ei, eps in enumerate(eps_list):
            kern = np.where(d2 < eps * eps, 0.0, kern0)
            kern[ii - s0, ii] = 0.0
            M = kern * (w[sl, None] * w[None, :])
            rows = M.sum(axis=1)
            cols = M.sum(axis=0)
            MV = M @ V
            out[ei] = (
                (V[sl] ** 2 * rows[:, None]).sum(axis=0)
                + (cols[:, None] * V**2).sum(axis=0)
                - 2.0 * (V[sl] * MV).sum(axis=0)
            )
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(do_chunk, starts))
    else:
        partials = [do_chunk(s0) for s0 in starts]
    return np.sum(np.array(partials), axis=0)


def energy_direct(u: GridFunction, v: GridFunction, eps: float, workers: int = 1) -> float:
    """Double quadrature of E[u,v] over pairs with |xi-eta| >= eps."""
    grid = u.grid
    if v.grid is not grid:
        raise ValueError("grid mismatch: both functions must live on one grid")
    if eps < 2.0 * min_internode_distance(grid):
        raise ValueError(
            f"eps={eps} below twice the minimum internode distance; "
            "the near-diagonal sum would be unresolved"
        )
    if u is v or u.values is v.values:
        s = _pair_energy_sums(grid, u.values[:, None], [eps], workers)[0, 0]
        return 0.5 * s
    # polarization: 4 E[u,v] = E[u+v,u+v] - E[u-v,u-v]
    V = np.column_stack([u.values + v.values, u.values - v.values])
    s = _pair_energy_sums(grid, V, [eps], workers)[0]
    return 0.5 * (s[0] - s[1]) / 4.0


def default_energy_eps(grid: QuadratureGrid) -> float:
    """Twice the mean node spacing; safe for the pair-sum resolution."""
    if grid.n == 1:
        return 2.0 * (2.0 * math.pi / grid.node_count)
    return 2.0 * math.pi / (grid.degree + 1)


def energy_direct_extrapolated(u: GridFunction, v: GridFunction,
                               eps: float | None = None, workers: int = 1) -> float:
    """Richardson extrapolation over (eps, 2 eps) of the cutoff quadrature;
    both cutoffs are evaluated in one pass over the pair kernel."""
    grid = u.grid
    if v.grid is not grid:
        raise ValueError("grid mismatch: both functions must live on one grid")
    if eps is None:
        eps = default_energy_eps(grid)
    if eps < 2.0 * min_internode_distance(grid):
        raise ValueError(f"eps={eps} below twice the minimum internode distance")
    if u is v or u.values is v.values:
        s = _pair_energy_sums(grid, u.values[:, None], [eps, 2.0 * eps], workers)[:, 0]
        e1, e2 = 0.5 * s[0], 0.5 * s[1]
    else:
        V = np.column_stack([u.values + v.values, u.values - v.values])
        s = _pair_energy_sums(grid, V, [eps, 2.0 * eps], workers)
        e1 = 0.5 * (s[0, 0] - s[0, 1]) / 4.0
        e2 = 0.5 * (s[1, 0] - s[1, 1]) / 4.0
    return (4.0 * e1 - e2) / 3.0


def energy_direct_extrapolated_many(grid: QuadratureGrid, values: np.ndarray,
                                    eps: float | None = None,
                                    workers: int = 1) -> np.ndarray:
    """Extrapolated quadratic-form energies for several functions at once
    (columns of `values`); a single pass over the pair kernel serves all."""
    if eps is None:
        eps = default_energy_eps(grid)
    if eps < 2.0 * min_internode_distance(grid):
        raise ValueError(f"eps={eps} below twice the minimum internode distance")
    s = _pair_energy_sums(grid, values, [eps, 2.0 * eps], workers)
    return 0.5 * (4.0 * s[0] - s[1]) / 3.0


def beckner_rhs(u: GridFunction) -> float:
    """C_n int u^2 ln(u^2 |S^n| / ||u||^2), with 0 ln 0 := 0."""
    grid = u.grid
    vals = u.values
    usq = vals * vals
    norm_sq = float(np.sum(grid.weights * usq))
    if norm_sq <= 0.0:
        raise ValueError("the zero function has no entropy term")
    area = sphere_area(grid.n)
    logs = np.where(usq > 0.0, np.log(np.maximum(usq, 1e-300)), 0.0)
    entropy = float(np.sum(grid.weights * usq * logs))
    entropy += norm_sq * math.log(area / norm_sq)
    return constant_Cn(grid.n) * entropy


@dataclass
class DeficitReport:
    energy_term: float
    entropy_term: float
    deficit: float
    n: int
    L: int
    grid_degree: int
    eps: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "energy_term": self.energy_term,
            "entropy_term": self.entropy_term,
            "deficit": self.deficit,
            "n": self.n,
            "L": self.L,
            "grid_degree": self.grid_degree,
            "eps": self.eps,
        }


def default_entropy_grid(n: int, L: int) -> QuadratureGrid:
    """Grid exact to degree 4L, enough to suppress aliasing in u^2 ln u^2."""
    return build_grid(n, max(2 * L, 4))


def beckner_deficit(u: HarmonicCoeffs, grid: QuadratureGrid | None = None) -> DeficitReport:
    """Deficit 2 E[u,u] - C_n int u^2 ln(u^2 |S^n|/||u||^2); nonnegative,
    and zero exactly on the conformal orbit of constants."""
    if not np.any(u.coeffs):
        raise ValueError("the zero function has no deficit")
    if grid is None:
        grid = default_entropy_grid(u.n, u.L)
    energy_term = 2.0 * energy_spectral(u, u)
    entropy_term = beckner_rhs(synthesize(u, grid))
    return DeficitReport(
        energy_term=energy_term,
        entropy_term=entropy_term,
        deficit=energy_term - entropy_term,
        n=u.n,
        L=u.L,
        grid_degree=grid.degree,
    )


@dataclass
class ELResidual:
    """Weak-equation residuals r_{l,m} = E[Y_{l,m}, u] - C_n int Y_{l,m} u ln u
    against test harmonics of degree <= L_test."""

    n: int
    L: int
    L_test: int
    grid_degree: int
    residuals: np.ndarray
    floored: bool
    floor: float
    max_abs: float = field(init=False)

    def __post_init__(self):
        self.residuals = np.asarray(self.residuals, dtype=float)
        self.max_abs = float(np.abs(self.residuals).max())

    def get(self, l: int, m: int) -> float:
        return float(self.residuals[flat_index(self.n, l, m)])

    def to_json_dict(self) -> dict:
        trip = [
            [l, m, float(self.residuals[flat_index(self.n, l, m)])]
            for (l, m) in harmonic_indices(self.n, self.L_test)
        ]
        return {
            "n": self.n,
            "L": self.L,
            "L_test": self.L_test,
            "grid_degree": self.grid_degree,
            "floored": self.floored,
            "floor": self.floor,
            "max_abs": self.max_abs,
            "residuals": trip,
        }


def el_residual(u: HarmonicCoeffs, L_test: int, grid: QuadratureGrid | None = None,
                floor: float = 1e-12, allow_floor: bool = True) -> ELResidual:
    if L_test > u.L:
        raise ValueError(f"L_test={L_test} exceeds the band limit L={u.L}")
    if grid is None:
        grid = default_entropy_grid(u.n, u.L)
    vals = synthesize(u, grid).values
    if np.any(vals < floor):
        if not allow_floor:
            raise ValueError("synthesized u is not positive at all nodes")
        floored = True
    else:
        floored = False
    logs = np.log(np.maximum(vals, floor))
    rhs = analyze(GridFunction(grid, vals * logs), L_test)
    table = h_multiplier_table(u.n, L_test)
    ls = degree_of_index(u.n, L_test)
    count = harmonic_count(u.n, L_test)
    res = table.values[ls] * u.coeffs[:count] - constant_Cn(u.n) * rhs.coeffs
    return ELResidual(
        n=u.n, L=u.L, L_test=L_test, grid_degree=grid.degree,
        residuals=res, floored=floored, floor=floor,
    )


# ---------------------------------------------------------------------------
# conformal transformation identities as numerical residuals

def _projection_grid(n: int, L_work: int) -> QuadratureGrid:
    return build_grid(n, L_work)


def verify_conf_E(u: HarmonicCoeffs, v: HarmonicCoeffs, phi: ConformalMap,
                  L_work: int = 32, grid: QuadratureGrid | None = None) -> float:
    """Residual |E[u_phi, v_phi] - (E[u,v] + C_n int u v ln J_{phi^{-1}}^{-1/2})|.

    Pullbacks are re-projected to the working band limit before the spectral
    energy; the tolerance owns the truncation error.
    """
    if not isinstance(phi, Moebius):
        raise ValueError("the identity check projects pullbacks spectrally; "
                         "use a globally smooth Moebius map")
    if u.n != v.n:
        raise ValueError("dimension mismatch between u and v")
    if grid is None:
        grid = _projection_grid(u.n, L_work)
    u_pb = analyze(grid.sample(pullback(as_evaluable(u), phi)), L_work)
    v_pb = analyze(grid.sample(pullback(as_evaluable(v), phi)), L_work)
    _check_projection_tail(u_pb)
    lhs = energy_spectral(u_pb, v_pb)
    uv = synthesize(u, grid).values * synthesize(v, grid).values
    log_jinv = np.log(jacobian(inverse(phi), grid.nodes))
    correction = constant_Cn(u.n) * float(np.sum(grid.weights * uv * (-0.5) * log_jinv))
    rhs = energy_spectral(u, v) + correction
    return abs(lhs - rhs)


def verify_conf_H(u: HarmonicCoeffs, phi: ConformalMap, L_work: int = 32,
                  grid: QuadratureGrid | None = None) -> float:
    """Max node residual of H(u_phi) = (Hu)_phi + C_n u_phi ln J_phi^{1/2}."""
    if not isinstance(phi, Moebius):
        raise ValueError("the identity check projects pullbacks spectrally; "
                         "use a globally smooth Moebius map")
    if grid is None:
        grid = _projection_grid(u.n, L_work)
    from .harmonics import apply_H  # local import avoids a cycle at module load

    u_pb_vals = grid.sample(pullback(as_evaluable(u), phi))
    c_pb = analyze(u_pb_vals, L_work)
    _check_projection_tail(c_pb)
    lhs = synthesize(apply_H(c_pb), grid).values
    hu_pb = pullback(as_evaluable(apply_H(u)), phi)(grid.nodes)
    log_j = 0.5 * np.log(jacobian(phi, grid.nodes))
    rhs = hu_pb + constant_Cn(u.n) * u_pb_vals.values * log_j
    return float(np.abs(lhs - rhs).max())


def _check_projection_tail(c: HarmonicCoeffs, fraction: float = 1e-3):
    """Reject pullbacks whose top degrees still carry visible energy."""
    ls = degree_of_index(c.n, c.L)
    tail = float(np.sum(c.coeffs[ls >= c.L - 1] ** 2))
    total = c.norm_sq()
    if total > 0.0 and tail > fraction * total:
        raise ValueError(
            "pullback projection overflow: map parameter too extreme for the "
            f"working band limit L={c.L} (top-degree energy fraction {tail/total:.2e})"
        )


def gibbs_gap(f: GridFunction, g: GridFunction) -> float:
    """Gap int f ln f + ln int e^g - int f g >= 0 for densities f."""
    grid = f.grid
    if g.grid is not grid:
        raise ValueError("grid mismatch between density and exponent")
    fv, gv = f.values, g.values
    if np.any(fv < 0.0):
        raise ValueError("density must be nonnegative")
    mass = float(np.sum(grid.weights * fv))
    if abs(mass - 1.0) > 1e-10:
        raise ValueError(f"density must integrate to 1, got {mass}")
    flogf = float(np.sum(grid.weights * np.where(fv > 0.0, fv * np.log(np.maximum(fv, 1e-300)), 0.0)))
    gmax = float(gv.max())
    log_int_eg = gmax + math.log(float(np.sum(grid.weights * np.exp(gv - gmax))))
    fg = float(np.sum(grid.weights * fv * gv))
    return flogf + log_int_eg - fg
