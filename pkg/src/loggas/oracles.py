"""Brute-force reference computations for the test suite.

Everything here is deliberately independent of the main code paths it checks:
quadrature instead of kernel matrices, penalty methods instead of exact
projections, cell counting instead of closed forms.  The `loggas oracle` CLI
subcommand runs these and caches the outputs as JSON.
"""

import numpy as np

from .energy import get_kernel
from .equilibrium import project_simplex
from .errors import LogGasError


def unit_square_log_energy(panels=24, order=12):
    """Mean of log|z - w| over (unit square)^2 by panel Gauss-Legendre
    quadrature of 2 * iint (1-u)(1-v) log(u^2 + v^2) du dv (difference
    coordinates); the integrable singularity at the origin is handled by
    grading panels toward it."""
    edges = (np.linspace(0, 1, panels + 1)) ** 2  # graded toward 0
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * wg)
    u = np.concatenate(nodes)
    wu = np.concatenate(weights)
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu)
    integrand = (1.0 - U) * (1.0 - V) * np.log(U**2 + V**2)
    return float(2.0 * (W * integrand).sum())


def interval_log_energy(length):
    """Continuous log-energy of the uniform measure on an interval:
    log(length) - 3/2 (the unit-interval value is the classical -3/2)."""
    return float(np.log(length) - 1.5)


def disk_log_energy():
    """Log-energy of the uniform unit disk: int (|z|^2 - 1)/2 dmu = -1/4."""
    return -0.25


def semicircle_grid_measure(grid):
    """Analytic semicircle density sqrt(4 - x^2)/(2 pi) discretized on a grid."""
    from .measures import measure_from_density

    def dens(pts):
        x = np.asarray(pts)[:, 0]
        return np.sqrt(np.maximum(4.0 - x**2, 0.0)) / (2.0 * np.pi)

    return measure_from_density(grid, dens)


def semicircle_quadrature_constants(m=4000):
    """Quadrature check of the classical semicircle facts used as anchors:
    second moment 1, log-energy -1/4, potential term int x^2/2 = 1/2, and the
    resulting minimum value 1/2 + 1/4 = 3/4 of the beta = 2 functional."""
    xg, wg = np.polynomial.legendre.leggauss(m)
    x = 2.0 * xg
    w = 2.0 * wg * np.sqrt(np.maximum(4.0 - x**2, 0.0)) / (2.0 * np.pi)
    w /= w.sum()
    pot = float((0.5 * x**2) @ w)
    # inner integral of log|x - y| against the semicircle has the closed form
    # x^2/4 - 1/2 on the support; integrate it once more as the energy check
    inner = x**2 / 4.0 - 0.5
    sigma = float(inner @ w)
    return {
        "potential_term": pot,
        "sigma": sigma,
        "c_beta": pot - sigma,
        "el_constant": 0.5,
    }


def two_point_crowding_probs(intervals, beta=2.0, v_coeff=0.5, half_width=8.0,
                             order=160):
    """Exact-to-quadrature P(X = k), k = 0, 1, 2, for the two-point ensemble
    with density |x - y|^beta exp(-2 (V(x) + V(y))), V = v_coeff x^2.

    The integration panels are split at the region endpoints so the region
    indicator never cuts through a panel; the integrand is then smooth per
    panel and Gauss-Legendre converges spectrally.
    """
    cuts = {-half_width, half_width}
    for lo, hi in intervals:
        for c in (lo, hi):
            if -half_width < c < half_width:
                cuts.add(float(c))
    cuts = sorted(cuts)
    xg, wg = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        xs.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * wg)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    fx = np.exp(-2.0 * v_coeff * x**2)
    pair = np.abs(x[:, None] - x[None, :]) ** beta
    mass = (w * fx)[:, None] * (w * fx)[None, :] * pair
    z = mass.sum()
    in_u = np.zeros(x.size, dtype=bool)
    for lo, hi in intervals:
        in_u |= (x > lo) & (x < hi)
    p2 = float(mass[np.ix_(in_u, in_u)].sum() / z)
    p0 = float(mass[np.ix_(~in_u, ~in_u)].sum() / z)
    return {0: p0, 1: 1.0 - p0 - p2, 2: p2}


def two_point_gap_histogram(bins, beta=2.0, v_coeff=0.5, half_width=8.0,
                            order=400):
    """Distribution of |x - y| for the two-point ensemble, binned."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    x = half_width * xg
    w = half_width * wg
    fx = np.exp(-2.0 * v_coeff * x**2)
    gap = np.abs(x[:, None] - x[None, :])
    mass = (w * fx)[:, None] * (w * fx)[None, :] * gap**beta
    mass /= mass.sum()
    hist = np.zeros(len(bins) - 1)
    which = np.digitize(gap.ravel(), bins) - 1
    m = mass.ravel()
    good = (which >= 0) & (which < len(hist))
    np.add.at(hist, which[good], m[good])
    return hist


def one_point_second_moment(v_coeff=0.5, half_width=10.0, order=400):
    """int x^2 e^{-V} / int e^{-V} for the single-particle density."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    x = half_width * xg
    w = half_width * wg
    f = np.exp(-v_coeff * x**2)
    return float((w * f * x**2).sum() / (w * f).sum())


def penalty_constrained_minimum(potential, beta, grid, region, x,
                                rhos=(1e2, 1e3, 1e4, 1e5, 1e6),
                                max_iter=40_000):
    """Quadratic-penalty solve of the crowding-constrained minimization.

    Minimizes F(w) + rho (mu(U) - x)^2 over the whole simplex with a
    continuation schedule in rho; independent of the exact two-block
    projection used by the main solver.  Returns the achieved F value
    (penalty excluded) and the final constraint violation.
    """
    v = np.asarray(potential(grid.nodes), dtype=float)
    kernel = get_kernel(grid)
    inside = region.contains(grid.nodes).astype(float)
    w = np.full(grid.size, 1.0 / grid.size)

    def fval(w):
        Aw = kernel.matvec(w)
        return float(v @ w - 0.5 * beta * (w @ Aw)), Aw

    for rho in rhos:
        fw, Aw = fval(w)
        viol = float(inside @ w - x)
        fpen = fw + rho * viol**2
        step = 1.0 / (1.0 + rho)
        for _ in range(max_iter):
            g = v - beta * Aw + 2.0 * rho * viol * inside
            gap = float(g @ w - g.min())
            if gap <= 1e-9:
                break
            step = min(step * 2.0, 1e6)
            improved = False
            while step >= 1e-18:
                w_new = project_simplex(w - step * g)
                f_new, Aw_new = fval(w_new)
                viol_new = float(inside @ w_new - x)
                fpen_new = f_new + rho * viol_new**2
                if fpen_new <= fpen + 1e-4 * float(g @ (w_new - w)):
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            w, fw, Aw, viol, fpen = w_new, f_new, Aw_new, viol_new, fpen_new
    return {"objective": fw, "violation": viol}


def count_cells_region_mass(region, resolution, lo, hi):
    """Fraction of a fine cell-center lattice inside the region (area proxy for
    the uniform measure on the box [lo, hi]^2)."""
    lox, loy = lo
    hix, hiy = hi
    hx = (hix - lox) / resolution
    hy = (hiy - loy) / resolution
    xs = lox + (np.arange(resolution) + 0.5) * hx
    ys = loy + (np.arange(resolution) + 0.5) * hy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return float(region.contains(pts).sum()) / resolution**2


def cdf_inversion_column_cuts(density, corner, side, targets, samples=1_000_000):
    """High-resolution independent check of vertical cut positions: midpoint
    quadrature of the x-marginal on `samples` cells, then linear inversion."""
    x0, y0 = corner
    mx = int(np.sqrt(samples))
    my = mx
    xs = x0 + side * (np.arange(mx) + 0.5) / mx
    ys = y0 + side * (np.arange(my) + 0.5) / my
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = density(X, Y)
    marg = vals.sum(axis=1)
    cdf = np.concatenate([[0.0], np.cumsum(marg)])
    cdf /= cdf[-1]
    edges = x0 + side * np.arange(mx + 1) / mx
    cuts = []
    for t in targets:
        j = int(np.searchsorted(cdf, t) - 1)
        j = min(max(j, 0), mx - 1)
        frac = (t - cdf[j]) / max(cdf[j + 1] - cdf[j], 1e-300)
        cuts.append(float(edges[j] + frac * (edges[j + 1] - edges[j])))
    return cuts


def wasserstein1_1d(mu_a, mu_b):
    """Exact 1D W1 between two grid measures: integral of |CDF_a - CDF_b|."""
    if mu_a.dimension != 1 or mu_b.dimension != 1:
        raise LogGasError("dimension", "1D oracle")
    xa = mu_a.grid.nodes[:, 0]
    xb = mu_b.grid.nodes[:, 0]
    xs = np.concatenate([xa, xb])
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    jumps = np.concatenate([mu_a.weights, -mu_b.weights])[order]
    cdf_diff = np.cumsum(jumps)
    return float(np.sum(np.abs(cdf_diff[:-1]) * np.diff(xs)))


def run_all(out_path=None):
    """Compute the cacheable oracle values (CLI `oracle` subcommand)."""
    import json

    values = {
        "unit_square_log_energy": unit_square_log_energy(),
        "interval_log_energy_length_4": interval_log_energy(4.0),
        "disk_log_energy": disk_log_energy(),
        "semicircle": semicircle_quadrature_constants(),
        "two_point_halfline": two_point_crowding_probs([(0.0, np.inf)]),
        "two_point_center_interval": two_point_crowding_probs([(-0.5, 0.5)]),
        "one_point_second_moment": one_point_second_moment(),
    }
    if out_path is not None:
        with open(out_path, "w") as fh:
            json.dump(values, fh, indent=2)
    return values
