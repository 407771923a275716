"""Equilibrium measures and the crowding rate function gamma.

Everything here minimizes the convex discrete functional

    F(w) = sum_i w_i V(x_i) - (beta/2) * w^T A w

(A the log-kernel matrix with exact self-cell diagonal) over the probability
simplex, or over the product of two scaled simplexes {mass x inside U,
1 - x outside} for the crowding-constrained problem.  The method is projected
gradient descent with Armijo backtracking; descent is monotone by
construction and the first-order optimality certificate

    gap(w) = sum_blocks [ <g, w>_b - m_b * min_{i in b} g_i ]  >=  F(w) - F*

doubles as a duality-gap bound, so a converged run certifies global
optimality within the reported gap.  The Euler-Lagrange conditions are the
KKT conditions of this program: with phi = V/beta + p_mu, phi = C on the
support and phi >= C off it.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import get_kernel
from .errors import LogGasError
from .geometry import boundary_clearance
from .measures import GridMeasure

ARMIJO_C1 = 1e-4
STEP_MAX = 1e8
STEP_MIN = 1e-18
DEFAULT_MAX_ITER = 50_000
DEFAULT_GAP_TOL = 1e-8
DEFAULT_STALL_GAP = 1e-4  # largest certificate accepted at a numeric stall
SUPPORT_THRESHOLD_FACTOR = 1e-8
BOUNDARY_WEIGHT_LIMIT = 1e-6


def project_simplex(v, mass=1.0):
    """Euclidean projection onto {u >= 0, sum u = mass} (sort-and-threshold)."""
    if mass <= 0.0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    cs = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (mass - cs) / j > 0)[0][-1]
    tau = (cs[rho] - mass) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


@dataclass
class EquilibriumSolution:
    measure: GridMeasure
    c_beta: float  # achieved minimum of F
    el_constant: float
    support_mask: np.ndarray
    iterations: int
    el_residual: float
    gap: float
    beta: float
    constraint: tuple | None = None  # (region, x) for constrained solves


@dataclass
class RateProfile:
    xs: list
    gammas: list
    minimizers: list | None
    diagnostics: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("x,gamma,iterations,el_residual,converged\n")
            for x, g, d in zip(self.xs, self.gammas, self.diagnostics):
                fh.write(
                    f"{x!r},{g!r},{d['iterations']},"
                    f"{d['el_residual']!r},{int(d['converged'])}\n"
                )

    def max_midpoint_convexity_violation(self):
        """max over interior triples of g(mid) - (g(lo)+g(hi))/2 for
        equispaced xs; nonpositive values mean the profile is convex."""
        g = self.gammas
        worst = -np.inf
        for i in range(1, len(g) - 1):
            worst = max(worst, g[i] - 0.5 * (g[i - 1] + g[i + 1]))
        return worst


def _blocks_projection(w, blocks):
    out = np.zeros_like(w)
    for idx, mass in blocks:
        out[idx] = project_simplex(w[idx], mass)
    return out


def _certificate(g, w, blocks):
    gap = 0.0
    for idx, mass in blocks:
        if mass <= 0.0 or idx.size == 0:
            continue
        gap += float(g[idx] @ w[idx] - mass * g[idx].min())
    return gap


def _minimize(v, beta, kernel, blocks, w0, max_iter, gap_tol, stall_gap):
    """Projected gradient descent with Armijo backtracking on F."""

    def fval(w, Aw=None):
        if Aw is None:
            Aw = kernel.matvec(w)
        return float(v @ w - 0.5 * beta * (w @ Aw)), Aw

    w = _blocks_projection(w0, blocks)
    fw, Aw = fval(w)
    step = 1.0
    gap = np.inf
    converged = False
    no_progress = 0
    it = 0
    for it in range(1, max_iter + 1):
        g = v - beta * Aw
        gap = _certificate(g, w, blocks)
        if gap <= gap_tol:
            converged = True
            break
        step = min(step * 2.0, STEP_MAX)
        stalled = False
        while True:
            w_new = _blocks_projection(w - step * g, blocks)
            d = w_new - w
            gd = float(g @ d)
            f_new, Aw_new = fval(w_new)
            if f_new <= fw + ARMIJO_C1 * gd and gd < 0.0:
                break
            if step < STEP_MIN:
                stalled = True
                break
            step *= 0.5
        if stalled:
            converged = gap <= stall_gap
            break
        if fw - f_new <= 1e-15 * max(1.0, abs(fw)):
            no_progress += 1
            if no_progress >= 50:
                converged = gap <= stall_gap
                break
        else:
            no_progress = 0
        # monotone descent is part of the contract
        assert f_new <= fw + 1e-12 * max(1.0, abs(fw))
        w, fw, Aw = w_new, f_new, Aw_new
    g = v - beta * kernel.matvec(w)
    gap = _certificate(g, w, blocks)
    if gap <= max(gap_tol, stall_gap):
        converged = True
    return w, fw, g, gap, it, converged


def _el_summary(w, g, beta, blocks):
    """Support mask, weighted EL constant, residual in phi = g/beta units."""
    phi = g / beta
    thresh = SUPPORT_THRESHOLD_FACTOR * w.max()
    supp = w > thresh
    if not supp.any():
        raise LogGasError("degenerate", "empty support")
    residual = 0.0
    constants = []
    for idx, mass in blocks:
        if mass <= 0.0 or idx.size == 0:
            continue
        s = supp[idx]
        if not s.any():
            continue
        wi = w[idx][s]
        ci = float((wi * phi[idx][s]).sum() / wi.sum())
        constants.append((ci, float(mass)))
        residual = max(residual, float(np.abs(phi[idx][s] - ci).max()))
        off = ~s
        if off.any():
            residual = max(residual, float(max(0.0, -(phi[idx][off] - ci).min())))
    el_constant = sum(c * m for c, m in constants) / sum(m for _, m in constants)
    return supp, float(el_constant), residual, phi


def _prepare(potential, beta, grid, backend):
    if beta <= 0:
        raise LogGasError("parameter", "beta must be positive")
    v = np.asarray(potential.validate_on_grid(grid, beta), dtype=float)
    kernel = get_kernel(grid, backend)
    return v, kernel


def _boundary_mask(grid):
    mask = np.zeros(grid.size, dtype=bool)
    if grid.dimension == 1:
        mask[0] = mask[-1] = True
        return mask
    nx, ny = grid.resolution
    idx = np.arange(grid.size)
    ix, iy = idx // ny, idx % ny
    return (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)


def solve_equilibrium(potential, beta, grid, w0=None, max_iter=DEFAULT_MAX_ITER,
                      gap_tol=DEFAULT_GAP_TOL, stall_gap=DEFAULT_STALL_GAP,
                      backend="auto"):
    """Global minimizer of F over the simplex and the constant c_beta = F(w*)."""
    v, kernel = _prepare(potential, beta, grid, backend)
    blocks = [(np.arange(grid.size), 1.0)]
    if w0 is None:
        w0 = np.full(grid.size, 1.0 / grid.size)
    w, fw, g, gap, it, converged = _minimize(
        v, beta, kernel, blocks, w0, max_iter, gap_tol, stall_gap
    )
    supp, el_c, residual, _ = _el_summary(w, g, beta, blocks)
    sol = EquilibriumSolution(
        measure=GridMeasure(grid, w / w.sum()),
        c_beta=fw,
        el_constant=el_c,
        support_mask=supp,
        iterations=it,
        el_residual=residual,
        gap=gap,
        beta=beta,
    )
    if not converged:
        raise LogGasError("maxiter", f"no convergence in {it} iterations", payload=sol)
    edge = _boundary_mask(grid)
    if w[edge].max(initial=0.0) >= BOUNDARY_WEIGHT_LIMIT:
        raise LogGasError(
            "domain-too-small",
            "equilibrium mass reaches the grid boundary; enlarge the domain",
            payload=sol,
        )
    return sol


def solve_constrained(potential, beta, grid, region, x, w0=None,
                      max_iter=DEFAULT_MAX_ITER, gap_tol=DEFAULT_GAP_TOL,
                      stall_gap=DEFAULT_STALL_GAP, backend="auto"):
    """Minimizer of F subject to mu(U) = x, by exact two-block projection."""
    if not (0.0 <= x <= 1.0):
        raise LogGasError("parameter", "constraint level x must be in [0, 1]")
    if grid.dimension != region.dimension:
        raise LogGasError("dimension", "grid and region dimensions differ")
    v, kernel = _prepare(potential, beta, grid, backend)
    if boundary_clearance(grid, region) < 1e-9 * max(grid.spacing):
        raise LogGasError(
            "grid", "a cell center lies on the region boundary; offset the grid"
        )
    inside = region.contains(grid.nodes)
    idx_in = np.nonzero(inside)[0]
    idx_out = np.nonzero(~inside)[0]
    if idx_in.size == 0 and x > 0:
        raise LogGasError("parameter", "region holds no grid mass but x > 0")
    if idx_out.size == 0 and x < 1:
        raise LogGasError("parameter", "region covers the grid but x < 1")
    blocks = [(idx_in, float(x)), (idx_out, float(1.0 - x))]
    if w0 is None:
        w0 = np.full(grid.size, 1.0 / grid.size)
    w, fw, g, gap, it, converged = _minimize(
        v, beta, kernel, blocks, w0, max_iter, gap_tol, stall_gap
    )
    supp, el_c, residual, _ = _el_summary(w, g, beta, blocks)
    sol = EquilibriumSolution(
        measure=GridMeasure(grid, w / w.sum()),
        c_beta=fw,
        el_constant=el_c,
        support_mask=supp,
        iterations=it,
        el_residual=residual,
        gap=gap,
        beta=beta,
        constraint=(region, float(x)),
    )
    if not converged:
        raise LogGasError("maxiter", f"no convergence in {it} iterations", payload=sol)
    return sol


@dataclass
class EulerLagrangeReport:
    constant: float
    on_support_deviation: float
    off_support_violation: float  # min over off-support of phi - C (per block)
    tol: float
    passed: bool


def verify_euler_lagrange(sol, potential, beta, tol):
    """Check phi = V/beta + p_mu against the constant-on-support conditions."""
    grid = sol.measure.grid
    v = np.asarray(potential(grid.nodes), dtype=float)
    kernel = get_kernel(grid)
    w = sol.measure.weights
    phi = v / beta - kernel.matvec(w)
    supp = sol.support_mask
    if not supp.any():
        raise LogGasError("degenerate", "empty support")
    if sol.constraint is None:
        blocks = [np.arange(grid.size)]
    else:
        region, _ = sol.constraint
        inside = region.contains(grid.nodes)
        blocks = [np.nonzero(inside)[0], np.nonzero(~inside)[0]]
    on_dev = 0.0
    off_min = np.inf
    consts = []
    for idx in blocks:
        s = supp[idx]
        if not s.any():
            continue
        wi = w[idx][s]
        c = float((wi * phi[idx][s]).sum() / wi.sum())
        consts.append(c)
        on_dev = max(on_dev, float(np.abs(phi[idx][s] - c).max()))
        if (~s).any():
            off_min = min(off_min, float((phi[idx][~s] - c).min()))
    if off_min is np.inf:
        off_min = 0.0
    passed = on_dev <= tol and off_min >= -tol
    return EulerLagrangeReport(
        constant=consts[0] if len(consts) == 1 else float(np.mean(consts)),
        on_support_deviation=on_dev,
        off_support_violation=float(off_min),
        tol=tol,
        passed=passed,
    )


@dataclass
class ObstacleReport:
    max_relative_error: float
    density_bound: float  # C2 = sup_S laplacian(V/beta)/(2 pi) + tol
    density_bound_ok: bool
    eroded_nodes: int
    tol: float
    passed: bool


def obstacle_identity_check(sol, potential, beta, tol, erosion=3):
    """Compare the solved density with laplacian(V/beta)/(2 pi) on the eroded
    support (the obstacle-problem identity for smooth confinement)."""
    from scipy.ndimage import binary_erosion

    grid = sol.measure.grid
    if grid.dimension != 2:
        raise LogGasError("dimension", "obstacle identity is a 2D statement")
    lap = np.asarray(potential.laplacian(grid.nodes), dtype=float) / beta
    target = lap / (2.0 * np.pi)
    density = sol.measure.weights / grid.cell_volume
    nx, ny = grid.resolution
    supp2d = sol.support_mask.reshape(nx, ny)
    eroded = binary_erosion(supp2d, iterations=erosion).ravel()
    if not eroded.any():
        raise LogGasError("degenerate", "support vanished under erosion")
    t = target[eroded]
    if np.any(t <= 0):
        raise LogGasError("potential", "nonpositive laplacian on the support")
    rel = float(np.max(np.abs(density[eroded] - t) / t))
    c2 = float(target[sol.support_mask].max() + tol)
    ok_bound = bool(density.max() <= c2)
    return ObstacleReport(
        max_relative_error=rel,
        density_bound=c2,
        density_bound_ok=ok_bound,
        eroded_nodes=int(eroded.sum()),
        tol=tol,
        passed=(rel <= tol) and ok_bound,
    )


def gamma_profile(potential, beta, grid, region, xs, mode="serial-warm",
                  threads=1, keep_minimizers=False, base=None, **solver_kw):
    """gamma(x) = min_{mu(U) = x} F(mu) - c_beta over the given levels.

    Serial mode warm-starts each solve from its left neighbor (rescaled per
    block); parallel mode cold-starts every solve from the renormalized
    restriction of the unconstrained minimizer.  Per-x solver failures land in
    the diagnostics and never abort the sweep.
    """
    xs = [float(x) for x in xs]
    if any(not 0.0 <= x <= 1.0 for x in xs) or sorted(xs) != xs:
        raise LogGasError("parameter", "xs must be sorted and within [0, 1]")
    if base is None:
        base = solve_equilibrium(potential, beta, grid, **solver_kw)
    inside = region.contains(grid.nodes)

    def cold_start(x):
        w = base.measure.weights.copy()
        m_in = w[inside].sum()
        w[inside] *= x / m_in if m_in > 0 else 0.0
        if m_in == 0 and x > 0:
            w[inside] = x / max(inside.sum(), 1)
        m_out = w[~inside].sum()
        w[~inside] *= (1.0 - x) / m_out if m_out > 0 else 0.0
        if m_out == 0 and x < 1:
            w[~inside] = (1.0 - x) / max((~inside).sum(), 1)
        return w

    def solve_one(x, w0):
        try:
            sol = solve_constrained(
                potential, beta, grid, region, x, w0=w0, **solver_kw
            )
            return sol, None
        except LogGasError as err:
            return (err.payload if err.payload is not None else None), err

    results = [None] * len(xs)
    if mode == "parallel-cold" and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda x: solve_one(x, cold_start(x)), xs))
    elif mode == "parallel-cold":
        results = [solve_one(x, cold_start(x)) for x in xs]
    elif mode == "serial-warm":
        prev = None
        for i, x in enumerate(xs):
            w0 = cold_start(x) if prev is None else _rescale_blocks(
                prev.measure.weights, inside, x
            )
            results[i] = solve_one(x, w0)
            if results[i][0] is not None:
                prev = results[i][0]
    else:
        raise LogGasError("config", f"unknown sweep mode {mode!r}")

    gammas, diags, minimizers = [], [], []
    for (sol, err), x in zip(results, xs):
        if sol is None:
            gammas.append(float("nan"))
            diags.append(
                {"iterations": 0, "el_residual": float("nan"),
                 "converged": False, "error": err.code if err else None}
            )
            minimizers.append(None)
            continue
        gammas.append(sol.c_beta - base.c_beta)
        diags.append(
            {
                "iterations": sol.iterations,
                "el_residual": sol.el_residual,
                "converged": err is None,
                "error": err.code if err else None,
            }
        )
        minimizers.append(sol.measure if keep_minimizers else None)
    return RateProfile(
        xs=xs,
        gammas=gammas,
        minimizers=minimizers if keep_minimizers else None,
        diagnostics=diags,
    )


def _rescale_blocks(w, inside, x):
    out = w.copy()
    m_in = out[inside].sum()
    if m_in > 0:
        out[inside] *= x / m_in
    elif x > 0:
        out[inside] = x / max(int(inside.sum()), 1)
    m_out = out[~inside].sum()
    if m_out > 0:
        out[~inside] *= (1.0 - x) / m_out
    elif x < 1:
        out[~inside] = (1.0 - x) / max(int((~inside).sum()), 1)
    return out
