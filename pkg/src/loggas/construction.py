"""Deterministic equal-mass point construction on a square.

Given a probability density g on a square D with 1/C <= g <= C, build n
points whose empirical measure converges weakly to the density and whose
pairwise separation is at least 1/(2 sqrt(C n)).

Perfect-square case (n = m^2): D is cut into m vertical columns of mass 1/m,
each column into m boxes of mass 1/n; the points are the diagonal
intersections (geometric centers) of the boxes, listed in dictionary order
(columns left to right, boxes bottom to top).

General case (n = m^2 + k, 1 <= k <= 2m): m columns of mass 1/sqrt(n), each
with m boxes of mass 1/n; the leftover region (a strip along the right and
top sides of D) is traversed from the right-bottom corner to the left-top
corner and cut into k consecutive pieces of mass 1/n.  The extra points sit
on the right or top side of D, each splitting its piece into two equal-mass
halves along the traversal.  Where a piece spans the corner, the traversal
order decides which side carries the point.

All masses are evaluated against a piecewise-bilinear surrogate of g on a
fine lattice, for which every rectangle mass is exact; cut positions are
found by bisection on the (monotone) cumulative marginals.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import LogGasError
from .measures import Grid, GridMeasure, bl_distance, empirical_from_sample

_BISECT_ITERS = 64
_MASS_ATOL = 1e-10


class _PiecewiseLinear:
    """Nonnegative piecewise-linear function with exact integration and
    bisection inversion of the cumulative integral."""

    def __init__(self, knots, values):
        self.knots = knots
        self.values = values
        seg = 0.5 * (values[1:] + values[:-1]) * np.diff(knots)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    def cumulative(self, t):
        t = float(np.clip(t, self.knots[0], self.knots[-1]))
        j = int(np.searchsorted(self.knots, t, side="right") - 1)
        j = min(max(j, 0), len(self.knots) - 2)
        t0, t1 = self.knots[j], self.knots[j + 1]
        v0, v1 = self.values[j], self.values[j + 1]
        if t1 == t0:
            return float(self.cum[j])
        s = (t - t0) / (t1 - t0)
        vt = v0 + s * (v1 - v0)
        return float(self.cum[j] + 0.5 * (v0 + vt) * (t - t0))

    @property
    def total(self):
        return float(self.cum[-1])

    def mass(self, a, b):
        return self.cumulative(b) - self.cumulative(a)

    def invert(self, target, lo=None):
        """Smallest t with cumulative(t) - cumulative(lo) = target."""
        lo = self.knots[0] if lo is None else lo
        base = self.cumulative(lo)
        goal = base + target
        a, b = lo, float(self.knots[-1])
        if goal > self.total + _MASS_ATOL:
            raise LogGasError("density", "target mass exceeds available mass")
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (a + b)
            if self.cumulative(mid) < goal:
                a = mid
            else:
                b = mid
        t = 0.5 * (a + b)
        if abs(self.cumulative(t) - goal) > _MASS_ATOL:
            raise LogGasError("density", "cut bisection failed to converge")
        return t


class SquareDensity:
    """Probability density on an axis-aligned square, bounded between 1/C and C.

    The callable density is sampled on a (lattice+1)^2 grid and replaced by
    its piecewise-bilinear interpolant; the interpolant is renormalized to
    unit mass, validated against the declared bounds, and every mass below is
    exact for the interpolant.
    """

    def __init__(self, corner, side, density, C, lattice=1024, bound_tol=1e-6):
        if side <= 0:
            raise LogGasError("parameter", "square side must be positive")
        if C < 1:
            raise LogGasError("parameter", "density bound C must be >= 1")
        self.corner = (float(corner[0]), float(corner[1]))
        self.side = float(side)
        self.C = float(C)
        self.density = density
        x0, y0 = self.corner
        self.xs = x0 + side * np.arange(lattice + 1) / lattice
        self.ys = y0 + side * np.arange(lattice + 1) / lattice
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        try:
            vals = np.asarray(density(X, Y), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise LogGasError("density", f"density evaluation failed: {exc}")
        if vals.shape != X.shape or not np.all(np.isfinite(vals)):
            raise LogGasError("density", "density must return finite values")
        if vals.min() < 1.0 / C - bound_tol or vals.max() > C + bound_tol:
            raise LogGasError(
                "density",
                f"density leaves [1/C, C]: range [{vals.min()}, {vals.max()}]",
            )
        # trapezoid total == exact integral of the bilinear interpolant
        cell = (side / lattice) ** 2
        corners = vals[:-1, :-1] + vals[1:, :-1] + vals[:-1, 1:] + vals[1:, 1:]
        total = float(corners.sum() * cell / 4.0)
        if abs(total - 1.0) > 1e-6:
            raise LogGasError("density", f"density mass {total} not within 1e-6 of 1")
        self.values = vals / total

    def marginal_over_y(self, y_lo, y_hi):
        """lambda(x) = int_{y_lo}^{y_hi} g(x, y) dy as a piecewise-linear
        function on the x lattice (exact for the bilinear interpolant)."""
        w = _partial_trapezoid_weights(self.ys, y_lo, y_hi)
        return _PiecewiseLinear(self.xs, self.values @ w)

    def marginal_over_x(self, x_lo, x_hi):
        w = _partial_trapezoid_weights(self.xs, x_lo, x_hi)
        return _PiecewiseLinear(self.ys, w @ self.values)

    def rect_mass(self, x_lo, x_hi, y_lo, y_hi):
        return self.marginal_over_y(y_lo, y_hi).mass(x_lo, x_hi)

    def to_grid_measure(self, resolution):
        """Discretize onto a cell-center grid over the square."""
        x0, y0 = self.corner
        grid = Grid((x0, y0), (x0 + self.side, y0 + self.side), resolution)
        edges_x = x0 + self.side * np.arange(resolution + 1) / resolution
        edges_y = y0 + self.side * np.arange(resolution + 1) / resolution
        w = np.empty((resolution, resolution))
        for i in range(resolution):
            lam = self.marginal_over_x(edges_x[i], edges_x[i + 1])
            cums = np.array([lam.cumulative(e) for e in edges_y])
            w[i] = np.diff(cums)
        w = w.ravel()
        return GridMeasure(grid, w / w.sum())


def _partial_trapezoid_weights(knots, lo, hi):
    """Weights q such that q . values = int_lo^hi of the piecewise-linear
    function with the given knot values (exact)."""
    if not (knots[0] - 1e-12 <= lo <= hi <= knots[-1] + 1e-12):
        raise LogGasError("parameter", "integration range outside the square")
    q = np.zeros_like(knots)
    for j in range(len(knots) - 1):
        a, b = knots[j], knots[j + 1]
        s, t = max(lo, a), min(hi, b)
        if t <= s:
            continue
        hseg = b - a
        # integral of linear interp over [s, t]: exact midpoint of weights
        fa = 1.0 - (0.5 * (s + t) - a) / hseg
        q[j] += (t - s) * fa
        q[j + 1] += (t - s) * (1.0 - fa)
    return q


@dataclass
class ConstructedPoints:
    points: np.ndarray  # (n, 2), dictionary order
    cells: list  # per-point cell descriptors (dicts)
    case_tag: str  # "perfect-square" | "general"
    n: int
    density_C: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("index,x,y\n")
            for i, (x, y) in enumerate(self.points):
                fh.write(f"{i},{float(x)!r},{float(y)!r}\n")

    def cells_to_json(self, path=None):
        text = json.dumps(self.cells)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def construct_points(nu, n):
    """Build the n-point equal-mass configuration for the density nu."""
    if n < 1:
        raise LogGasError("parameter", "n must be >= 1")
    m = int(np.sqrt(n))
    while (m + 1) * (m + 1) <= n:
        m += 1
    while m * m > n:
        m -= 1
    k = n - m * m
    if k == 0:
        points, cells = _construct_perfect_square(nu, m)
        tag = "perfect-square"
    else:
        points, cells = _construct_general(nu, m, k)
        tag = "general"
    return ConstructedPoints(
        points=np.asarray(points), cells=cells, case_tag=tag, n=n, density_C=nu.C
    )


def _column_cuts(nu, count, column_mass):
    """x cuts with nu([x_{i-1}, x_i] x [full height]) = column_mass each."""
    x0, y0 = nu.corner
    lam = nu.marginal_over_y(y0, y0 + nu.side)
    cuts = [x0]
    for i in range(1, count + 1):
        target = i * column_mass
        if abs(target - 1.0) < 1e-13:
            cuts.append(x0 + nu.side)
        else:
            cuts.append(lam.invert(target))
    return cuts, lam


def _row_cuts(nu, x_lo, x_hi, count, cell_mass, close_top):
    y0 = nu.corner[1]
    lam = nu.marginal_over_x(x_lo, x_hi)
    cuts = [y0]
    for j in range(1, count + 1):
        if close_top and j == count:
            cuts.append(y0 + nu.side)
        else:
            cuts.append(lam.invert(j * cell_mass))
    return cuts, lam


def _construct_perfect_square(nu, m):
    n = m * m
    xcuts, _ = _column_cuts(nu, m, 1.0 / m)
    points, cells = [], []
    for i in range(m):
        ycuts, _ = _row_cuts(nu, xcuts[i], xcuts[i + 1], m, 1.0 / n, close_top=True)
        for j in range(m):
            points.append(
                (
                    0.5 * (xcuts[i] + xcuts[i + 1]),
                    0.5 * (ycuts[j] + ycuts[j + 1]),
                )
            )
            cells.append(
                {
                    "kind": "rect",
                    "x": [xcuts[i], xcuts[i + 1]],
                    "y": [ycuts[j], ycuts[j + 1]],
                }
            )
    return points, cells


def _construct_general(nu, m, k):
    n = m * m + k
    x0, y0 = nu.corner
    L = nu.side
    root_mass = 1.0 / np.sqrt(n)
    xcuts, _ = _column_cuts(nu, m, root_mass)  # x_m < x0 + L
    points, cells = [], []
    top_edges = []  # y_{i m} per column, bottom edge of its top strip
    for i in range(m):
        ycuts, _ = _row_cuts(
            nu, xcuts[i], xcuts[i + 1], m, 1.0 / n, close_top=False
        )
        top_edges.append(ycuts[m])
        for j in range(m):
            points.append(
                (
                    0.5 * (xcuts[i] + xcuts[i + 1]),
                    0.5 * (ycuts[j] + ycuts[j + 1]),
                )
            )
            cells.append(
                {
                    "kind": "rect",
                    "x": [xcuts[i], xcuts[i + 1]],
                    "y": [ycuts[j], ycuts[j + 1]],
                }
            )

    # Traversal of the leftover strip: right edge bottom->top, then the top
    # strips of columns m..1 right->left.  Each segment knows its cumulative
    # mass and how to map a local mass to a position and a boundary point.
    segments = []
    right_lam = nu.marginal_over_x(xcuts[m], x0 + L)
    segments.append(
        {
            "mass": right_lam.total,
            "kind": "right",
            "lam": right_lam,
            "x_range": (xcuts[m], x0 + L),
        }
    )
    for i in range(m - 1, -1, -1):
        lam = nu.marginal_over_y(top_edges[i], y0 + L)
        segments.append(
            {
                "mass": lam.mass(xcuts[i], xcuts[i + 1]),
                "kind": "top",
                "lam": lam,
                "x_range": (xcuts[i], xcuts[i + 1]),
                "y_bottom": top_edges[i],
            }
        )
    strip_mass = sum(s["mass"] for s in segments)
    if abs(strip_mass - k / n) > 1e-8:
        raise LogGasError("density", "strip mass bookkeeping failed")

    def locate(target):
        """Map cumulative strip mass to (segment, boundary point, marker)."""
        acc = 0.0
        for seg in segments:
            if target <= acc + seg["mass"] + 1e-15:
                local = min(max(target - acc, 0.0), seg["mass"])
                if seg["kind"] == "right":
                    ystar = seg["lam"].invert(local, lo=y0)
                    return (x0 + L, ystar), ("right", ystar)
                # top strips run right -> left: local mass measured from x_hi
                xa, xb = seg["x_range"]
                remaining = seg["mass"] - local
                xstar = seg["lam"].invert(remaining, lo=xa)
                return (xstar, y0 + L), ("top", xstar)
            acc += seg["mass"]
        raise LogGasError("density", "strip traversal overflow")

    def slice_rects(t_a, t_b):
        """Sub-rectangles of the strip between cumulative masses t_a < t_b."""
        rects = []
        acc = 0.0
        for seg in segments:
            lo_t, hi_t = acc, acc + seg["mass"]
            a = max(t_a, lo_t)
            b = min(t_b, hi_t)
            if b > a + 1e-15:
                if seg["kind"] == "right":
                    ya = seg["lam"].invert(a - lo_t, lo=y0) if a > lo_t else y0
                    yb = (
                        seg["lam"].invert(b - lo_t, lo=y0)
                        if b < hi_t - 1e-15
                        else y0 + L
                    )
                    rects.append(
                        {"x": list(seg["x_range"]), "y": [ya, yb]}
                    )
                else:
                    xa, xb = seg["x_range"]
                    # right -> left traversal: mass c from the right edge ends
                    # at the x with seg mass (xa..x) = seg_mass - c
                    xr = (
                        seg["lam"].invert(seg["mass"] - (a - lo_t), lo=xa)
                        if a > lo_t
                        else xb
                    )
                    xl = (
                        seg["lam"].invert(seg["mass"] - (b - lo_t), lo=xa)
                        if b < hi_t - 1e-15
                        else xa
                    )
                    rects.append({"x": [xl, xr], "y": [seg["y_bottom"], y0 + L]})
            acc = hi_t
        return rects

    for j in range(1, k + 1):
        point, _ = locate((2 * j - 1) / (2.0 * n))
        points.append(point)
        cells.append(
            {"kind": "strip", "rects": slice_rects((j - 1) / n, j / n)}
        )
    return points, cells


def cell_mass(nu, cell):
    """Mass of a constructed cell under the (bilinear) density surrogate."""
    if cell["kind"] == "rect":
        (xa, xb), (ya, yb) = cell["x"], cell["y"]
        return nu.rect_mass(xa, xb, ya, yb)
    return sum(
        nu.rect_mass(r["x"][0], r["x"][1], r["y"][0], r["y"][1])
        for r in cell["rects"]
    )


def verify_separation(pts, C, n):
    """Exhaustive pairwise check of the 1/(2 sqrt(C n)) separation bound."""
    p = np.asarray(pts.points if isinstance(pts, ConstructedPoints) else pts)
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    dmin = float(np.sqrt(d2.min())) if len(p) > 1 else np.inf
    bound = 1.0 / (2.0 * np.sqrt(C * n))
    return dmin >= bound, dmin


def empirical_energy(pts):
    """(1/n^2) sum_{i != j} log|z_i - z_j| of a point configuration."""
    p = np.asarray(pts.points if isinstance(pts, ConstructedPoints) else pts)
    n = len(p)
    if n < 2:
        raise LogGasError("parameter", "need at least two points")
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, 1.0)
    if np.any(d2 <= 0.0):
        raise LogGasError("degenerate", "coincident points give -inf energy")
    return float(0.5 * np.log(d2).sum() / n**2)


@dataclass
class WeakConvergenceReport:
    ns: list
    distances: list
    passed: bool | None  # None when the trend is undefined (single entry)
    bound: float


def weak_convergence_check(points_by_n, nu, grid_resolution=64, bound=0.06):
    """Bounded-Lipschitz distances of the constructed empirical measures to
    the density, checked for a strictly decreasing trend over n."""
    ns = sorted(points_by_n)
    target = nu.to_grid_measure(grid_resolution)
    distances = [
        bl_distance(empirical_from_sample(np.asarray(points_by_n[n].points
                    if isinstance(points_by_n[n], ConstructedPoints)
                    else points_by_n[n])), target)
        for n in ns
    ]
    if len(ns) < 2:
        return WeakConvergenceReport(ns, distances, None, bound)
    decreasing = all(b < a for a, b in zip(distances[:-1], distances[1:]))
    return WeakConvergenceReport(
        ns, distances, decreasing and distances[-1] <= bound, bound
    )
