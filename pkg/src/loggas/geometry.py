"""Crowding regions, tube neighbourhoods and the boundary-mass membership test.

Regions are interval unions (1D), disks or simple polygons (2D).  Boundaries
are finite point sets in 1D (structurally polar) and rectifiable curves of
finite length in 2D, with the length stored as h1_boundary.

Tube areas m({dist(x, boundary) < r}) come in closed form for disks and for
convex polygons with r below the inradius; everything else falls back to
counting cells of a fine lattice against the exact Euclidean distance to the
boundary (the boundary itself is never rasterized).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import LogGasError
from .measures import GridMeasure

log = logging.getLogger(__name__)

GRID_COUNT_RESOLUTION = 1024  # nodes per axis for the counting fallback


class Region:
    dimension = None
    shape = None

    def contains(self, points):
        raise NotImplementedError

    def boundary_distance(self, points):
        raise NotImplementedError


class IntervalUnion(Region):
    """Finite union of disjoint closed intervals on the line.

    The boundary is the finite set of endpoints, hence polar; h1_boundary
    stores the endpoint count (flagged, not a length).
    """

    dimension = 1
    shape = "interval-union"
    boundary_is_polar_finite = True

    def __init__(self, intervals):
        ivals = sorted((float(a), float(b)) for a, b in intervals)
        for a, b in ivals:
            if b <= a:
                raise LogGasError("parameter", "empty interval")
        for (_, b0), (a1, _) in zip(ivals[:-1], ivals[1:]):
            if a1 <= b0:
                raise LogGasError("parameter", "intervals must be disjoint")
        self.intervals = tuple(ivals)
        self.h1_boundary = float(2 * len(ivals))
        self.boundary_points = np.array(
            [c for iv in self.intervals for c in iv]
        )

    def contains(self, points):
        x = np.asarray(points, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > a) & (x < b)  # open membership
        return inside

    def boundary_distance(self, points):
        x = np.asarray(points, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        return np.min(np.abs(x[..., None] - self.boundary_points), axis=-1)


class EmptyRegion(Region):
    """The empty crowding set (any dimension)."""

    shape = "empty"
    h1_boundary = 0.0

    def __init__(self, dimension):
        self.dimension = dimension

    def contains(self, points):
        points = np.asarray(points)
        n = points.shape[0] if points.ndim > 1 else points.size
        return np.zeros(n, dtype=bool)

    def boundary_distance(self, points):
        points = np.asarray(points)
        n = points.shape[0] if points.ndim > 1 else points.size
        return np.full(n, np.inf)


class Disk(Region):
    dimension = 2
    shape = "disk"

    def __init__(self, center, radius):
        if radius <= 0:
            raise LogGasError("parameter", "disk radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.h1_boundary = 2.0 * np.pi * self.radius

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) < self.radius

    def boundary_distance(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        r = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
        return np.abs(r - self.radius)

    @property
    def inradius(self):
        return self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius


class Polygon(Region):
    """Simple closed polygon given by its vertices (either orientation)."""

    dimension = 2
    shape = "polygon"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise LogGasError("parameter", "polygon needs >= 3 plane vertices")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        self.vertices = v
        self._edges = np.stack([v, np.roll(v, -1, axis=0)], axis=1)  # (E,2,2)
        if self._self_intersects():
            raise LogGasError("parameter", "polygon must be simple")
        seg = self._edges[:, 1] - self._edges[:, 0]
        self.h1_boundary = float(np.hypot(seg[:, 0], seg[:, 1]).sum())
        self.area = float(
            0.5
            * abs(
                np.sum(
                    v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]
                )
            )
        )

    def _self_intersects(self):
        # O(E^2) proper-crossing test between non-adjacent edges
        E = self._edges
        ne = len(E)

        def cross(o, a, b):
            return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

        for i in range(ne):
            for j in range(i + 2, ne):
                if i == 0 and j == ne - 1:
                    continue
                p1, p2 = E[i]
                q1, q2 = E[j]
                d1 = cross(q1, q2, p1)
                d2 = cross(q1, q2, p2)
                d3 = cross(p1, p2, q1)
                d4 = cross(p1, p2, q2)
                if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
                    return True
        return False

    def contains(self, points):
        # even-odd crossing number, vectorized over points
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        inside = np.zeros(len(p), dtype=bool)
        v = self.vertices
        n = len(v)
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            crosses = ((yi > y) != (yj > y)) & (
                x < (xj - xi) * (y - yi) / (yj - yi) + xi
            )
            inside ^= crosses
            j = i
        return inside

    def boundary_distance(self, points):
        # exact point-segment distance, min over edges
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        best = np.full(len(p), np.inf)
        for (a, b) in self._edges:
            ab = b - a
            denom = float(ab @ ab)
            t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
            proj = a[None, :] + t[:, None] * ab[None, :]
            d = np.hypot(p[:, 0] - proj[:, 0], p[:, 1] - proj[:, 1])
            np.minimum(best, d, out=best)
        return best

    @property
    def is_convex(self):
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        cr = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cr >= -1e-12) or np.all(cr <= 1e-12))

    @property
    def inradius(self):
        """Radius of the largest inscribed disk (Chebyshev radius), via LP."""
        from scipy.optimize import linprog

        v = self.vertices
        # ensure counter-clockwise orientation so normals point inward
        signed = 0.5 * np.sum(
            v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]
        )
        if signed < 0:
            v = v[::-1]
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
        # inward normal of edge (for CCW): (-ey, ex)/|e|
        n_in = np.column_stack([-e[:, 1], e[:, 0]]) / lengths[:, None]
        # maximize t s.t. n_in . x - t >= n_in . v_i  for every edge
        A_ub = np.column_stack([-n_in, np.ones(len(v))])
        b_ub = -np.sum(n_in * v, axis=1)
        res = linprog(
            c=[0.0, 0.0, -1.0],
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=[(None, None), (None, None), (0, None)],
            method="highs",
        )
        if not res.success:
            raise LogGasError("parameter", "inradius LP failed")
        return float(res.x[2])

    @property
    def diameter(self):
        v = self.vertices
        d = np.hypot(
            v[:, 0][:, None] - v[:, 0][None, :], v[:, 1][:, None] - v[:, 1][None, :]
        )
        return float(d.max())

    def corner_cotangent_sum(self):
        """sum_i cot(theta_i / 2) over interior angles; used by the inner
        offset-band formula for convex polygons."""
        v = self.vertices
        prev = np.roll(v, 1, axis=0) - v
        nxt = np.roll(v, -1, axis=0) - v
        dot = np.sum(prev * nxt, axis=1)
        crossmag = np.abs(prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0])
        theta = np.arctan2(crossmag, dot)  # interior angle in (0, pi)
        return float(np.sum(1.0 / np.tan(theta / 2.0)))


def _boundary_bbox(region):
    if isinstance(region, Disk):
        lo = region.center - region.radius
        hi = region.center + region.radius
    else:
        lo = region.vertices.min(axis=0)
        hi = region.vertices.max(axis=0)
    return lo, hi


def _tube_area_by_counting(region, r, resolution):
    lo, hi = _boundary_bbox(region)
    lo = lo - 1.05 * r
    hi = hi + 1.05 * r
    hx = (hi[0] - lo[0]) / resolution
    hy = (hi[1] - lo[1]) / resolution
    xs = lo[0] + (np.arange(resolution) + 0.5) * hx
    ys = lo[1] + (np.arange(resolution) + 0.5) * hy
    count = 0
    # row blocks keep the point-segment distance arrays modest
    block = max(1, (1 << 22) // resolution)
    for i0 in range(0, resolution, block):
        X, Y = np.meshgrid(xs[i0 : i0 + block], ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        count += int((region.boundary_distance(pts) < r).sum())
    return count * hx * hy


def tube_area(region, r, resolution=GRID_COUNT_RESOLUTION):
    """Area of the open tube {x : dist(x, boundary of U) < r}."""
    if region.dimension != 2:
        raise LogGasError("dimension", "tube areas are defined for 2D regions")
    if r <= 0:
        raise LogGasError("parameter", "tube radius must be positive")
    if isinstance(region, Disk):
        inner = max(region.radius - r, 0.0)
        return float(np.pi * ((region.radius + r) ** 2 - inner**2))
    if isinstance(region, Polygon) and region.is_convex:
        if r < region.inradius:
            P = region.h1_boundary
            return float(2.0 * P * r + np.pi * r * r - region.corner_cotangent_sum() * r * r)
        log.warning(
            "tube radius %.4g >= inradius; falling back to grid counting", r
        )
    return float(_tube_area_by_counting(region, r, resolution))


@dataclass
class TubeReport:
    radii: list
    areas: list
    ratios: list  # area / (2 r)
    h1_estimate: float
    c_constant: float  # 2 * H^1(boundary)
    warnings: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("r,area,ratio\n")
            for r, a, q in zip(self.radii, self.areas, self.ratios):
                fh.write(f"{r!r},{a!r},{q!r}\n")


def minkowski_content(region, radii, resolution=GRID_COUNT_RESOLUTION):
    """Tube ratios area/(2r) over decreasing radii plus a Richardson
    extrapolation of the last two ratios toward r = 0."""
    radii = [float(r) for r in radii]
    if len(radii) < 2:
        raise LogGasError("parameter", "need at least two radii")
    if any(r <= 0 for r in radii) or any(
        r2 >= r1 for r1, r2 in zip(radii[:-1], radii[1:])
    ):
        raise LogGasError("parameter", "radii must be positive and decreasing")
    areas = [tube_area(region, r, resolution) for r in radii]
    ratios = [a / (2.0 * r) for a, r in zip(areas, radii)]
    r1, r2 = radii[-2], radii[-1]
    q1, q2 = ratios[-2], ratios[-1]
    h1_est = q2 + (q2 - q1) * r2 / (r1 - r2)  # linear extrapolation to r=0
    return TubeReport(
        radii=radii,
        areas=areas,
        ratios=ratios,
        h1_estimate=float(h1_est),
        c_constant=2.0 * region.h1_boundary,
    )


def default_delta0(region):
    """delta_0 keeping the tested tubes inside a desk-scale domain."""
    return min(region.inradius, 0.1 * region.diameter) / 2.0


def m1_star_check(mu, region, delta0, eps_grid, slack=1e-9):
    """Boundary-mass control test.

    2D: mu(tube_eps) <= c * eps for all tested eps, with c = 2 H^1(boundary).
    1D: mu(boundary point set) == 0.
    Returns (passed, worst_ratio) where worst_ratio = max_eps mu(tube_eps)/eps
    in 2D and the boundary mass itself in 1D.
    """
    if not isinstance(mu, GridMeasure):
        raise LogGasError("parameter", "m1_star_check expects a grid measure")
    if mu.dimension != region.dimension:
        raise LogGasError("dimension", "measure and region dimensions differ")
    if region.dimension == 1:
        d = region.boundary_distance(mu.grid.nodes)
        mass = float(mu.weights[d < 1e-12].sum())
        return mass <= slack, mass
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid or any(e <= 0 or e > delta0 + 1e-15 for e in eps_grid):
        raise LogGasError("parameter", "eps values must lie in (0, delta0]")
    c = 2.0 * region.h1_boundary
    d = region.boundary_distance(mu.grid.nodes)
    worst = 0.0
    passed = True
    for eps in eps_grid:
        mass = float(mu.weights[d < eps].sum())
        worst = max(worst, mass / eps)
        if mass > c * eps + slack:
            passed = False
    return passed, worst


def boundary_clearance(grid, region):
    """Smallest node-to-boundary distance; used to validate the offset-by-h/2
    convention (no cell center may sit on the region boundary)."""
    return float(region.boundary_distance(grid.nodes).min())


def region_from_config(cfg, dimension=None):
    """Build a Region from a config mapping (CLI / TOML layer)."""
    shape = cfg.get("shape")
    if shape == "interval-union":
        return IntervalUnion(cfg["intervals"])
    if shape == "disk":
        return Disk(cfg["center"], cfg["radius"])
    if shape == "polygon":
        return Polygon(cfg["vertices"])
    if shape == "empty":
        if dimension is None:
            dimension = cfg.get("dimension", 1)
        return EmptyRegion(dimension)
    raise LogGasError("config", f"unknown region shape {shape!r}")
