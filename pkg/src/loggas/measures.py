"""Grids, discrete probability measures, potentials and the weak-topology metric.

Measures live on uniform cell-center grids (1D intervals or 2D rectangles).
All types are immutable after construction and all operations are pure, so
everything here is safe to share across threads.
"""

import csv
import io

import numpy as np

from .errors import LogGasError

MASS_TOL = 1e-12

# Version tag of the bounded-Lipschitz test-function dictionary.  Distances
# are only comparable between runs that used the same dictionary version.
BL_DICTIONARY_VERSION = "v1"
_BL_RAMPS_PER_AXIS = 5
_BL_CONE_CENTERS_1D = 17
_BL_CONE_CENTERS_2D = 9  # per axis
_BL_CONE_SCALES = (1.0, 0.5, 0.25)


class Grid:
    """Uniform cell-center grid on an interval (1D) or rectangle (2D).

    Nodes sit at cell centers: lo + (i + 1/2) h, so the cells tile the domain
    exactly and no node ever lies on the domain boundary.  2D indexing is
    row-major: flat index = ix * resolution_y + iy.
    """

    def __init__(self, lo, hi, resolution):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        res = np.atleast_1d(np.asarray(resolution, dtype=int))
        if lo.size not in (1, 2) or hi.size != lo.size:
            raise LogGasError("dimension", "grid must be 1D or 2D")
        if res.size == 1 and lo.size == 2:
            res = np.repeat(res, 2)
        if res.size != lo.size:
            raise LogGasError("grid", "one resolution per axis required")
        if np.any(res < 2):
            raise LogGasError("grid", "resolution must be >= 2 per axis")
        if np.any(hi <= lo):
            raise LogGasError("grid", "empty domain")
        self.dimension = int(lo.size)
        self.lo = tuple(lo)
        self.hi = tuple(hi)
        self.resolution = tuple(int(r) for r in res)
        self.spacing = tuple((h - l) / r for l, h, r in zip(lo, hi, res))
        self.cell_volume = float(np.prod(self.spacing))
        self.size = int(np.prod(self.resolution))
        axes = [
            l + (np.arange(r) + 0.5) * s
            for l, r, s in zip(self.lo, self.resolution, self.spacing)
        ]
        if self.dimension == 1:
            self._nodes = axes[0][:, None]
        else:
            X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
            self._nodes = np.column_stack([X.ravel(), Y.ravel()])
        self._nodes.setflags(write=False)
        self.axes = tuple(axes)

    @property
    def nodes(self):
        """(size, dimension) array of cell centers."""
        return self._nodes

    def node(self, i):
        return tuple(self._nodes[i])

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.lo == other.lo
            and self.hi == other.hi
            and self.resolution == other.resolution
        )

    def __hash__(self):
        return hash((self.lo, self.hi, self.resolution))

    def __repr__(self):
        return f"Grid(lo={self.lo}, hi={self.hi}, resolution={self.resolution})"


class GridMeasure:
    """Probability measure as nonnegative unit-mass weights on grid nodes."""

    def __init__(self, grid, weights):
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size != grid.size:
            raise LogGasError("grid", "one weight per node required")
        if np.any(weights < 0):
            raise LogGasError("parameter", "weights must be nonnegative")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise LogGasError(
                "parameter", f"weights must sum to 1 (got {weights.sum()!r})"
            )
        self.grid = grid
        self.weights = weights
        self.weights.setflags(write=False)

    @property
    def dimension(self):
        return self.grid.dimension

    def density(self):
        """Weights divided by cell volume (values of the density at nodes)."""
        return self.weights / self.grid.cell_volume

    def bounding_box(self):
        return np.array(self.grid.lo), np.array(self.grid.hi)


class EmpiricalMeasure:
    """Uniform weights 1/n on a finite point set."""

    def __init__(self, points, box=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 1:
            raise LogGasError("parameter", "need at least one point")
        self.points = points
        self.points.setflags(write=False)
        self.n = points.shape[0]
        self.dimension = points.shape[1]
        if box is None:
            box = (points.min(axis=0), points.max(axis=0))
        self._box = (np.asarray(box[0], float), np.asarray(box[1], float))
        if np.any(points < self._box[0] - 1e-12) or np.any(
            points > self._box[1] + 1e-12
        ):
            raise LogGasError("parameter", "points outside declared bounding box")

    def bounding_box(self):
        return self._box


def empirical_from_sample(points, box=None):
    """Empirical measure (equal weights 1/n) of a nonempty sample."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise LogGasError("parameter", "empty sample")
    return EmpiricalMeasure(points, box=box)


def uniform_measure(grid):
    return GridMeasure(grid, np.full(grid.size, 1.0 / grid.size))


def measure_from_density(grid, fn):
    """Normalized grid measure with weights proportional to fn at cell centers."""
    vals = np.asarray(fn(grid.nodes), dtype=float).ravel()
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise LogGasError("density", "density must be finite and nonnegative")
    s = vals.sum()
    if s <= 0:
        raise LogGasError("density", "density vanishes on the grid")
    return GridMeasure(grid, vals / s)


class Potential:
    """External confining potential, evaluable on grid nodes.

    kinds:
      quadratic          V(x) = c0 * |x|^2
      quartic            V(x) = c0 * |x|^2 + c1 * |x|^4
      radial-polynomial  V(x) = sum_k c_k * |x|^(2k)   (k = 0, 1, ...)
      tabulated          values given per node of a fixed grid

    The first three are twice differentiable, so the 2D Laplacian is available
    in closed form (needed by the obstacle-identity check).
    """

    KINDS = ("quadratic", "quartic", "radial-polynomial", "tabulated")

    def __init__(self, kind, coefficients, grid=None):
        if kind not in self.KINDS:
            raise LogGasError("potential", f"unknown potential kind {kind!r}")
        self.kind = kind
        self.coefficients = tuple(float(c) for c in np.atleast_1d(coefficients))
        self.grid = grid
        self.beta_prime_margin = None
        if kind == "tabulated":
            if grid is None:
                raise LogGasError("potential", "tabulated potential needs a grid")
            if len(self.coefficients) != grid.size:
                raise LogGasError("potential", "tabulated values must match grid size")
        if any(not np.isfinite(c) for c in self.coefficients):
            raise LogGasError("potential", "non-finite coefficient")

    def _radial2(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        return (points**2).sum(axis=1)

    def __call__(self, points):
        r2 = self._radial2(points)
        c = self.coefficients
        if self.kind == "quadratic":
            return c[0] * r2
        if self.kind == "quartic":
            return c[0] * r2 + c[1] * r2**2
        if self.kind == "radial-polynomial":
            out = np.zeros_like(r2)
            for k, ck in enumerate(c):
                out += ck * r2**k
            return out
        # tabulated: only valid on its own grid's nodes
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape == self.grid.nodes.shape and np.array_equal(
            pts, self.grid.nodes
        ):
            return np.asarray(self.coefficients)
        raise LogGasError("potential", "tabulated potential only defined on its grid")

    def laplacian(self, points):
        """2D Laplacian at the given points (closed form; not for tabulated)."""
        r2 = self._radial2(points)
        c = self.coefficients
        if self.kind == "quadratic":
            return np.full_like(r2, 4.0 * c[0])
        if self.kind == "quartic":
            return 4.0 * c[0] + 16.0 * c[1] * r2
        if self.kind == "radial-polynomial":
            out = np.zeros_like(r2)
            for k, ck in enumerate(c):
                if k >= 1:
                    out += ck * (2.0 * k) ** 2 * r2 ** (k - 1)
            return out
        raise LogGasError("potential", "no closed-form Laplacian for tabulated kind")

    def validate_on_grid(self, grid, beta=None):
        """Check V >= 0 on the grid and record the growth-margin proxy."""
        vals = np.asarray(self(grid.nodes), dtype=float)
        if np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
            raise LogGasError("potential", "V must be finite and >= 0 on the grid")
        if beta is not None:
            self.beta_prime_margin = self.growth_margin(grid, max(beta, 1.0) + 0.5)
        return vals

    def growth_margin(self, grid, beta_prime):
        """min over domain-edge nodes of V(x)/(beta' log|x|), a proxy for the
        logarithmic-growth condition.  Values > 1 indicate enough confinement."""
        nodes = grid.nodes
        edge = np.zeros(grid.size, dtype=bool)
        if grid.dimension == 1:
            edge[0] = edge[-1] = True
        else:
            nx, ny = grid.resolution
            idx = np.arange(grid.size)
            ix, iy = idx // ny, idx % ny
            edge = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
        r = np.sqrt((nodes[edge] ** 2).sum(axis=1))
        denom = beta_prime * np.log(np.maximum(r, 1.0 + 1e-9))
        v = np.asarray(self(nodes[edge]), dtype=float)
        return float(np.min(v / denom))


def measure_of_region(mu, region):
    """Mass mu(U): sum of weights of nodes whose cell center lies in U (open)."""
    if mu.dimension != region.dimension:
        raise LogGasError("dimension", "measure and region dimensions differ")
    if isinstance(mu, GridMeasure):
        inside = region.contains(mu.grid.nodes)
        return float(mu.weights[inside].sum())
    inside = region.contains(mu.points)
    return float(inside.sum()) / mu.n


def _support_box(a, b):
    lo_a, hi_a = a.bounding_box()
    lo_b, hi_b = b.bounding_box()
    return np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b)


def _bl_dictionary(lo, hi):
    """Fixed dictionary of Lipschitz-1, sup-norm-<=1 test functions.

    Per axis: clipped ramps clip(x_d - c, -1, 1) at evenly spaced centers.
    Plus cones s - min(dist(x, p), s), i.e. max(s - |x - p|, 0), on a
    deterministic lattice of centers p at scales s in _BL_CONE_SCALES.
    Returns a list of closures acting on (n, d) point arrays.
    """
    lo = np.atleast_1d(lo)
    hi = np.atleast_1d(hi)
    dim = lo.size
    funcs = []
    for d in range(dim):
        for c in np.linspace(lo[d], hi[d], _BL_RAMPS_PER_AXIS):
            funcs.append(
                lambda pts, d=d, c=c: np.clip(pts[:, d] - c, -1.0, 1.0)
            )
    n_centers = _BL_CONE_CENTERS_1D if dim == 1 else _BL_CONE_CENTERS_2D
    axes = [np.linspace(lo[d], hi[d], n_centers) for d in range(dim)]
    if dim == 1:
        centers = axes[0][:, None]
    else:
        CX, CY = np.meshgrid(axes[0], axes[1], indexing="ij")
        centers = np.column_stack([CX.ravel(), CY.ravel()])
    for p in centers:
        for s in _BL_CONE_SCALES:
            funcs.append(
                lambda pts, p=p, s=s: np.maximum(
                    s - np.sqrt(((pts - p) ** 2).sum(axis=1)), 0.0
                )
            )
    return funcs


def _integrate(measure, fn):
    if isinstance(measure, GridMeasure):
        return float(fn(measure.grid.nodes) @ measure.weights)
    return float(fn(measure.points).mean())


def bl_distance(a, b):
    """Bounded-Lipschitz distance over the fixed v1 dictionary.

    max_f |int f da - int f db|; a pseudometric (symmetry and the triangle
    inequality hold exactly).  Both arguments may be GridMeasure or
    EmpiricalMeasure of the same dimension.
    """
    if a.dimension != b.dimension:
        raise LogGasError("dimension", "measures have different dimensions")
    lo, hi = _support_box(a, b)
    funcs = _bl_dictionary(lo, hi)
    if not funcs:
        raise LogGasError("config", "empty bounded-Lipschitz dictionary")
    best = 0.0
    for f in funcs:
        best = max(best, abs(_integrate(a, f) - _integrate(b, f)))
    return best


def measure_to_csv(mu, path):
    """Write `index,x[,y],weight` rows for a GridMeasure."""
    with open(path, "w", newline="") as fh:
        _write_measure(mu, fh)


def measure_to_csv_string(mu):
    buf = io.StringIO()
    _write_measure(mu, buf)
    return buf.getvalue()


def _write_measure(mu, fh):
    w = csv.writer(fh)
    if mu.dimension == 1:
        w.writerow(["index", "x", "weight"])
        for i, (node, wt) in enumerate(zip(mu.grid.nodes[:, 0], mu.weights)):
            w.writerow([i, repr(float(node)), repr(float(wt))])
    else:
        w.writerow(["index", "x", "y", "weight"])
        for i, (node, wt) in enumerate(zip(mu.grid.nodes, mu.weights)):
            w.writerow([i, repr(float(node[0])), repr(float(node[1])), repr(float(wt))])


def measure_from_csv(path, grid):
    """Read weights written by measure_to_csv back onto a matching grid."""
    weights = np.zeros(grid.size)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "index" or header[-1] != "weight":
            raise LogGasError("config", "not a measure CSV")
        for row in reader:
            weights[int(row[0])] = float(row[-1])
    return GridMeasure(grid, weights)
