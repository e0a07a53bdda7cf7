"""
Uniform grids on intervals and rectangles, boundary classification, the
boundary-velocity lifting and midpoint quadrature.

Layout: densities live at cell centers, velocities on a staggered (MAC)
layout, i.e. the k-th velocity component lives on the faces normal to
axis k. Boundary velocity data therefore sits exactly on the outermost
faces and the Dirichlet condition is imposed without interpolation.

Boundary samples are the centers of the boundary faces, ordered
axis by axis, lower side before upper side:
1D ``[x-, x+]``; 2D ``[x- (ny faces), x+ (ny), y- (nx), y+ (nx)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BoundaryDataError, ConfigurationError, ExtensionError

MIN_CELLS = 4
TOL_CLASS = 1e-12
TOL_DIV = 1e-10

ZERO, IN, OUT = 0, 1, 2
CLASS_NAMES = {ZERO: "ZERO", IN: "IN", OUT: "OUT"}


@dataclass(frozen=True)
class Domain:
    """Axis-aligned interval or rectangle split into uniform cells.

    Attributes:
        lower: lower coordinate per axis.
        upper: upper coordinate per axis.
        cells: number of cells per axis.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in zip(self.lower, self.upper)]))

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    def centers(self, axis: int) -> np.ndarray:
        """1D array of cell-center coordinates along ``axis``."""
        h = self.spacing[axis]
        return self.lower[axis] + (np.arange(self.cells[axis]) + 0.5) * h

    def nodes(self, axis: int) -> np.ndarray:
        """1D array of face coordinates along ``axis``."""
        return np.linspace(self.lower[axis], self.upper[axis], self.cells[axis] + 1)

    def cell_mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates broadcast to the cell array shape."""
        return tuple(np.meshgrid(*[self.centers(k) for k in range(self.dimension)], indexing="ij"))

    def face_mesh(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis`` (staggered grid)."""
        coords = [self.nodes(k) if k == axis else self.centers(k) for k in range(self.dimension)]
        return tuple(np.meshgrid(*coords, indexing="ij"))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        return tuple(n + 1 if k == axis else n for k, n in enumerate(self.cells))

    def zero_velocity(self) -> tuple[np.ndarray, ...]:
        return tuple(np.zeros(self.face_shape(k)) for k in range(self.dimension))

    def distance_to_boundary(self) -> np.ndarray:
        """Distance of every cell center to the boundary of the box."""
        mesh = self.cell_mesh()
        d = np.full(self.shape, np.inf)
        for k in range(self.dimension):
            d = np.minimum(d, np.minimum(mesh[k] - self.lower[k], self.upper[k] - mesh[k]))
        return d


def build_domain(lower: Sequence[float], upper: Sequence[float], cells: Sequence[int]) -> Domain:
    """Validate axis extents and cell counts and return the Domain."""
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    cells = tuple(int(n) for n in np.atleast_1d(cells))
    if not (len(lower) == len(upper) == len(cells)) or len(cells) not in (1, 2):
        raise ConfigurationError("need 1 or 2 axes with matching lower/upper/cells", "domain")
    for k, (lo, hi, n) in enumerate(zip(lower, upper, cells)):
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ConfigurationError(f"axis {k}: extent ({lo}, {hi}) is not well ordered", f"domain.axis{k}")
        if n < MIN_CELLS:
            raise ConfigurationError(
                f"axis {k}: cells_per_axis below minimum ({n} < {MIN_CELLS})", f"domain.axis{k}"
            )
    return Domain(lower, upper, cells)


# ---------------------------------------------------------------------------
# Boundary samplers
# ---------------------------------------------------------------------------

Sampler = Callable[[np.ndarray], np.ndarray]


def constant_sampler(value) -> Sampler:
    value = np.atleast_1d(np.asarray(value, dtype=float))

    def sample(points):
        out = np.broadcast_to(value, (len(points),) + value.shape).copy()
        return out if value.size > 1 else out[:, 0]

    return sample


def linear_tangent_sampler(base, slope, axis: int = 1) -> Sampler:
    """``base + slope * x[axis]`` (linear along the tangential coordinate)."""
    base = np.atleast_1d(np.asarray(base, dtype=float))
    slope = np.atleast_1d(np.asarray(slope, dtype=float))

    def sample(points):
        t = points[:, axis] if points.shape[1] > axis else np.zeros(len(points))
        out = base[None, :] + slope[None, :] * t[:, None]
        return out if base.size > 1 else out[:, 0]

    return sample


def sinusoidal_sampler(mean, amplitude, wavenumber=1.0, axis: int = 1) -> Sampler:
    """``mean + amplitude * sin(2 pi k x[axis])``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))

    def sample(points):
        t = points[:, axis] if points.shape[1] > axis else np.zeros(len(points))
        s = np.sin(2 * np.pi * wavenumber * t)
        out = mean[None, :] + amplitude[None, :] * s[:, None]
        return out if mean.size > 1 else out[:, 0]

    return sample


def piecewise_sampler(values: dict) -> Sampler:
    """Constant value per boundary side, keyed ``"x-"``, ``"x+"``, ``"y-"``, ``"y+"``.

    Used for 1D data where each end carries its own value.
    """

    def sample(points, sides=None):
        if sides is None:
            raise ValueError("piecewise sampler needs side labels")
        return np.array([np.asarray(values[s], dtype=float) for s in sides])

    sample.needs_sides = True
    return sample


# ---------------------------------------------------------------------------
# Boundary classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPartition:
    """Flat arrays over all boundary face samples.

    Attributes:
        sides: side label per sample ("x-", "x+", "y-", "y+").
        points: face-center coordinates, shape (k, d).
        normals: outward unit normals, shape (k, d).
        measures: face measure (1 for a 1D end point).
        u_B: boundary velocity per sample, shape (k, d).
        un: normal velocity ``u_B . n``.
        cls: class code per sample (IN, OUT or ZERO).
        rho_B: inflow density; NaN on samples that are not IN.
        cell: flat index of the adjacent cell.
        face_index: index of the sample in the normal-axis face array.
    """

    sides: tuple[str, ...]
    points: np.ndarray
    normals: np.ndarray
    measures: np.ndarray
    u_B: np.ndarray
    un: np.ndarray
    cls: np.ndarray
    rho_B: np.ndarray
    cell: np.ndarray
    face_index: tuple
    axis: np.ndarray

    @property
    def inflow(self) -> np.ndarray:
        return self.cls == IN

    @property
    def outflow(self) -> np.ndarray:
        return self.cls == OUT

    def class_names(self) -> list[str]:
        return [CLASS_NAMES[int(c)] for c in self.cls]

    def inflow_measure(self) -> float:
        return float(self.measures[self.inflow].sum())

    def with_rho_B(self, rho_B: np.ndarray) -> "BoundaryPartition":
        """Copy with new inflow density values (validated)."""
        rho_B = np.where(self.inflow, np.asarray(rho_B, dtype=float), np.nan)
        if np.any(~np.isfinite(rho_B[self.inflow])) or np.any(rho_B[self.inflow] <= 0):
            raise BoundaryDataError("rho_B must be positive on every IN face")
        return _replace(self, rho_B=rho_B)


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


def boundary_samples(domain: Domain):
    """Enumerate boundary face samples: sides, points, normals, measures, cells, face indices."""
    d = domain.dimension
    sides, points, normals, measures, cells, faces, axes = [], [], [], [], [], [], []
    for axis in range(d):
        for upper in (False, True):
            side = ("xyz"[axis]) + ("+" if upper else "-")
            if d == 1:
                tangential = [()]
            else:
                other = 1 - axis
                tangential = [(j,) for j in range(domain.cells[other])]
            for t in tangential:
                p = np.zeros(d)
                p[axis] = domain.upper[axis] if upper else domain.lower[axis]
                n = np.zeros(d)
                n[axis] = 1.0 if upper else -1.0
                idx_cell = [0] * d
                idx_face = [0] * d
                idx_cell[axis] = domain.cells[axis] - 1 if upper else 0
                idx_face[axis] = domain.cells[axis] if upper else 0
                meas = 1.0
                if d == 2:
                    other = 1 - axis
                    p[other] = domain.centers(other)[t[0]]
                    idx_cell[other] = t[0]
                    idx_face[other] = t[0]
                    meas = domain.spacing[other]
                sides.append(side)
                points.append(p)
                normals.append(n)
                measures.append(meas)
                cells.append(int(np.ravel_multi_index(tuple(idx_cell), domain.shape)))
                faces.append(tuple(idx_face))
                axes.append(axis)
    return (
        tuple(sides),
        np.array(points),
        np.array(normals),
        np.array(measures),
        np.array(cells),
        tuple(faces),
        np.array(axes),
    )


def _evaluate(sampler, points, sides):
    if getattr(sampler, "needs_sides", False):
        return np.asarray(sampler(points, sides=sides), dtype=float)
    return np.asarray(sampler(points), dtype=float)


def classify_boundary(domain: Domain, u_B: Sampler, rho_B: Sampler | None) -> BoundaryPartition:
    """Classify every boundary sample as IN, OUT or ZERO from the sign of ``u_B . n``.

    Raises:
        BoundaryDataError: an IN sample has no (or a non-positive) inflow density.
    """
    sides, points, normals, measures, cells, faces, axes = boundary_samples(domain)
    ub = _evaluate(u_B, points, sides).reshape(len(points), -1)
    if ub.shape[1] != domain.dimension:
        raise BoundaryDataError(f"u_B has {ub.shape[1]} components, expected {domain.dimension}")
    un = np.einsum("kd,kd->k", ub, normals)
    cls = np.full(len(points), ZERO, dtype=np.int8)
    cls[un < -TOL_CLASS] = IN
    cls[un > TOL_CLASS] = OUT
    rb = np.full(len(points), np.nan)
    if np.any(cls == IN):
        if rho_B is None:
            first = int(np.flatnonzero(cls == IN)[0])
            raise BoundaryDataError(f"missing rho_B on inflow face {sides[first]} (sample {first})")
        vals = _evaluate(rho_B, points, sides).reshape(-1)
        for k in np.flatnonzero(cls == IN):
            if not np.isfinite(vals[k]) or vals[k] <= 0:
                raise BoundaryDataError(f"rho_B missing or non-positive on inflow face {sides[k]} (sample {k})")
        rb[cls == IN] = vals[cls == IN]
    return BoundaryPartition(
        sides=sides,
        points=points,
        normals=normals,
        measures=measures,
        u_B=ub,
        un=un,
        cls=cls,
        rho_B=rb,
        cell=cells,
        face_index=faces,
        axis=axes,
    )


# ---------------------------------------------------------------------------
# Extension of the boundary velocity
# ---------------------------------------------------------------------------


def smoothstep5(s):
    """Quintic blend 6s^5 - 15s^4 + 10s^3 clipped to [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


@dataclass(frozen=True)
class ExtensionField:
    """Lifting of the boundary velocity into the domain.

    ``u_inf`` holds one face array per axis (staggered layout); ``div_u_inf``
    is the discrete cell divergence of that face field.
    """

    u_inf: tuple
    collar_width: float
    div_u_inf: np.ndarray
    evaluate: Callable = field(repr=False, compare=False, default=None)


def discrete_divergence(domain: Domain, faces: Sequence[np.ndarray]) -> np.ndarray:
    """Cell divergence of a staggered face field."""
    div = np.zeros(domain.shape)
    for k in range(domain.dimension):
        div += np.diff(faces[k], axis=k) / domain.spacing[k]
    return div


def discrete_gradient(domain: Domain, cell_field: np.ndarray, axis: int) -> np.ndarray:
    """Difference of a cell field across the interior faces normal to ``axis``."""
    return np.diff(cell_field, axis=axis) / domain.spacing[axis]


def _extension_1d(domain, partition, h):
    lo, hi = domain.lower[0], domain.upper[0]
    uL = float(partition.u_B[0, 0])
    uR = float(partition.u_B[1, 0])

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        s = (x - (lo + h)) / (hi - lo - 2 * h)
        return uL + (uR - uL) * smoothstep5(s)

    return (evaluate(domain.nodes(0)),), evaluate


def _extension_2d(domain, partition, h):
    # One normal-constant lifting per side, blended with a partition of unity.
    side_data = {}
    for side in ("x-", "x+", "y-", "y+"):
        sel = np.array([s == side for s in partition.sides])
        axis = 0 if side[0] == "x" else 1
        other = 1 - axis
        t = partition.points[sel, other]
        vals = partition.u_B[sel]
        side_data[side] = (axis, other, t, vals, partition.measures[sel])
    mean = sum((d[3] * d[4][:, None]).sum(axis=0) for d in side_data.values())
    mean = mean / sum(d[4].sum() for d in side_data.values())

    def side_value(side, tcoord):
        axis, other, t, vals, _ = side_data[side]
        return np.stack([np.interp(tcoord, t, vals[:, c]) for c in range(2)], axis=-1)

    def evaluate(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        dist = {
            "x-": x - domain.lower[0],
            "x+": domain.upper[0] - x,
            "y-": y - domain.lower[1],
            "y+": domain.upper[1] - y,
        }
        tang = {"x-": y, "x+": y, "y-": x, "y+": x}
        num = np.zeros(x.shape + (2,))
        den = np.zeros(x.shape)
        interior = np.ones(x.shape)
        for side in dist:
            w = 1.0 - smoothstep5((dist[side] - h) / h)
            num += w[..., None] * side_value(side, tang[side])
            den += w
            interior *= 1.0 - w
        num += interior[..., None] * mean
        den += interior
        return num / den[..., None]

    faces = []
    for axis in range(2):
        X, Y = domain.face_mesh(axis)
        faces.append(evaluate(X, Y)[..., axis])
    return tuple(faces), evaluate


def build_extension(domain: Domain, partition: BoundaryPartition, collar_width: float) -> ExtensionField:
    """Lift ``u_B`` into the domain and audit its divergence in the collar.

    1D: constant on each collar, quintic blend in between, so the collar
    divergence vanishes identically. 2D: per-side normal-constant liftings
    blended by a partition of unity. No correction is attempted.

    Raises:
        ConfigurationError: collar narrower than two cells.
        ExtensionError: collar divergence below ``-TOL_DIV``.
    """
    hmax = max(domain.spacing)
    if collar_width < 2 * hmax - 1e-14:
        raise ConfigurationError(
            f"collar_width {collar_width} below 2*spacing {2 * hmax}", "boundary.collar_width"
        )
    if 2 * collar_width >= min(domain.extent):
        raise ConfigurationError("collar_width must be below half the smallest extent", "boundary.collar_width")
    if domain.dimension == 1:
        faces, evaluate = _extension_1d(domain, partition, collar_width)
    else:
        faces, evaluate = _extension_2d(domain, partition, collar_width)
    # the face field must reproduce u_B exactly on boundary faces
    faces = tuple(np.array(f) for f in faces)
    for k in range(len(partition.sides)):
        axis = int(partition.axis[k])
        faces[axis][partition.face_index[k]] = partition.u_B[k, axis]
    div = discrete_divergence(domain, faces)
    collar = inner_collar(domain, collar_width)
    if np.any(collar):
        worst = np.min(np.where(collar, div, np.inf))
        if worst < -TOL_DIV:
            cell = np.unravel_index(int(np.argmin(np.where(collar, div, np.inf))), domain.shape)
            raise ExtensionError(
                f"collar divergence {worst:.3e} < -{TOL_DIV:g} at cell {cell}", worst_cell=cell, worst_value=worst
            )
    return ExtensionField(u_inf=faces, collar_width=float(collar_width), div_u_inf=div, evaluate=evaluate)


def inner_collar(domain: Domain, h: float) -> np.ndarray:
    """Mask of cells whose center lies closer than ``h`` to the boundary."""
    if not (0 < h < 0.5 * min(domain.extent)):
        raise ConfigurationError(f"collar width {h} outside (0, {0.5 * min(domain.extent)})", "h")
    return domain.distance_to_boundary() < h


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def integrate(domain: Domain, values, mask: np.ndarray | None = None) -> float:
    """Midpoint rule over cells (optionally restricted to ``mask``)."""
    values = np.asarray(values, dtype=float)
    if values.shape != domain.shape:
        raise ValueError(f"field shape {values.shape} does not match domain {domain.shape}")
    if mask is not None:
        values = np.where(mask, values, 0.0)
    return float(values.sum() * domain.cell_volume)


def integrate_boundary(partition: BoundaryPartition, values, select: np.ndarray | None = None) -> float:
    """Face-center rule over boundary samples (optionally a boolean subset)."""
    values = np.asarray(values, dtype=float)
    if values.shape != partition.measures.shape:
        raise ValueError("boundary field shape mismatch")
    w = partition.measures if select is None else np.where(select, partition.measures, 0.0)
    return float(np.sum(np.where(w != 0, values, 0.0) * w))
