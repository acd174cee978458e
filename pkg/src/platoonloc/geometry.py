"""Road-grid geometry, angle conventions, and array steering vectors.

Conventions used throughout:

* Arrays are half-wavelength spaced. The linear-array axis and the planar
  array's horizontal axis are parallel to the road (global x axis); the
  planar array's vertical axis is global z.
* ``steering_ula(omega, K)`` takes the angle ``omega`` between the incoming
  direction and the array axis, so entry k is e^{-j pi k cos(omega)}.
* Angle grids for scatterer directions are stored as broadside-referenced
  angles on the uniform sin-law grid; sin(broadside angle) equals the
  directional cosine along the array axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidDimensionError,
    InvalidOffsetError,
    OutOfGridError,
)
from .kernels import ula_phase_matrix, upa_phase_matrix


@dataclass(frozen=True)
class Position3:
    """A point in 3-D space, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.isfinite([self.x, self.y, self.z]).all():
            raise ValueError("Position3 components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "Position3":
        a = np.asarray(a, dtype=np.float64)
        return Position3(float(a[0]), float(a[1]), float(a[2]))


def sin_law_grid(n: int) -> np.ndarray:
    """Uniform grid of n directional sines: (2/n) * (k - floor((n-1)/2))."""
    if n < 1:
        raise InvalidDimensionError("grid size must be >= 1")
    k = np.arange(n, dtype=np.float64)
    return (2.0 / n) * (k - np.floor((n - 1) / 2))


def _half_widths(values: np.ndarray) -> np.ndarray:
    """Half the local spacing of a sorted 1-D grid (edge cells use one side)."""
    if values.size == 1:
        return np.array([np.inf])
    gaps = np.diff(values)
    left = np.concatenate([[gaps[0]], gaps])
    right = np.concatenate([gaps, [gaps[-1]]])
    return np.minimum(left, right) / 2.0


@dataclass
class GridSpec:
    """Uniform road-location grid plus the scatterer-angle grids.

    grid_points[u] = road_origin + u * grid_length * road_direction.
    bs_aoa_grid holds broadside angles whose sines follow the sin-law grid;
    ris_angle_grid holds (azimuth, elevation) broadside pairs built as the
    product of two sin-law grids.
    """

    road_origin: Position3
    road_direction: np.ndarray
    grid_count: int
    grid_length: float
    bs_aoa_grid: np.ndarray
    ris_angle_grid: np.ndarray  # (N~, 2) columns: azimuth, elevation
    grid_points: np.ndarray = field(init=False)
    bs_aoa_half_width: np.ndarray = field(init=False)
    ris_az_half_width: np.ndarray = field(init=False)
    ris_el_half_width: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.grid_count < 1:
            raise InvalidDimensionError("grid_count must be >= 1")
        if self.grid_length <= 0:
            raise ValueError("grid_length must be positive")
        self.road_direction = np.asarray(self.road_direction, dtype=np.float64)
        nrm = np.linalg.norm(self.road_direction)
        if nrm == 0:
            raise DegenerateGeometryError("road_direction must be nonzero")
        self.road_direction = self.road_direction / nrm
        u = np.arange(self.grid_count, dtype=np.float64)
        self.grid_points = (
            self.road_origin.as_array()[None, :]
            + u[:, None] * self.grid_length * self.road_direction[None, :]
        )
        self.bs_aoa_grid = np.asarray(self.bs_aoa_grid, dtype=np.float64)
        self.ris_angle_grid = np.asarray(self.ris_angle_grid, dtype=np.float64)
        if self.ris_angle_grid.ndim != 2 or self.ris_angle_grid.shape[1] != 2:
            raise InvalidDimensionError("ris_angle_grid must have shape (N~, 2)")
        self.bs_aoa_half_width = _half_widths(self.bs_aoa_grid)
        az = np.unique(self.ris_angle_grid[:, 0])
        el = np.unique(self.ris_angle_grid[:, 1])
        az_hw = dict(zip(az, _half_widths(az)))
        el_hw = dict(zip(el, _half_widths(el)))
        self.ris_az_half_width = np.array([az_hw[a] for a in self.ris_angle_grid[:, 0]])
        self.ris_el_half_width = np.array([el_hw[e] for e in self.ris_angle_grid[:, 1]])

    @property
    def n_bs_angles(self) -> int:
        return self.bs_aoa_grid.size

    @property
    def n_ris_angles(self) -> int:
        return self.ris_angle_grid.shape[0]

    @staticmethod
    def build(
        road_origin: Position3,
        road_direction,
        grid_count: int,
        grid_length: float,
        n_bs_angles: int,
        n_ris_az: int,
        n_ris_el: int,
    ) -> "GridSpec":
        """Construct the grid with sin-law angle grids of the given sizes.

        Odd angle-grid sizes keep every grid angle strictly inside the
        principal range; an even size would place one point exactly at the
        range edge (sine of 1).
        """
        bs = np.arcsin(sin_law_grid(n_bs_angles))
        az = np.arcsin(sin_law_grid(n_ris_az))
        el = np.arcsin(sin_law_grid(n_ris_el))
        pairs = np.stack(
            [np.repeat(az, n_ris_el), np.tile(el, n_ris_az)], axis=1
        )
        return GridSpec(
            road_origin=road_origin,
            road_direction=road_direction,
            grid_count=grid_count,
            grid_length=grid_length,
            bs_aoa_grid=bs,
            ris_angle_grid=pairs,
        )


@dataclass
class OffsetEstimate:
    """Continuous offsets around the location and angle grids.

    delta_r is measured along the road direction in meters and is bounded by
    half a grid cell; the angle offsets are in radians, bounded by half the
    local grid spacing. All arrays are zero-initialized.
    """

    delta_r: np.ndarray  # (M, U)
    delta_omega: np.ndarray  # (M, K~)
    delta_phi: np.ndarray  # (M, N~)
    delta_theta: np.ndarray  # (M, N~)

    @staticmethod
    def zeros(n_vue: int, grid: GridSpec) -> "OffsetEstimate":
        return OffsetEstimate(
            delta_r=np.zeros((n_vue, grid.grid_count)),
            delta_omega=np.zeros((n_vue, grid.n_bs_angles)),
            delta_phi=np.zeros((n_vue, grid.n_ris_angles)),
            delta_theta=np.zeros((n_vue, grid.n_ris_angles)),
        )

    def copy(self) -> "OffsetEstimate":
        return OffsetEstimate(
            self.delta_r.copy(),
            self.delta_omega.copy(),
            self.delta_phi.copy(),
            self.delta_theta.copy(),
        )

    def validate(self, grid: GridSpec):
        """Raise InvalidOffsetError if any offset exceeds its half spacing."""
        tol = 1e-12
        if np.any(np.abs(self.delta_r) > grid.grid_length / 2 + tol):
            raise InvalidOffsetError("delta_r exceeds half a grid cell")
        if np.any(np.abs(self.delta_omega) > grid.bs_aoa_half_width[None, :] + tol):
            raise InvalidOffsetError("delta_omega exceeds half the angle spacing")
        if np.any(np.abs(self.delta_phi) > grid.ris_az_half_width[None, :] + tol):
            raise InvalidOffsetError("delta_phi exceeds half the angle spacing")
        if np.any(np.abs(self.delta_theta) > grid.ris_el_half_width[None, :] + tol):
            raise InvalidOffsetError("delta_theta exceeds half the angle spacing")

    def clip(self, grid: GridSpec) -> "OffsetEstimate":
        """Return a copy with every offset clipped into its valid range."""
        hw_r = grid.grid_length / 2
        return OffsetEstimate(
            np.clip(self.delta_r, -hw_r, hw_r),
            np.clip(
                self.delta_omega,
                -grid.bs_aoa_half_width[None, :],
                grid.bs_aoa_half_width[None, :],
            ),
            np.clip(
                self.delta_phi,
                -grid.ris_az_half_width[None, :],
                grid.ris_az_half_width[None, :],
            ),
            np.clip(
                self.delta_theta,
                -grid.ris_el_half_width[None, :],
                grid.ris_el_half_width[None, :],
            ),
        )


def steering_ula(omega: float, K: int) -> np.ndarray:
    """Linear-array steering vector [1, e^{-j pi cos w}, ..., e^{-j pi (K-1) cos w}].

    omega is the angle between the incoming direction and the array axis.
    """
    if K < 1:
        raise InvalidDimensionError("K must be >= 1")
    return ula_phase_matrix(np.array([np.cos(omega)]), K)[:, 0]


def steering_upa(phi: float, theta: float, n_x: int, n_y: int) -> np.ndarray:
    """Planar-array steering vector: Kronecker product of two ULA factors.

    phi and theta are the angles from the horizontal and vertical array axes.
    """
    if n_x < 1 or n_y < 1:
        raise InvalidDimensionError("array dimensions must be >= 1")
    return upa_phase_matrix(
        np.array([np.cos(phi)]), np.array([np.cos(theta)]), n_x, n_y
    )[:, 0]


def unit_direction(p, anchor) -> np.ndarray:
    """Unit vector from anchor toward p."""
    p = p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=np.float64)
    a = (
        anchor.as_array()
        if isinstance(anchor, Position3)
        else np.asarray(anchor, dtype=np.float64)
    )
    d = p - a
    n = np.linalg.norm(d)
    if n == 0:
        raise DegenerateGeometryError("point coincides with the array anchor")
    return d / n


def angles_from_position(p, anchor) -> tuple[float, float]:
    """Azimuth/elevation of p seen from anchor, measured from the array axes.

    Azimuth is the angle from the horizontal (road-parallel, x) axis and
    doubles as the linear-array angle of arrival; elevation is the angle from
    the vertical (z) axis.
    """
    d = unit_direction(p, anchor)
    return float(np.arccos(np.clip(d[0], -1, 1))), float(np.arccos(np.clip(d[2], -1, 1)))


def aoa_from_position(p, anchor) -> float:
    """Angle of arrival at a road-parallel linear array (axis angle)."""
    return angles_from_position(p, anchor)[0]


def position_from_angles(
    anchor, azimuth: float, elevation: float, distance: float, y_sign: float = 1.0
) -> np.ndarray:
    """Inverse of angles_from_position up to the mirror across the array plane.

    y_sign picks the half-space for the component the two axis angles leave
    undetermined.
    """
    cx = np.cos(azimuth)
    cz = np.cos(elevation)
    rem = 1.0 - cx * cx - cz * cz
    if rem < -1e-12:
        raise DegenerateGeometryError("incompatible azimuth/elevation pair")
    cy = np.sign(y_sign) * np.sqrt(max(rem, 0.0))
    a = (
        anchor.as_array()
        if isinstance(anchor, Position3)
        else np.asarray(anchor, dtype=np.float64)
    )
    return a + distance * np.array([cx, cy, cz])


def nearest_grid(p, grid: GridSpec) -> tuple[int, float]:
    """Nearest road-grid index and the signed along-road offset to p.

    The projection may overhang the grid by half a cell on each end; ties at
    an exact midpoint resolve to the lower index (offset +cell/2).
    """
    p = p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=np.float64)
    s = float((p - grid.road_origin.as_array()) @ grid.road_direction)
    dl = grid.grid_length
    u = int(np.floor(s / dl + 0.5))
    offset = s - u * dl
    if offset == -dl / 2:  # exact midpoint: prefer the lower index
        u -= 1
        offset = dl / 2
    if u < 0 or u >= grid.grid_count:
        raise OutOfGridError(
            f"projection {s:.3f} m falls outside the grid (U={grid.grid_count})"
        )
    return u, offset


def project_on_road(p, grid: GridSpec) -> float:
    """Along-road coordinate of p relative to the grid origin."""
    p = p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=np.float64)
    return float((p - grid.road_origin.as_array()) @ grid.road_direction)
