"""Dilution-of-precision analytics for linear, planar, and cascaded arrays.

Angles here are broadside-referenced: zero means perpendicular incidence and
the formulas lose all information at +-pi/2. A numeric Fisher-information
oracle built from finite-difference Jacobians validates the closed forms.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import C_LIGHT
from .errors import EmptyDataError, NumericalError

SQRT_1_5 = np.sqrt(1.5)


def fim_aoa_ula(omega: float, gain_mag: float, sigma2: float, n_antennas: int) -> float:
    """Fisher information of a linear array's arrival angle (exact sum form).

    (2 / sigma^2) (pi cos w)^2 |gain|^2 sum_k (k-1)^2.
    """
    if n_antennas < 1:
        raise ValueError("antenna count must be >= 1")
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    k = np.arange(n_antennas)
    return float(
        2.0 / sigma2 * (np.pi * np.cos(omega)) ** 2 * gain_mag**2 * np.sum(k**2)
    )


def crlb_ula(omega: float, gain_mag: float, sigma2: float, n_antennas: int) -> float:
    """Angle error bound from the large-array information 2 K^3 / 3."""
    c = np.cos(omega)
    if abs(c) < 1e-12 or gain_mag == 0 or n_antennas < 2:
        return np.inf
    return 3.0 * sigma2 / (2.0 * n_antennas**3 * (np.pi * c) ** 2 * gain_mag**2)


def gdop_ula(
    omega: float, d: float, sigma: float, n_antennas: int, f_c: float, zeta: float
) -> float:
    """Position-error scaling of a single linear array."""
    c = np.cos(omega)
    if c <= 0:
        return np.inf
    return float(
        SQRT_1_5
        / np.pi
        * (C_LIGHT / (4 * np.pi)) ** (-zeta)
        * sigma
        * n_antennas ** (-1.5)
        * f_c**zeta
        * d ** (1 + zeta)
        / c
    )


def gdop_upa(
    phi: float,
    theta: float,
    d: float,
    sigma: float,
    n_h: int,
    n_v: int,
    f_c: float,
    zeta: float,
) -> float:
    """Planar array: n_v independent row observations of an n_h-element array."""
    cc = np.cos(phi) * np.cos(theta)
    if cc <= 0:
        return np.inf
    return float(
        SQRT_1_5
        / np.pi
        * (C_LIGHT / (4 * np.pi)) ** (-zeta)
        * sigma
        * n_h ** (-1.5)
        * n_v ** (-0.5)
        * f_c**zeta
        * d ** (1 + zeta)
        / cc
    )


def gdop_ris(
    phi: float,
    theta: float,
    d_mr: float,
    sigma: float,
    n_h: int,
    n_v: int,
    n_bs_antennas: int,
    f_c: float,
    zeta_mr: float,
    pl_rb_mag: float,
) -> float:
    """Cascaded-surface form: the planar result scaled by the relay link."""
    if pl_rb_mag <= 0:
        raise ValueError("relay gain magnitude must be positive")
    return float(
        pl_rb_mag ** (-1)
        * n_bs_antennas ** (-0.5)
        * gdop_upa(phi, theta, d_mr, sigma, n_h, n_v, f_c, zeta_mr)
    )


def gdop_combined(gdop_a: float, gdop_b: float) -> float:
    """Harmonic combination of two independent anchors."""
    if gdop_a < 0 or gdop_b < 0:
        raise ValueError("GDOP values must be nonnegative")
    if np.isinf(gdop_a) and np.isinf(gdop_b):
        return np.inf
    if gdop_a == 0 or gdop_b == 0:
        return 0.0
    return 1.0 / (1.0 / gdop_a + 1.0 / gdop_b)


@dataclass
class UlaParams:
    omega: float
    d: float
    sigma: float
    n_antennas: int
    f_c: float
    zeta: float


@dataclass
class RisParams:
    phi: float
    theta: float
    d: float
    sigma: float
    n_h: int
    n_v: int
    n_bs_antennas: int
    f_c: float
    zeta: float
    pl_rb_mag: float


def gdop_ratio(bs: UlaParams, ris: RisParams) -> tuple[float, float]:
    """Single-array over cascaded-surface GDOP: full value and the trimmed
    proportionality |PL| K^-1 n_h^1.5 n_v^0.5."""
    full = gdop_ula(bs.omega, bs.d, bs.sigma, bs.n_antennas, bs.f_c, bs.zeta) / gdop_ris(
        ris.phi,
        ris.theta,
        ris.d,
        ris.sigma,
        ris.n_h,
        ris.n_v,
        ris.n_bs_antennas,
        ris.f_c,
        ris.zeta,
        ris.pl_rb_mag,
    )
    trimmed = (
        ris.pl_rb_mag
        * ris.n_bs_antennas ** (-1.0)
        * ris.n_h**1.5
        * ris.n_v**0.5
    )
    return float(full), float(trimmed)


def fim_numeric_oracle(mean_fn, params, sigma2: float, step: float = 1e-6) -> np.ndarray:
    """Fisher information from a finite-difference Jacobian of the mean map.

    mean_fn maps a parameter vector (angles) to the complex noiseless
    observation mean; returns (2 / sigma^2) Re{J^H J}.
    """
    params = np.atleast_1d(np.asarray(params, dtype=np.float64))
    if step <= 0 or not np.isfinite(step):
        raise NumericalError("finite-difference step underflow")
    cols = []
    for i in range(params.size):
        hi = params.copy()
        lo = params.copy()
        hi[i] += step
        lo[i] -= step
        cols.append((np.asarray(mean_fn(hi)) - np.asarray(mean_fn(lo))) / (2 * step))
    jac = np.stack(cols, axis=1)
    if not np.all(np.isfinite(jac)):
        raise NumericalError("mean map produced non-finite values")
    return (2.0 / sigma2) * (jac.conj().T @ jac).real


@dataclass
class DeploymentSpec:
    """One anchor configuration evaluated over a raster."""

    kind: str  # bs | bs+bs | bs+ris
    bs_position: tuple[float, float, float] = (50.0, 100.0, 25.0)
    second_position: tuple[float, float, float] = (150.0, 0.0, 25.0)
    n_antennas: int = 16
    n_ris_h: int = 16
    n_ris_v: int = 16
    f_c: float = 7e9
    sigma2: float = 1e-13
    zeta_bs: float = 3.0
    zeta_ris: float = 2.5
    pl_rb_mag: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bs", "bs+bs", "bs+ris"):
            raise ValueError(f"unknown deployment kind {self.kind!r}")
        if self.sigma2 <= 0:
            raise ValueError("noise power must be positive")
        if min(self.n_antennas, self.n_ris_h, self.n_ris_v) < 1:
            raise ValueError("array dimensions must be positive")


@dataclass
class GdopReport:
    """GDOP values on a spatial raster, one series per deployment."""

    points: np.ndarray  # (n, 2) x, y on the ground plane
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def rows(self):
        for name, vals in self.values.items():
            for (x, y), g in zip(self.points, vals):
                yield float(x), float(y), name, float(g)

    def to_csv(self, path: str):
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "deployment", "gdop"])
            for x, y, name, g in self.rows():
                w.writerow([f"{x:.6g}", f"{y:.6g}", name, f"{g:.10g}"])


def _broadside_angles(point: np.ndarray, anchor: np.ndarray):
    d = point - anchor
    dist = float(np.linalg.norm(d))
    if dist == 0:
        return 0.0, 0.0, 0.0
    az = float(np.arcsin(np.clip(d[0] / dist, -1, 1)))
    el = float(np.arcsin(np.clip(d[2] / dist, -1, 1)))
    return az, el, dist


def _gdop_single_bs(point, dep: DeploymentSpec, anchor) -> float:
    az, _, dist = _broadside_angles(point, np.asarray(anchor, dtype=float))
    return gdop_ula(az, dist, np.sqrt(dep.sigma2), dep.n_antennas, dep.f_c, dep.zeta_bs)


def gdop_at(point, dep: DeploymentSpec) -> float:
    """GDOP of one deployment at one ground point."""
    point = np.asarray(point, dtype=float)
    if point.size == 2:
        point = np.array([point[0], point[1], 0.0])
    g_bs = _gdop_single_bs(point, dep, dep.bs_position)
    if dep.kind == "bs":
        return g_bs
    if dep.kind == "bs+bs":
        return gdop_combined(g_bs, _gdop_single_bs(point, dep, dep.second_position))
    az, el, dist = _broadside_angles(point, np.asarray(dep.second_position, dtype=float))
    g_ris = gdop_ris(
        az,
        el,
        dist,
        np.sqrt(dep.sigma2),
        dep.n_ris_h,
        dep.n_ris_v,
        dep.n_antennas,
        dep.f_c,
        dep.zeta_ris,
        dep.pl_rb_mag,
    )
    return gdop_combined(g_bs, g_ris)


def gdop_map(points, deployments: list[DeploymentSpec]) -> GdopReport:
    """Evaluate every deployment's closed-form GDOP over a raster."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise EmptyDataError("raster must be nonempty")
    report = GdopReport(points=points[:, :2].copy())
    for dep in deployments:
        vals = np.array([gdop_at(p, dep) for p in points])
        report.values[dep.kind] = vals
    return report


def raster_grid(x_range, y_range, nx: int, ny: int) -> np.ndarray:
    """Regular (n, 2) raster over the given extents."""
    xs = np.linspace(x_range[0], x_range[1], nx)
    ys = np.linspace(y_range[0], y_range[1], ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
