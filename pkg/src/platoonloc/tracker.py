"""Outer tracking loop: surrogate evaluation, offset line search, and the
per-slot recursion that alternates posterior updates with offset updates.

The surrogate is the offset-dependent part of the evidence lower bound, the
expected log-likelihood under the current posteriors. Offsets enter through
the dictionary columns only, so perturbed evaluations patch single columns
instead of rebuilding the dictionaries.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    SceneData,
    SensingMatrices,
    bs_los_columns,
    ris_los_columns,
    synthesize_scene,
)
from .config import ScenarioConfig
from .errors import NumericalError
from .geometry import OffsetEstimate
from .kernels import ula_phase_matrix, upa_phase_matrix
from .priors import (
    BernoulliC,
    CategoricalQ,
    cross_slot_priors,
    initial_priors,
    spatial_kernel_matrix,
)
from .vbi import (
    GaussianPosterior,
    MessageSet,
    PosteriorSet,
    VbiOptions,
    e_step,
    hpd_solve,
    scale_hyperparams,
)

_LOG_PI = np.log(np.pi)


@dataclass
class Coordinate:
    """One scalar offset coordinate selected for optimization."""

    kind: str  # r | omega | phi | theta
    m: int
    idx: int
    scale: float  # local grid spacing
    lo: float
    hi: float


@dataclass
class TrackerState:
    """State carried across slots: offsets, posteriors, chain messages."""

    offsets: OffsetEstimate
    post: PosteriorSet | None
    msgs: MessageSet | None
    psi_q: CategoricalQ
    psi_c: BernoulliC


@dataclass
class SlotRecord:
    """Per-slot diagnostics of one tracked scene."""

    iterations: int
    converged: bool
    iteration_positions: list  # per outer iteration: (M, 3) estimates
    surrogate_values: list


@dataclass
class TrackingResult:
    """Tracked positions and diagnostics across seeds, slots, and vehicles."""

    method: str
    estimates: np.ndarray  # (S, T, M, 3)
    truths: np.ndarray  # (S, T, M, 3)
    rmse: float
    rmse_per_slot: np.ndarray  # (T,)
    iterations: np.ndarray  # (S, T)
    converged: np.ndarray  # (S, T) bool
    runtime_s: float
    records: list = field(default_factory=list)


def _pilot_column(pilots_row: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Stack one response over the pilot sequence (pilot-major rows)."""
    return np.outer(pilots_row, response).reshape(-1)


class ColumnBuilder:
    """Builds single dictionary columns at arbitrary offsets."""

    def __init__(self, scene: SceneData, mats: SensingMatrices):
        self.scene = scene
        self.mats = mats
        cfg = scene.config
        self._h_tilde = (
            scene.h_rb * scene.ris.theta[None, :] if cfg.ris_enabled else None
        )

    def _touched_columns(self, coord: Coordinate):
        """(block, local column) pairs affected by one offset coordinate."""
        m, idx = coord.m, coord.idx
        n_grid = self.mats.n_grid
        if coord.kind == "r":
            cols = [("zb", m * n_grid + idx)]
            if self.mats.ris_enabled:
                cols.append(("zr", m * n_grid + idx))
            return cols
        if coord.kind == "omega":
            return [("v", self.mats.v_column("B", m, idx))]
        return [("v", self.mats.v_column("R", m, idx))]

    def _build_column(self, block: str, col: int, offsets: OffsetEstimate):
        """One dictionary column (by in-block index) at the given offsets."""
        scene, cfg = self.scene, self.scene.config
        grid = scene.grid
        if block in ("zb", "zr"):
            m, u = divmod(col, self.mats.n_grid)
            point = (
                grid.grid_points[u] + offsets.delta_r[m, u] * grid.road_direction
            )[None, :]
            if block == "zb":
                a, _ = bs_los_columns(
                    point, np.asarray(cfg.bs_position, float), cfg.n_bs_antennas
                )
                return _pilot_column(scene.pilots[m], a[:, 0])
            a, _ = ris_los_columns(
                point, np.asarray(cfg.ris_position, float), cfg.n_ris_h, cfg.n_ris_v
            )
            return _pilot_column(scene.pilots[m], self._h_tilde @ a[:, 0])
        # scatterer column: cascaded block first when present, then direct
        n_ris_total = (
            self.mats.n_vue * self.mats.n_ris_angles if self.mats.ris_enabled else 0
        )
        if self.mats.ris_enabled and col < n_ris_total:
            m, n = divmod(col, self.mats.n_ris_angles)
            az, el = grid.ris_angle_grid[n]
            xi_h = np.sin(az + offsets.delta_phi[m, n])
            xi_v = np.sin(el + offsets.delta_theta[m, n])
            a = upa_phase_matrix(
                np.array([xi_h]), np.array([xi_v]), cfg.n_ris_h, cfg.n_ris_v
            )[:, 0]
            return _pilot_column(scene.pilots[m], self._h_tilde @ a)
        m, k = divmod(col - n_ris_total, self.mats.n_bs_angles)
        xi = np.sin(grid.bs_aoa_grid[k] + offsets.delta_omega[m, k])
        resp = ula_phase_matrix(np.array([xi]), cfg.n_bs_antennas)[:, 0]
        return _pilot_column(scene.pilots[m], resp)


class SurrogateWorkspace(ColumnBuilder):
    """Evaluates the expected log-likelihood under column perturbations.

    Holds the base dictionaries, residual, and quadratic terms at a given
    offset state; ``value_with`` patches a handful of columns and returns the
    perturbed surrogate in O(KG * D) per patched column.
    """

    def __init__(self, scene: SceneData, y: np.ndarray, post: PosteriorSet, mats: SensingMatrices):
        super().__init__(scene, mats)
        self.post = post
        self.kg = y.size
        self.kappa = float(post.kappa.mean()[0])
        self.kappa_log = float(post.kappa.mean_log()[0])
        cfg = scene.config
        self.blocks = {}
        if cfg.ris_enabled:
            self.blocks["zr"] = (mats.f_ris, post.z_r)
        self.blocks["zb"] = (mats.f_bs, post.z_b)
        self.blocks["v"] = (mats.Xi, post.v)
        self.r0 = y - mats.F @ post.mu_z_stacked() - mats.Xi @ post.v.mean
        self.base_quad = {
            name: float(np.sum(g.cov * mats.gram(name).T).real)
            for name, (_, g) in self.blocks.items()
        }
        # Sigma A^H, so one patched column costs O(KG) instead of O(KG * D)
        self.sigma_proj = {
            name: np.ascontiguousarray(g.cov @ A.conj().T)
            for name, (A, g) in self.blocks.items()
        }

    def base_value(self) -> float:
        e = float(np.vdot(self.r0, self.r0).real) + sum(self.base_quad.values())
        return self.kg * (self.kappa_log - _LOG_PI) - self.kappa * e

    def value_with(self, changes: list[tuple[str, int, np.ndarray]]) -> float:
        """Surrogate after replacing dictionary columns; base state untouched."""
        r = self.r0.copy()
        quad = dict(self.base_quad)
        per_block: dict[str, dict[int, np.ndarray]] = {}
        for name, j, col in changes:
            per_block.setdefault(name, {})[j] = col
        for name, cols in per_block.items():
            A, gauss = self.blocks[name]
            Sigma = gauss.cov
            sig_proj = self.sigma_proj[name]
            for j, col in cols.items():
                d = col - A[:, j]
                r -= d * gauss.mean[j]
                dq = 2.0 * float((sig_proj[j, :] @ d).real) + float(
                    Sigma[j, j].real
                ) * float(np.vdot(d, d).real)
                quad[name] += dq
            if len(cols) > 1:
                # cross terms between simultaneously patched columns
                idx = list(cols.keys())
                for a_i, ja in enumerate(idx):
                    da = cols[ja] - A[:, ja]
                    for jb in idx[a_i + 1 :]:
                        db = cols[jb] - A[:, jb]
                        quad[name] += 2.0 * float(
                            (np.vdot(da, db) * Sigma[jb, ja]).real
                        )
        e = float(np.vdot(r, r).real) + sum(quad.values())
        return self.kg * (self.kappa_log - _LOG_PI) - self.kappa * e

    def value_at(
        self, coords: list[Coordinate], values: np.ndarray, offsets: OffsetEstimate
    ) -> float:
        """Surrogate with the selected coordinates set to the given values.

        Coordinates sharing a dictionary column (azimuth and elevation of the
        same scatterer entry) are composed before the column is rebuilt.
        """
        trial = offsets.copy()
        touched: set[tuple[str, int]] = set()
        for coord, val in zip(coords, values):
            _set_coordinate(trial, coord, float(val))
            touched.update(self._touched_columns(coord))
        changes = [
            (block, j, self._build_column(block, j, trial))
            for block, j in sorted(touched)
        ]
        return self.value_with(changes)


def surrogate_value(
    offsets: OffsetEstimate, post: PosteriorSet, y: np.ndarray, scene: SceneData
) -> float:
    """Expected log-likelihood at the given offsets under fixed posteriors.

    Offset-independent prior and entropy terms are dropped; comparisons
    across offsets are exact, absolute values are not the full bound.
    """
    offsets.validate(scene.grid)
    mats = scene.sensing_at(offsets, validate=False)
    ws = SurrogateWorkspace(scene, y, post, mats)
    if not np.isfinite(ws.base_value()):
        raise NumericalError("surrogate is not finite")
    return ws.base_value()


def _coordinate_value(offsets: OffsetEstimate, coord: Coordinate) -> float:
    arr = getattr(offsets, f"delta_{coord.kind}" if coord.kind != "r" else "delta_r")
    return float(arr[coord.m, coord.idx])


def _set_coordinate(offsets: OffsetEstimate, coord: Coordinate, value: float):
    arr = getattr(offsets, f"delta_{coord.kind}" if coord.kind != "r" else "delta_r")
    arr[coord.m, coord.idx] = value


def select_coordinates(
    post: PosteriorSet, scene: SceneData, opts
) -> list[Coordinate]:
    """Offset coordinates worth optimizing under the current posteriors.

    Location offsets of the top-p grid cells per vehicle by posterior mass;
    scatterer-angle offsets where the support probability clears the
    threshold. Cells with negligible mass keep zero offsets (the surrogate
    is flat there).
    """
    grid = scene.grid
    cfg = scene.config
    coords: list[Coordinate] = []
    half_cell = grid.grid_length / 2
    for m in range(cfg.n_vue):
        pi_row = post.q.pi[m]
        top = np.argsort(pi_row)[::-1][: opts.top_p_location]
        for u in top:
            if pi_row[u] < 1e-6:
                continue
            coords.append(
                Coordinate("r", m, int(u), grid.grid_length, -half_cell, half_cell)
            )
    # support vector layout matches v: cascaded entries of all vehicles, then
    # direct entries of all vehicles
    p = post.c.p.reshape(-1)
    n_ris_total = cfg.n_vue * grid.n_ris_angles if cfg.ris_enabled else 0
    for m in range(cfg.n_vue):
        if cfg.ris_enabled:
            ris_p = p[m * grid.n_ris_angles : (m + 1) * grid.n_ris_angles]
            order = np.argsort(ris_p)[::-1][: opts.max_nlos_offsets]
            for n in order:
                if ris_p[n] < opts.nlos_offset_threshold:
                    continue
                hw_a = grid.ris_az_half_width[n]
                hw_b = grid.ris_el_half_width[n]
                coords.append(Coordinate("phi", m, int(n), 2 * hw_a, -hw_a, hw_a))
                coords.append(Coordinate("theta", m, int(n), 2 * hw_b, -hw_b, hw_b))
        bs_p = p[n_ris_total + m * grid.n_bs_angles : n_ris_total + (m + 1) * grid.n_bs_angles]
        order = np.argsort(bs_p)[::-1][: opts.max_nlos_offsets]
        for k in order:
            if bs_p[k] < opts.nlos_offset_threshold:
                continue
            hw = grid.bs_aoa_half_width[k]
            coords.append(Coordinate("omega", m, int(k), 2 * hw, -hw, hw))
    return coords


def fd_gradient(
    ws: SurrogateWorkspace,
    offsets: OffsetEstimate,
    coords: list[Coordinate],
    h_rel: float = 1e-5,
) -> np.ndarray:
    """Central finite-difference gradient over the selected coordinates.

    The step is h_rel times each coordinate's grid spacing; coordinates
    sitting at a bound fall back to a one-sided difference.
    """
    g = np.zeros(len(coords))
    for i, coord in enumerate(coords):
        x0 = _coordinate_value(offsets, coord)
        h = h_rel * coord.scale
        hi = min(x0 + h, coord.hi)
        lo = max(x0 - h, coord.lo)
        if hi <= lo:
            continue
        f_hi = ws.value_at([coord], np.array([hi]), offsets)
        f_lo = ws.value_at([coord], np.array([lo]), offsets)
        g[i] = (f_hi - f_lo) / (hi - lo)
    return g


def surrogate_gradient(
    offsets: OffsetEstimate,
    post: PosteriorSet,
    y: np.ndarray,
    scene: SceneData,
    coords: list[Coordinate] | None = None,
    h_rel: float = 1e-5,
) -> tuple[np.ndarray, list[Coordinate]]:
    """Finite-difference surrogate gradient over the active coordinates."""
    offsets.validate(scene.grid)
    mats = scene.sensing_at(offsets, validate=False)
    ws = SurrogateWorkspace(scene, y, post, mats)
    if coords is None:
        coords = select_coordinates(post, scene, scene.config.algo)
    return fd_gradient(ws, offsets, coords, h_rel), coords


def armijo_ascent(
    f,
    x0: np.ndarray,
    grad_fn,
    scales: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    init_step: float = 1.0,
    contraction: float = 0.5,
    c1: float = 1e-4,
    max_backtracks: int = 20,
    max_steps: int = 1,
    min_gain: float = 0.0,
) -> tuple[np.ndarray, dict]:
    """Projected gradient ascent with Armijo backtracking.

    The search direction is the gradient preconditioned by the squared
    coordinate scales and normalized so a unit step moves the largest
    coordinate by exactly its grid spacing. Steps that fail the
    sufficient-increase test after max_backtracks leave x unchanged and set
    the stall flag. The objective never decreases.
    """
    x = x0.astype(float).copy()
    fx = f(x)
    info = {"stalled": False, "steps": 0, "backtracks": 0, "values": [fx]}
    for _ in range(max_steps):
        g = grad_fn(x)
        d = (scales**2) * g
        if np.linalg.norm(d) == 0:
            break
        d = d / np.max(np.abs(d) / scales)
        step = init_step
        accepted = False
        for _bt in range(max_backtracks + 1):
            x_new = np.clip(x + step * d, lo, hi)
            move = x_new - x
            gain = float(g @ move)
            if gain <= 0:
                break
            f_new = f(x_new)
            if f_new >= fx + c1 * gain:
                gained = f_new - fx
                x, fx = x_new, f_new
                accepted = True
                info["steps"] += 1
                info["values"].append(fx)
                break
            step *= contraction
            info["backtracks"] += 1
        if not accepted:
            info["stalled"] = True
            break
        if gained < min_gain:
            break
    return x, info


def map_support_refit(
    y: np.ndarray, mats: SensingMatrices, post: PosteriorSet
) -> PosteriorSet:
    """Condition the Gaussian layer on the most probable location support.

    Keeps, per vehicle, only the argmax grid cell of each LoS branch, jointly
    refits those coefficients with the scatterer block, and zeroes the rest.
    The full posterior smears energy over neighboring columns whose phases
    are locked to the current offsets, which anchors the offset surrogate at
    its current point; the conditional posterior removes that anchor.
    """
    import copy

    kap = float(post.kappa.mean()[0])
    q_hat = np.argmax(post.q.pi, axis=1)
    m_vue, n_grid = post.q.pi.shape
    sel = np.array([m * n_grid + q_hat[m] for m in range(m_vue)])
    cols = []
    prec = []
    out = copy.deepcopy(post)
    if mats.ris_enabled:
        cols.append(mats.f_ris[:, sel])
        prec.append(post.rho_r.mean()[sel])
    cols.append(mats.f_bs[:, sel])
    prec.append(post.rho_b.mean()[sel])
    cols.append(mats.Xi)
    prec.append(post.gamma.mean())
    A = np.hstack(cols)
    P = np.diag(np.concatenate(prec)).astype(np.complex128)
    cov, _ = hpd_solve(P + kap * (A.conj().T @ A))
    mu = kap * (cov @ (A.conj().T @ y))

    k = 0
    if mats.ris_enabled:
        out.z_r = GaussianPosterior.zeros(m_vue * n_grid)
        out.z_r.mean[sel] = mu[k : k + m_vue]
        out.z_r.cov[np.ix_(sel, sel)] = cov[k : k + m_vue, k : k + m_vue]
        k += m_vue
    out.z_b = GaussianPosterior.zeros(m_vue * n_grid)
    out.z_b.mean[sel] = mu[k : k + m_vue]
    out.z_b.cov[np.ix_(sel, sel)] = cov[k : k + m_vue, k : k + m_vue]
    k += m_vue
    out.v = GaussianPosterior(mu[k:], cov[k:, k:])
    return out


class ProfileObjective:
    """Offset objective with the supported coefficients re-fit per evaluation.

    Holding the Gaussian means fixed anchors the surrogate's phase structure
    at the current offsets and caps every line-search step at the ripple
    scale. Re-solving the small MAP system over the selected LoS entries and
    the active scatterer entries inside each evaluation removes the anchor;
    this is block-coordinate ascent on the joint surrogate over the offsets
    and the Gaussian factor.
    """

    def __init__(self, scene: SceneData, y: np.ndarray, post: PosteriorSet, mats: SensingMatrices):
        self.scene = scene
        self.mats = mats
        self.y = y
        self.kappa = float(post.kappa.mean()[0])
        self.kappa_log = float(post.kappa.mean_log()[0])
        self._ws_builder = ColumnBuilder(scene, mats)
        m_vue, n_grid = post.q.pi.shape
        q_hat = np.argmax(post.q.pi, axis=1)
        sel = [m * n_grid + int(q_hat[m]) for m in range(m_vue)]
        self.columns: list[tuple[str, int]] = []
        prec = []
        if mats.ris_enabled:
            self.columns += [("zr", j) for j in sel]
            prec.append(post.rho_r.mean()[sel])
        self.columns += [("zb", j) for j in sel]
        prec.append(post.rho_b.mean()[sel])
        active = np.where(post.c.p.reshape(-1) > 0.5)[0]
        self.columns += [("v", int(j)) for j in active]
        prec.append(post.gamma.mean()[active])
        self.prior_prec = np.concatenate(prec) if prec else np.zeros(0)
        self.y_energy = float(np.vdot(y, y).real)

    def value(self, offsets: OffsetEstimate) -> float:
        """Profile surrogate: expected log-likelihood at the refit optimum."""
        if not self.columns:
            return -self.kappa * self.y_energy
        A = np.stack(
            [self._ws_builder._build_column(b, j, offsets) for b, j in self.columns],
            axis=1,
        )
        P = np.diag(self.prior_prec).astype(np.complex128)
        G = A.conj().T @ A
        rhs = A.conj().T @ self.y
        cov, _ = hpd_solve(P + self.kappa * G)
        mu = self.kappa * (cov @ rhs)
        fit = (
            self.y_energy
            - 2.0 * float(np.vdot(rhs, mu).real)
            + float(np.vdot(mu, G @ mu).real)
        )
        return self.y.size * (self.kappa_log - _LOG_PI) - self.kappa * max(fit, 0.0)

    def value_at(
        self, coords: list[Coordinate], values: np.ndarray, offsets: OffsetEstimate
    ) -> float:
        trial = offsets.copy()
        for coord, val in zip(coords, values):
            _set_coordinate(trial, coord, float(val))
        return self.value(trial)


def m_step(
    offsets: OffsetEstimate,
    post: PosteriorSet,
    y: np.ndarray,
    scene: SceneData,
    opts=None,
) -> tuple[OffsetEstimate, dict]:
    """One inexact offset-maximization step with Armijo backtracking.

    The objective is the profile surrogate of ProfileObjective. Returns
    updated offsets (clipped to their bounds) and step diagnostics; the
    objective value never decreases over accepted steps.
    """
    cfg = scene.config
    algo = opts or cfg.algo
    arm = algo.armijo
    mats = scene.sensing_at(offsets, validate=False)
    obj = ProfileObjective(scene, y, post, mats)
    coords = select_coordinates(post, scene, algo)
    if not coords:
        return offsets, {
            "stalled": False,
            "steps": 0,
            "coords": 0,
            "changes": [],
            "values": [obj.value(offsets)],
            "value": obj.value(offsets),
        }

    x0 = np.array([_coordinate_value(offsets, c) for c in coords])
    scales = np.array([c.scale for c in coords])
    lo = np.array([c.lo for c in coords])
    hi = np.array([c.hi for c in coords])

    def f(x):
        return obj.value_at(coords, x, offsets)

    def grad_fn(x):
        g = np.zeros(len(coords))
        h_rel = algo.fd_step_rel
        for i, coord in enumerate(coords):
            h = h_rel * coord.scale
            x_hi, x_lo = x.copy(), x.copy()
            x_hi[i] = min(x[i] + h, coord.hi)
            x_lo[i] = max(x[i] - h, coord.lo)
            if x_hi[i] <= x_lo[i]:
                continue
            g[i] = (f(x_hi) - f(x_lo)) / (x_hi[i] - x_lo[i])
        return g

    x_new, info = armijo_ascent(
        f,
        x0,
        grad_fn,
        scales,
        lo,
        hi,
        init_step=arm.init_step,
        contraction=arm.contraction,
        c1=arm.c1,
        max_backtracks=arm.max_backtracks,
        max_steps=max(algo.m_substeps, 1),
        min_gain=1e-5 * (1.0 + abs(obj.value(offsets))),
    )
    out = offsets.copy()
    for coord, val in zip(coords, x_new):
        _set_coordinate(out, coord, float(val))
    out = out.clip(scene.grid)
    info["coords"] = len(coords)
    info["value"] = info["values"][-1]
    if info["steps"] > 0:
        touched: set[tuple[str, int]] = set()
        for coord in coords:
            touched.update(obj._ws_builder._touched_columns(coord))
        info["changes"] = [
            (block, j, obj._ws_builder._build_column(block, j, out))
            for block, j in sorted(touched)
        ]
    else:
        info["changes"] = []
    return out, info


def _activity_rate_vector(scene: SceneData) -> np.ndarray:
    """Stationary support activity per scatterer entry, aligned with v."""
    cfg = scene.config
    grid = scene.grid
    rates = []
    if cfg.ris_enabled:
        rates.append(
            np.full(cfg.n_vue * grid.n_ris_angles, cfg.nlos.l_ris / grid.n_ris_angles)
        )
    rates.append(np.full(cfg.n_vue * grid.n_bs_angles, cfg.nlos.l_bs / grid.n_bs_angles))
    return np.concatenate(rates)


def initial_state(scene: SceneData) -> TrackerState:
    cfg = scene.config
    pi, c = initial_priors(cfg.n_vue, cfg.n_grid, _activity_rate_vector(scene))
    return TrackerState(
        offsets=OffsetEstimate.zeros(cfg.n_vue, scene.grid),
        post=None,
        msgs=None,
        psi_q=pi,
        psi_c=c,
    )


def extract_positions(
    post: PosteriorSet, offsets: OffsetEstimate, scene: SceneData
) -> tuple[np.ndarray, np.ndarray]:
    """Grid index of maximum posterior mass plus its offset, per vehicle."""
    grid = scene.grid
    q_hat = np.argmax(post.q.pi, axis=1)
    pos = np.empty((q_hat.size, 3))
    for m, u in enumerate(q_hat):
        pos[m] = grid.grid_points[u] + offsets.delta_r[m, u] * grid.road_direction
    return q_hat, pos


def track_slot(
    y: np.ndarray,
    state: TrackerState,
    scene: SceneData,
    slot: int,
    vbi_opts: VbiOptions,
) -> tuple[TrackerState, np.ndarray, SlotRecord]:
    """Run the estimation/offset alternation for one slot.

    Builds this slot's priors from the carried posteriors, alternates the
    posterior updates with offset steps until the four relative-change
    criteria hold or the iteration cap is reached, then extracts positions
    and forwards the location and support posteriors to the next slot.
    """
    cfg = scene.config
    algo = cfg.algo
    kg = y.size
    scale = float(np.linalg.norm(y)) / np.sqrt(kg)
    if scale <= 0 or not np.isfinite(scale):
        scale = 1.0
    y_n = y / scale

    if slot == 0:
        prior_q, prior_c = initial_priors(
            cfg.n_vue, cfg.n_grid, _activity_rate_vector(scene)
        )
    else:
        prior_q, prior_c = cross_slot_priors(
            state.psi_q,
            state.psi_c,
            cfg.platoon_params(),
            cfg.nlos.rho_corr,
            _activity_rate_vector(scene),
        )

    offsets = OffsetEstimate.zeros(cfg.n_vue, scene.grid)
    post = None
    msgs = None
    record = SlotRecord(0, False, [], [])
    prev = None
    converged = False
    offsets_settled = False
    mats = scene.sensing_at(offsets, validate=False)
    hyper = scale_hyperparams(cfg.hyper, y_n, mats)
    r = 0
    for r in range(1, algo.r_max + 1):
        # hold the scatterer support at its prior until the offsets have had
        # a chance to remove the dictionary mismatch it would otherwise absorb
        vbi_opts.freeze_support = algo.estimate_offsets and r <= 2
        post, msgs = e_step(
            y_n, mats, prior_q, prior_c, hyper, vbi_opts, init=post, messages=msgs
        )
        _, pos = extract_positions(post, offsets, scene)
        record.iteration_positions.append(pos)

        if prev is not None:
            def rel(a, b, floor=1e-12):
                return float(np.linalg.norm(a - b)) / max(float(np.linalg.norm(b)), floor)

            sig_z = np.concatenate(
                [np.asarray(g.cov).reshape(-1) for _, g, _ in post.z_branches()]
            )
            # scatterer-block denominators are floored at a percent of the
            # LoS scale so a near-empty block cannot stall convergence
            mu_floor = 1e-2 * float(np.linalg.norm(prev["mu_z"]))
            sig_floor = 1e-2 * float(np.linalg.norm(prev["sig_z"]))
            crit = (
                rel(post.mu_z_stacked(), prev["mu_z"]) <= algo.eps_mu_z
                and rel(post.v.mean, prev["mu_v"], mu_floor) <= algo.eps_mu_v
                and rel(sig_z, prev["sig_z"]) <= algo.eps_sigma_z
                and rel(post.v.cov.reshape(-1), prev["sig_v"], sig_floor) <= algo.eps_sigma_v
            )
            if crit:
                converged = True
                break
        prev = {
            "mu_z": post.mu_z_stacked().copy(),
            "mu_v": post.v.mean.copy(),
            "sig_z": np.concatenate(
                [np.asarray(g.cov).reshape(-1) for _, g, _ in post.z_branches()]
            ).copy(),
            "sig_v": post.v.cov.reshape(-1).copy(),
        }

        if algo.estimate_offsets and not offsets_settled:
            before = offsets
            offsets, step_info = m_step(offsets, post, y_n, scene)
            record.surrogate_values.append(step_info.get("value"))
            moved = max(
                float(np.abs(offsets.delta_r - before.delta_r).max()),
                float(np.abs(offsets.delta_omega - before.delta_omega).max()),
                float(np.abs(offsets.delta_phi - before.delta_phi).max()),
                float(np.abs(offsets.delta_theta - before.delta_theta).max()),
            )
            if step_info["changes"]:
                mats = mats.with_columns(step_info["changes"])
            if moved < 1e-3 * scene.grid.grid_length:
                offsets_settled = True  # stop churning the dictionaries

    record.iterations = r
    record.converged = converged
    q_hat, pos = extract_positions(post, offsets, scene)
    new_state = TrackerState(
        offsets=offsets,
        post=post,
        msgs=msgs,
        psi_q=CategoricalQ(msgs.belief.copy() if not vbi_opts.iid_priors else post.q.pi.copy()),
        psi_c=BernoulliC(post.c.p.copy()),
    )
    return new_state, pos, record


def make_vbi_options(cfg: ScenarioConfig, iid_priors: bool = False) -> VbiOptions:
    return VbiOptions(
        tol=cfg.algo.inner_tol,
        max_iters=cfg.algo.inner_iters,
        cross_branch_residual=cfg.algo.cross_branch_residual,
        iid_priors=iid_priors,
        exchange_messages=not iid_priors,
        spatial_kernel=spatial_kernel_matrix(cfg.platoon_params(), cfg.n_grid),
    )


def track_scene(scene: SceneData, vbi_opts: VbiOptions | None = None):
    """Track one scene; returns (estimates (T, M, 3), records)."""
    cfg = scene.config
    opts = vbi_opts or make_vbi_options(cfg)
    state = initial_state(scene)
    estimates = np.empty((cfg.n_slots, cfg.n_vue, 3))
    records = []
    ys = scene.y
    for t in range(cfg.n_slots):
        state, pos, rec = track_slot(ys[t], state, scene, t, opts)
        estimates[t] = pos
        records.append(rec)
    return estimates, records


def run_tracker(config: ScenarioConfig, method: str = "tracker") -> TrackingResult:
    """Monte-Carlo tracking over the configured number of realizations.

    Aggregates the root-mean-square position error over slots, realizations,
    and vehicles. ``method`` may disable offset estimation ("no-offgrid").
    """
    cfg = config
    t0 = time.perf_counter()
    S, T, M = cfg.n_realizations, cfg.n_slots, cfg.n_vue
    estimates = np.empty((S, T, M, 3))
    truths = np.empty((S, T, M, 3))
    iterations = np.empty((S, T), dtype=int)
    converged = np.empty((S, T), dtype=bool)
    records = []
    for s in range(S):
        scene = synthesize_scene(cfg, seed=s)
        ests, recs = track_scene(scene)
        estimates[s] = ests
        truths[s] = scene.trajectory.positions
        iterations[s] = [r.iterations for r in recs]
        converged[s] = [r.converged for r in recs]
        records.append(recs)
    err2 = np.sum((estimates - truths) ** 2, axis=3)
    rmse = float(np.sqrt(err2.mean()))
    rmse_per_slot = np.sqrt(err2.mean(axis=(0, 2)))
    return TrackingResult(
        method=method,
        estimates=estimates,
        truths=truths,
        rmse=rmse,
        rmse_per_slot=rmse_per_slot,
        iterations=iterations,
        converged=converged,
        runtime_s=time.perf_counter() - t0,
        records=records,
    )
