"""Scene synthesis: platoon motion, multipath channels, pilots, received
signals, and the off-grid sensing dictionaries of the sparse model.

The same response helpers build both the synthesized channels and the
dictionary columns, so a noiseless received signal is reproduced exactly by
the dictionaries evaluated at the true offsets and sparse coefficients.
"""

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .errors import InvalidDimensionError, TrajectoryOverflowError
from .geometry import GridSpec, OffsetEstimate, nearest_grid
from .kernels import ula_phase_matrix, upa_phase_matrix

C_LIGHT = 299792458.0


@dataclass
class RisProfile:
    """Per-element unit-modulus phase shifts of the reflecting surface."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.complex128)
        if np.any(np.abs(np.abs(self.theta) - 1.0) > 1e-9):
            raise ValueError("RIS phases must be unit modulus")


@dataclass
class PlatoonTrajectory:
    """Ground-truth motion: exact positions plus their grid quantization."""

    positions: np.ndarray  # (T, M, 3)
    grid_indices: np.ndarray  # (T, M) int
    road_offsets: np.ndarray  # (T, M) meters along the road from the grid point
    speeds: np.ndarray  # (T, M) m/s


@dataclass
class NlosLinkState:
    """Scatterer state of one VUE-to-array link, persistent across slots."""

    active: np.ndarray  # (n_angles,) bool
    gains: np.ndarray  # (n_angles,) complex, zero where inactive
    offset_a: np.ndarray  # azimuth offset per grid entry, radians
    offset_b: np.ndarray | None = None  # elevation offset for planar arrays


@dataclass
class ChannelRealization:
    """One slot of channels plus the ground-truth sparse description."""

    h_bs: np.ndarray  # (M, K)
    h_ris: np.ndarray | None  # (M, N) or None without a RIS
    beta: np.ndarray  # (M,) direct LoS gains
    eta: np.ndarray | None  # (M,) cascaded LoS gains
    bs_nlos: list[NlosLinkState]
    ris_nlos: list[NlosLinkState] | None


@dataclass
class SensingMatrices:
    """Off-grid dictionaries of the sparse observation model.

    Column order inside every block is VUE-major: the columns of one VUE are
    contiguous and indexed by grid point (LoS) or grid angle (scatterers).
    """

    f_ris: np.ndarray | None
    f_bs: np.ndarray
    xi_ris: np.ndarray | None
    xi_bs: np.ndarray
    n_vue: int
    n_grid: int
    n_ris_angles: int
    n_bs_angles: int

    def __post_init__(self):
        self._cache: dict = {}

    @property
    def ris_enabled(self) -> bool:
        return self.f_ris is not None

    @property
    def F(self) -> np.ndarray:
        if "F" not in self._cache:
            self._cache["F"] = (
                self.f_bs if self.f_ris is None else np.hstack([self.f_ris, self.f_bs])
            )
        return self._cache["F"]

    @property
    def Xi(self) -> np.ndarray:
        if "Xi" not in self._cache:
            self._cache["Xi"] = (
                self.xi_bs if self.xi_ris is None else np.hstack([self.xi_ris, self.xi_bs])
            )
        return self._cache["Xi"]

    def block(self, name: str) -> np.ndarray:
        """Dictionary block by short name: zr, zb, or v (the stacked Xi)."""
        if name == "zr":
            return self.f_ris
        if name == "zb":
            return self.f_bs
        if name == "v":
            return self.Xi
        raise KeyError(name)

    def gram(self, name: str) -> np.ndarray:
        """Cached A^H A of a dictionary block (instances are immutable)."""
        key = f"gram_{name}"
        if key not in self._cache:
            a = self.block(name)
            self._cache[key] = a.conj().T @ a
        return self._cache[key]

    def with_columns(self, changes: list[tuple[str, int, np.ndarray]]) -> "SensingMatrices":
        """A copy with the given (block, column, value) replacements applied."""
        f_ris = None if self.f_ris is None else self.f_ris.copy()
        f_bs = self.f_bs.copy()
        xi_ris = None if self.xi_ris is None else self.xi_ris.copy()
        xi_bs = self.xi_bs.copy()
        n_ris_total = self.n_vue * self.n_ris_angles if self.ris_enabled else 0
        for name, j, col in changes:
            if name == "zr":
                f_ris[:, j] = col
            elif name == "zb":
                f_bs[:, j] = col
            elif name == "v":
                if self.ris_enabled and j < n_ris_total:
                    xi_ris[:, j] = col
                else:
                    xi_bs[:, j - n_ris_total] = col
            else:
                raise KeyError(name)
        return SensingMatrices(
            f_ris=f_ris,
            f_bs=f_bs,
            xi_ris=xi_ris,
            xi_bs=xi_bs,
            n_vue=self.n_vue,
            n_grid=self.n_grid,
            n_ris_angles=self.n_ris_angles,
            n_bs_angles=self.n_bs_angles,
        )

    def z_column(self, branch: str, m: int, u: int) -> int:
        """Column of F holding (branch, VUE m, grid u)."""
        if branch == "R":
            if not self.ris_enabled:
                raise InvalidDimensionError("no cascaded branch in this model")
            return m * self.n_grid + u
        base = self.n_vue * self.n_grid if self.ris_enabled else 0
        return base + m * self.n_grid + u

    def v_column(self, branch: str, m: int, j: int) -> int:
        """Column of Xi holding (branch, VUE m, angle-grid j)."""
        if branch == "R":
            if not self.ris_enabled:
                raise InvalidDimensionError("no cascaded branch in this model")
            return m * self.n_ris_angles + j
        base = self.n_vue * self.n_ris_angles if self.ris_enabled else 0
        return base + m * self.n_bs_angles + j

    def column_map(self) -> dict:
        """Index maps (VUE, grid-or-angle, branch) for both dictionaries."""
        z_branch, z_vue, z_grid = [], [], []
        branches = ["R", "B"] if self.ris_enabled else ["B"]
        for br in branches:
            for m in range(self.n_vue):
                for u in range(self.n_grid):
                    z_branch.append(br)
                    z_vue.append(m)
                    z_grid.append(u)
        v_branch, v_vue, v_angle = [], [], []
        if self.ris_enabled:
            for m in range(self.n_vue):
                for j in range(self.n_ris_angles):
                    v_branch.append("R")
                    v_vue.append(m)
                    v_angle.append(j)
        for m in range(self.n_vue):
            for j in range(self.n_bs_angles):
                v_branch.append("B")
                v_vue.append(m)
                v_angle.append(j)
        return {
            "z": dict(branch=z_branch, vue=z_vue, grid=z_grid),
            "v": dict(branch=v_branch, vue=v_vue, angle=v_angle),
        }


def reference_gain(carrier_freq: float, zeta: float) -> float:
    """Path gain (c / 4 pi f_c)^zeta at the 1 m reference distance."""
    return (C_LIGHT / (4 * np.pi * carrier_freq)) ** zeta


def los_gain(distance: float, carrier_freq: float, zeta: float) -> complex:
    """Deterministic LoS gain: reference gain times d^-zeta with carrier phase."""
    lam = C_LIGHT / carrier_freq
    amp = reference_gain(carrier_freq, zeta) * distance ** (-zeta)
    return amp * np.exp(1j * 2 * np.pi * distance / lam)


def bs_los_columns(points: np.ndarray, bs_position: np.ndarray, n_antennas: int):
    """Array responses at the BS for source points, one column per point."""
    d = np.atleast_2d(points) - bs_position[None, :]
    dist = np.linalg.norm(d, axis=1)
    xi = d[:, 0] / dist
    return ula_phase_matrix(xi, n_antennas), dist


def ris_los_columns(points: np.ndarray, ris_position: np.ndarray, n_h: int, n_v: int):
    """Surface responses at the RIS for source points, one column per point."""
    d = np.atleast_2d(points) - ris_position[None, :]
    dist = np.linalg.norm(d, axis=1)
    xi_h = d[:, 0] / dist
    xi_v = d[:, 2] / dist
    return upa_phase_matrix(xi_h, xi_v, n_h, n_v), dist


def bs_nlos_columns(grid: GridSpec, delta_omega: np.ndarray, n_antennas: int):
    """Scatterer-angle dictionary at the BS: responses at grid angles + offsets."""
    xi = np.sin(grid.bs_aoa_grid + delta_omega)
    return ula_phase_matrix(xi, n_antennas)


def ris_nlos_columns(
    grid: GridSpec, delta_phi: np.ndarray, delta_theta: np.ndarray, n_h: int, n_v: int
):
    """Scatterer-angle dictionary at the RIS."""
    xi_h = np.sin(grid.ris_angle_grid[:, 0] + delta_phi)
    xi_v = np.sin(grid.ris_angle_grid[:, 1] + delta_theta)
    return upa_phase_matrix(xi_h, xi_v, n_h, n_v)


def sample_platoon(config: ScenarioConfig, rng: np.random.Generator) -> PlatoonTrajectory:
    """Sample a platoon trajectory that stays on the road grid.

    Initial index gaps follow the Gamma spacing law truncated to integers of
    at least q0. Per-slot speeds are Gaussian; exact positions are kept and
    grid indices are their quantization. Followers brake so index gaps never
    drop below q0. Raises TrajectoryOverflowError when the platoon cannot fit
    for the whole horizon.
    """
    p = config.platoon_params()
    grid = config.grid_spec()
    M, T, U = config.n_vue, config.n_slots, config.n_grid
    dl = p.dl

    steps = T - 1  # motion happens between slots
    drift_cells = p.v_mean * p.dt * steps / dl
    noise_cells = (3.0 * p.v_std * p.dt * np.sqrt(steps) / dl + 1.0) if steps else 0.0
    low_margin = int(np.ceil(max(0.0, -drift_cells) + noise_cells))
    high_margin = int(np.ceil(max(0.0, drift_cells) + noise_cells))

    if M > 1:
        # sample integer gaps from the same discretized spacing law the
        # tracker's spatial prior evaluates, so no sampled platoon sits on a
        # zero-probability configuration
        from .priors import gap_log_density

        support = np.arange(p.q0, p.q0 + max(50, int(10 * p.varpi * p.lam)))
        logp = gap_log_density(support, p)
        pmf = np.exp(logp - logp[np.isfinite(logp)].max())
        pmf[~np.isfinite(pmf)] = 0.0
        pmf /= pmf.sum()
        gaps = rng.choice(support, size=M - 1, p=pmf)
    else:
        gaps = np.zeros(0, dtype=int)
    span = int(gaps.sum())
    top = U - 1 - high_margin
    if low_margin + (M - 1) * p.q0 > top:
        raise TrajectoryOverflowError(
            f"grid of {U} cells cannot hold {M} vehicles over {T} slots"
        )
    while low_margin + span > top:  # compress the widest gaps until it fits
        widest = int(np.argmax(gaps))
        if gaps[widest] <= p.q0:
            raise TrajectoryOverflowError("platoon cannot be compressed onto the grid")
        gaps[widest] -= 1
        span -= 1

    q1 = np.concatenate([[low_margin], low_margin + np.cumsum(gaps)]).astype(float)
    frac = rng.uniform(-0.45, 0.45, size=M)
    s = (q1 + frac) * dl

    positions = np.empty((T, M, 3))
    indices = np.empty((T, M), dtype=int)
    offsets = np.empty((T, M))
    speeds = np.empty((T, M))
    origin = grid.road_origin.as_array()
    direction = grid.road_direction

    for t in range(T):
        if t > 0:
            v = rng.normal(p.v_mean, p.v_std, size=M)
            speeds[t] = v
            s = s + v * p.dt
            for m in range(1, M):  # follower keeps at least q0 cells of headway
                s[m] = max(s[m], s[m - 1] + p.q0 * dl)
        else:
            speeds[t] = p.v_mean
        for m in range(M):
            pos = origin + s[m] * direction
            try:
                u, off = nearest_grid(pos, grid)
            except Exception as exc:
                raise TrajectoryOverflowError(
                    f"vehicle {m} left the grid in slot {t}"
                ) from exc
            positions[t, m] = pos
            indices[t, m] = u
            offsets[t, m] = off
    return PlatoonTrajectory(positions, indices, offsets, speeds)


def synthesize_h_rb(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """BS-RIS channel, known to the estimator because both ends are fixed.

    A Rician mixture of the geometric rank-one component and an isotropic
    part. The raw double-fading cascade sits orders of magnitude below the
    direct link, so two normalizations are offered: ``unit_column_gain``
    scales the mean column gain to one, and ``balanced`` scales the cascade
    so its received energy matches the direct link at the road-grid center,
    the regime in which both anchors carry location information.
    """
    bs = np.asarray(config.bs_position, dtype=float)
    ris = np.asarray(config.ris_position, dtype=float)
    K, nh, nv = config.n_bs_antennas, config.n_ris_h, config.n_ris_v
    a_bs, dist = bs_los_columns(ris[None, :], bs, K)
    a_ris, _ = ris_los_columns(bs[None, :], ris, nh, nv)
    rank1 = a_bs[:, 0:1] @ a_ris[:, 0:1].conj().T
    kf = config.h_rb_rician
    w = (
        rng.standard_normal((K, nh * nv)) + 1j * rng.standard_normal((K, nh * nv))
    ) / np.sqrt(2)
    pl = los_gain(float(dist[0]), config.carrier_freq, config.zeta_ris_bs)
    h = pl * (np.sqrt(kf) * rank1 + np.sqrt(1 - kf) * w)
    if config.h_rb_normalization == "unit_column_gain":
        col_gain = np.mean(np.linalg.norm(h, axis=0)) / np.sqrt(K)
        h = h / col_gain
    elif config.h_rb_normalization == "balanced":
        grid = config.grid_spec()
        pts = grid.grid_points[:: max(1, grid.grid_count // 8)]
        a_b, d_b = bs_los_columns(pts, bs, K)
        a_r, d_r = ris_los_columns(pts, ris, nh, nv)
        direct = np.mean(
            [
                abs(los_gain(d, config.carrier_freq, config.zeta_bs)) * np.sqrt(K)
                for d in d_b
            ]
        )
        cascade = np.mean(
            [
                abs(los_gain(d_r[i], config.carrier_freq, config.zeta_ris))
                * np.linalg.norm(h @ a_r[:, i])
                for i in range(len(d_r))
            ]
        )
        h = h * (direct / cascade)
    return h


def qpsk_pilots(n_vue: int, n_pilots: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus pilots: a common QPSK scrambler times per-VUE phase ramps.

    Rows are exactly orthogonal whenever n_pilots >= n_vue, which decouples
    the vehicles' dictionary blocks; with fewer pilots than vehicles the
    ramps alias and rows are merely uncorrelated on average.
    """
    scramble = (1j ** rng.integers(0, 4, size=n_pilots)).astype(np.complex128)
    g = np.arange(n_pilots)
    ramps = np.exp(2j * np.pi * np.outer(np.arange(n_vue), g) / n_pilots)
    return scramble[None, :] * ramps


def random_ris_profile(n_ris: int, rng: np.random.Generator) -> RisProfile:
    return RisProfile(np.exp(2j * np.pi * rng.uniform(size=n_ris)))


def _init_link_state(n_angles: int, n_paths: int, paired: bool) -> NlosLinkState:
    """Empty link state with a contiguous burst of n_paths marked active."""
    if n_paths > n_angles:
        raise InvalidDimensionError("more scatterer paths than grid angles")
    active = np.zeros(n_angles, dtype=bool)
    return NlosLinkState(
        active=active,
        gains=np.zeros(n_angles, np.complex128),
        offset_a=np.zeros(n_angles),
        offset_b=np.zeros(n_angles) if paired else None,
    )


def _start_burst(state: NlosLinkState, n_paths: int, rng):
    if n_paths > 0:
        start = int(rng.integers(0, state.active.size - n_paths + 1))
        state.active[start : start + n_paths] = True


def _activate_entries(state, idx, sigma2, hw_a, hw_b, rng):
    n = idx.size
    if n == 0:
        return
    state.gains[idx] = np.sqrt(sigma2 / 2) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    state.offset_a[idx] = rng.uniform(-0.95, 0.95, size=n) * np.asarray(hw_a)[idx]
    if state.offset_b is not None:
        state.offset_b[idx] = rng.uniform(-0.95, 0.95, size=n) * np.asarray(hw_b)[idx]


def _evolve_link_state(state, rho, rate, sigma2, hw_a, hw_b, rng):
    """One slot of the support Markov chain with AR(1) gains while active."""
    stay = rho + (1 - rho) * rate
    birth = (1 - rho) * rate
    u = rng.uniform(size=state.active.size)
    was = state.active.copy()
    state.active = np.where(was, u < stay, u < birth)
    survived = was & state.active
    if survived.any():
        n = int(survived.sum())
        noise = np.sqrt(sigma2 * (1 - rho**2) / 2) * (
            rng.standard_normal(n) + 1j * rng.standard_normal(n)
        )
        state.gains[survived] = rho * state.gains[survived] + noise
    born = state.active & ~was
    _activate_entries(state, np.where(born)[0], sigma2, hw_a, hw_b, rng)
    died = was & ~state.active
    state.gains[died] = 0.0


class ChannelSynthesizer:
    """Stateful per-slot channel generator for one scene realization."""

    def __init__(self, config: ScenarioConfig, grid: GridSpec, rng: np.random.Generator):
        self.config = config
        self.grid = grid
        self.rng = rng
        nl = config.nlos
        self.rel_power = 10 ** (nl.rel_power_db / 10)
        self._bs_states = [
            _init_link_state(grid.n_bs_angles, nl.l_bs, paired=False)
            for _ in range(config.n_vue)
        ]
        self._ris_states = (
            [
                _init_link_state(grid.n_ris_angles, nl.l_ris, paired=True)
                for _ in range(config.n_vue)
            ]
            if config.ris_enabled
            else None
        )
        for st in self._bs_states:
            _start_burst(st, nl.l_bs, rng)
        if self._ris_states is not None:
            for st in self._ris_states:
                _start_burst(st, nl.l_ris, rng)
        self._slot = 0

    def step(self, traj: PlatoonTrajectory) -> ChannelRealization:
        """Synthesize the channels of the next slot."""
        cfg, grid, rng = self.config, self.grid, self.rng
        t = self._slot
        nl = cfg.nlos
        M, K = cfg.n_vue, cfg.n_bs_antennas
        points = traj.positions[t]

        a_bs, d_bs = bs_los_columns(points, np.asarray(cfg.bs_position, float), K)
        beta = np.array([los_gain(d, cfg.carrier_freq, cfg.zeta_bs) for d in d_bs])
        for m in range(M):
            st = self._bs_states[m]
            sigma2 = self.rel_power * np.abs(beta[m]) ** 2
            if t == 0:
                _activate_entries(
                    st, np.where(st.active)[0], sigma2, grid.bs_aoa_half_width, None, rng
                )
            else:
                _evolve_link_state(
                    st,
                    nl.rho_corr,
                    nl.l_bs / grid.n_bs_angles,
                    sigma2,
                    grid.bs_aoa_half_width,
                    None,
                    rng,
                )
        h_bs = np.empty((M, K), dtype=np.complex128)
        bs_states = []
        for m in range(M):
            st = self._bs_states[m]
            h = beta[m] * a_bs[:, m]
            if st.active.any():
                cols = bs_nlos_columns(grid, st.offset_a, K)
                h = h + cols[:, st.active] @ st.gains[st.active]
            h_bs[m] = h
            bs_states.append(
                NlosLinkState(st.active.copy(), st.gains.copy(), st.offset_a.copy())
            )

        h_ris = eta = ris_states = None
        if cfg.ris_enabled:
            nh, nv = cfg.n_ris_h, cfg.n_ris_v
            a_ris, d_ris = ris_los_columns(points, np.asarray(cfg.ris_position, float), nh, nv)
            eta = np.array([los_gain(d, cfg.carrier_freq, cfg.zeta_ris) for d in d_ris])
            for m in range(M):
                st = self._ris_states[m]
                sigma2 = self.rel_power * np.abs(eta[m]) ** 2
                if t == 0:
                    _activate_entries(
                        st,
                        np.where(st.active)[0],
                        sigma2,
                        grid.ris_az_half_width,
                        grid.ris_el_half_width,
                        rng,
                    )
                else:
                    _evolve_link_state(
                        st,
                        nl.rho_corr,
                        nl.l_ris / grid.n_ris_angles,
                        sigma2,
                        grid.ris_az_half_width,
                        grid.ris_el_half_width,
                        rng,
                    )
            h_ris = np.empty((M, nh * nv), dtype=np.complex128)
            ris_states = []
            for m in range(M):
                st = self._ris_states[m]
                h = eta[m] * a_ris[:, m]
                if st.active.any():
                    cols = ris_nlos_columns(grid, st.offset_a, st.offset_b, nh, nv)
                    h = h + cols[:, st.active] @ st.gains[st.active]
                h_ris[m] = h
                ris_states.append(
                    NlosLinkState(
                        st.active.copy(),
                        st.gains.copy(),
                        st.offset_a.copy(),
                        st.offset_b.copy(),
                    )
                )
        self._slot += 1
        return ChannelRealization(h_bs, h_ris, beta, eta, bs_states, ris_states)


def received_signal(
    channels: ChannelRealization,
    ris: RisProfile | None,
    pilots: np.ndarray,
    h_rb: np.ndarray | None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Stack the per-pilot received vectors y(g) = sum_m (cascade + direct) x_m(g).

    ``noise`` is added as-is when given; omit it for the noiseless signal.
    """
    M, G = pilots.shape
    if channels.h_bs.shape[0] != M:
        raise InvalidDimensionError("pilot rows must match the number of VUEs")
    eff = channels.h_bs  # (M, K) effective per-VUE channel
    if channels.h_ris is not None:
        if ris is None or h_rb is None:
            raise InvalidDimensionError("cascaded channels need a RIS profile and h_rb")
        h_tilde = h_rb * ris.theta[None, :]
        eff = eff + channels.h_ris @ h_tilde.T
    y = (pilots.T @ eff).reshape(-1)  # pilot-major stacking, K entries per pilot
    if noise is not None:
        if noise.size != y.size:
            raise InvalidDimensionError("noise length must equal K * G")
        y = y + noise.reshape(-1)
    return y


def build_sensing_matrices(
    grid: GridSpec,
    offsets: OffsetEstimate,
    ris: RisProfile | None,
    pilots: np.ndarray,
    h_rb: np.ndarray | None,
    bs_position,
    ris_position,
    n_bs_antennas: int,
    n_ris_h: int,
    n_ris_v: int,
    ris_enabled: bool = True,
    validate: bool = True,
) -> SensingMatrices:
    """Assemble the LoS and scatterer dictionaries at the given offsets."""
    if validate:
        offsets.validate(grid)
    M, G = pilots.shape
    direction = grid.road_direction
    bs_position = np.asarray(bs_position, dtype=float)

    f_bs_blocks, xi_bs_blocks = [], []
    f_ris_blocks = [] if ris_enabled else None
    xi_ris_blocks = [] if ris_enabled else None
    h_tilde = (h_rb * ris.theta[None, :]) if ris_enabled else None
    if ris_enabled:
        ris_position = np.asarray(ris_position, dtype=float)

    for m in range(M):
        pts = grid.grid_points + offsets.delta_r[m][:, None] * direction[None, :]
        a_bs, _ = bs_los_columns(pts, bs_position, n_bs_antennas)
        f_bs_blocks.append(a_bs)
        xi_bs_blocks.append(bs_nlos_columns(grid, offsets.delta_omega[m], n_bs_antennas))
        if ris_enabled:
            a_ris, _ = ris_los_columns(pts, ris_position, n_ris_h, n_ris_v)
            f_ris_blocks.append(h_tilde @ a_ris)
            xi_ris_blocks.append(
                h_tilde
                @ ris_nlos_columns(
                    grid, offsets.delta_phi[m], offsets.delta_theta[m], n_ris_h, n_ris_v
                )
            )

    def stack(blocks):
        # rows pilot-major, columns VUE-major
        return np.vstack(
            [np.hstack([pilots[m, g] * blocks[m] for m in range(M)]) for g in range(G)]
        )

    return SensingMatrices(
        f_ris=stack(f_ris_blocks) if ris_enabled else None,
        f_bs=stack(f_bs_blocks),
        xi_ris=stack(xi_ris_blocks) if ris_enabled else None,
        xi_bs=stack(xi_bs_blocks),
        n_vue=M,
        n_grid=grid.grid_count,
        n_ris_angles=grid.n_ris_angles,
        n_bs_angles=grid.n_bs_angles,
    )


def true_offsets(
    traj: PlatoonTrajectory, channels: ChannelRealization, grid: GridSpec, t: int
) -> OffsetEstimate:
    """Ground-truth offsets of slot t, laid out like an estimator's state."""
    M = traj.positions.shape[1]
    off = OffsetEstimate.zeros(M, grid)
    for m in range(M):
        off.delta_r[m, traj.grid_indices[t, m]] = traj.road_offsets[t, m]
        st = channels.bs_nlos[m]
        off.delta_omega[m, st.active] = st.offset_a[st.active]
        if channels.ris_nlos is not None:
            st = channels.ris_nlos[m]
            off.delta_phi[m, st.active] = st.offset_a[st.active]
            off.delta_theta[m, st.active] = st.offset_b[st.active]
    return off


def ground_truth_sparse(
    traj: PlatoonTrajectory, channels: ChannelRealization, grid: GridSpec, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact sparse coefficients (z, v) of the dictionary model at slot t.

    z holds one nonzero per VUE per LoS branch, both at the VUE's grid index;
    v holds the scatterer gains at the active angle-grid entries.
    """
    M = traj.positions.shape[1]
    U = grid.grid_count
    ris_on = channels.h_ris is not None
    n_z = (2 if ris_on else 1) * U * M
    z = np.zeros(n_z, dtype=np.complex128)
    for m in range(M):
        q = traj.grid_indices[t, m]
        if ris_on:
            z[m * U + q] = channels.eta[m]
            z[U * M + m * U + q] = channels.beta[m]
        else:
            z[m * U + q] = channels.beta[m]
    n_v = M * (grid.n_ris_angles if ris_on else 0) + M * grid.n_bs_angles
    v = np.zeros(n_v, dtype=np.complex128)
    base = 0
    if ris_on:
        for m in range(M):
            st = channels.ris_nlos[m]
            v[base + m * grid.n_ris_angles : base + (m + 1) * grid.n_ris_angles][
                st.active
            ] = st.gains[st.active]
        base = M * grid.n_ris_angles
    for m in range(M):
        st = channels.bs_nlos[m]
        v[base + m * grid.n_bs_angles : base + (m + 1) * grid.n_bs_angles][st.active] = st.gains[
            st.active
        ]
    return z, v


@dataclass
class SceneData:
    """Everything one seeded realization shares across estimation methods."""

    config: ScenarioConfig
    grid: GridSpec
    trajectory: PlatoonTrajectory
    pilots: np.ndarray
    ris: RisProfile | None
    h_rb: np.ndarray | None
    sigma2: float
    channels: list[ChannelRealization]
    y_clean: list[np.ndarray]
    noise: list[np.ndarray]

    @property
    def y(self) -> list[np.ndarray]:
        return [yc + n for yc, n in zip(self.y_clean, self.noise)]

    def sensing_at(self, offsets: OffsetEstimate, validate: bool = True) -> SensingMatrices:
        cfg = self.config
        return build_sensing_matrices(
            self.grid,
            offsets,
            self.ris,
            self.pilots,
            self.h_rb,
            cfg.bs_position,
            cfg.ris_position,
            cfg.n_bs_antennas,
            cfg.n_ris_h,
            cfg.n_ris_v,
            ris_enabled=cfg.ris_enabled,
            validate=validate,
        )


def synthesize_scene(config: ScenarioConfig, seed: int) -> SceneData:
    """Build one fully seeded scene realization shared by all methods."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, seed]))
    grid = config.grid_spec()
    traj = sample_platoon(config, rng)
    pilots = qpsk_pilots(config.n_vue, config.n_pilots, rng)
    ris = random_ris_profile(config.n_ris, rng) if config.ris_enabled else None
    h_rb = synthesize_h_rb(config, rng) if config.ris_enabled else None
    synth = ChannelSynthesizer(config, grid, rng)

    channels, y_clean = [], []
    for t in range(config.n_slots):
        ch = synth.step(traj)
        channels.append(ch)
        y_clean.append(received_signal(ch, ris, pilots, h_rb))

    if config.snr_db is not None:
        p_sig = float(np.mean(np.abs(y_clean[0]) ** 2))
        sigma2 = p_sig * 10 ** (-config.snr_db / 10)
    else:
        sigma2 = config.noise_power_w
    kg = config.n_bs_antennas * config.n_pilots
    noise = [
        np.sqrt(sigma2 / 2) * (rng.standard_normal(kg) + 1j * rng.standard_normal(kg))
        for _ in range(config.n_slots)
    ]
    return SceneData(
        config=config,
        grid=grid,
        trajectory=traj,
        pilots=pilots,
        ris=ris,
        h_rb=h_rb,
        sigma2=sigma2,
        channels=channels,
        y_clean=y_clean,
        noise=noise,
    )
