"""Layered sparse priors: platoon spacing, motion, precisions, and supports.

Grid indices are 0-based throughout. The platoon spacing prior puts Gamma
mass on integer index gaps of at least q0; the motion prior is a discretized
Gaussian driven by the mean speed and slot interval.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


@dataclass
class Hyperparams:
    """Gamma hyperparameters of the precision layers plus the noise prior.

    Active parameters apply where the location/support points at the entry;
    inactive parameters must give a much larger mean precision so off-support
    entries are pushed to zero.
    """

    a_active_r: float = 1.0
    b_active_r: float = 1.0
    a_inactive_r: float = 1.0
    b_inactive_r: float = 1e-6
    a_active_b: float = 1.0
    b_active_b: float = 1.0
    a_inactive_b: float = 1.0
    b_inactive_b: float = 1e-6
    a_active_n: float = 1.0
    b_active_n: float = 1.0
    a_inactive_n: float = 1.0
    b_inactive_n: float = 1e-6
    a_kappa: float = 1e-6
    b_kappa: float = 1e-6

    def __post_init__(self):
        vals = [
            self.a_active_r, self.b_active_r, self.a_inactive_r, self.b_inactive_r,
            self.a_active_b, self.b_active_b, self.a_inactive_b, self.b_inactive_b,
            self.a_active_n, self.b_active_n, self.a_inactive_n, self.b_inactive_n,
            self.a_kappa, self.b_kappa,
        ]
        if any(v <= 0 for v in vals):
            raise ValueError("all hyperparameters must be strictly positive")

    def pair(self, branch: str, active: bool) -> tuple[float, float]:
        """(shape, rate) for a branch in {'R', 'B', 'N'}."""
        if branch == "R":
            return (
                (self.a_active_r, self.b_active_r)
                if active
                else (self.a_inactive_r, self.b_inactive_r)
            )
        if branch == "B":
            return (
                (self.a_active_b, self.b_active_b)
                if active
                else (self.a_inactive_b, self.b_inactive_b)
            )
        if branch == "N":
            return (
                (self.a_active_n, self.b_active_n)
                if active
                else (self.a_inactive_n, self.b_inactive_n)
            )
        raise ValueError(f"unknown branch {branch!r}")


def precision_prior_params(active: bool, hyper: Hyperparams, branch: str):
    """Prior (shape, rate) of a precision entry given its support state."""
    return hyper.pair(branch, active)


@dataclass
class CategoricalQ:
    """Per-VUE categorical distribution over the U road-grid indices."""

    pi: np.ndarray  # (M, U)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        if self.pi.ndim != 2:
            raise ValueError("pi must be (M, U)")

    def validate(self, tol: float = 1e-9):
        if np.any(self.pi < -tol):
            raise ValueError("categorical probabilities must be nonnegative")
        if np.any(np.abs(self.pi.sum(axis=1) - 1.0) > tol):
            raise ValueError("categorical rows must sum to 1")

    @staticmethod
    def uniform(n_vue: int, n_grid: int) -> "CategoricalQ":
        return CategoricalQ(np.full((n_vue, n_grid), 1.0 / n_grid))


@dataclass
class BernoulliC:
    """Per-entry activity probabilities of the scatterer-angle support."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)

    def validate(self):
        if np.any((self.p < 0) | (self.p > 1)):
            raise ValueError("Bernoulli probabilities must lie in [0, 1]")


@dataclass
class PlatoonParams:
    """Spacing and motion parameters of the platoon."""

    varpi: float = 2.0  # spacing shape
    lam: float = 1.5  # spacing scale, grid cells
    q0: int = 2  # minimum index gap
    v_mean: float = -18.0  # m/s along the road direction
    v_std: float = 8.0  # m/s
    dt: float = 0.1  # s
    dl: float = 1.0  # m, grid cell length

    def __post_init__(self):
        if self.varpi < 1:
            raise ValueError("spacing shape must be >= 1")
        if self.lam <= 0 or self.v_std < 0 or self.dt <= 0 or self.dl <= 0:
            raise ValueError("invalid platoon parameters")
        if self.q0 < 0:
            raise ValueError("q0 must be nonnegative")


def gap_log_density(gaps: np.ndarray, params: PlatoonParams) -> np.ndarray:
    """Log Gamma density of integer gaps measured from the minimum gap q0."""
    x = np.asarray(gaps, dtype=np.float64) - params.q0
    out = np.full(x.shape, -np.inf)
    ok = x >= 0
    w, lam = params.varpi, params.lam
    with np.errstate(divide="ignore"):
        out[ok] = (
            (w - 1) * np.log(x[ok]) - x[ok] / lam - w * np.log(lam) - gammaln(w)
        ) if w != 1 else (-x[ok] / lam - np.log(lam))
    return out


def spatial_transition(q_m: int, params: PlatoonParams, n_grid: int) -> np.ndarray:
    """Distribution of the next vehicle's index given index q_m.

    Mass is proportional to the Gamma spacing density at integer gaps >= q0
    and exactly zero below; when no successor index fits on the grid the
    distribution falls back to uniform so the kernel stays row-stochastic.
    """
    out = np.zeros(n_grid)
    succ = np.arange(q_m + params.q0, n_grid)
    if succ.size == 0:
        return np.full(n_grid, 1.0 / n_grid)
    logd = gap_log_density(succ - q_m, params)
    if np.all(np.isinf(logd)):
        # only the zero-density gap q0 fits (shape > 1): keep it
        out[succ[0]] = 1.0
        return out
    d = np.exp(logd - logd[np.isfinite(logd)].max())
    d[~np.isfinite(d)] = 0.0
    out[succ] = d
    s = out.sum()
    return out / s


def temporal_transition(q_prev: int, params: PlatoonParams, n_grid: int) -> np.ndarray:
    """Distribution of a vehicle's index given its previous-slot index.

    A Gaussian kernel centered at q_prev + v_mean*dt/dl with standard
    deviation v_std*dt/dl, evaluated at the integer indices and normalized.
    """
    shift = params.v_mean * params.dt / params.dl
    std = params.v_std * params.dt / params.dl
    center = q_prev + shift
    idx = np.arange(n_grid, dtype=np.float64)
    if std == 0:
        out = np.zeros(n_grid)
        out[int(np.clip(round(center), 0, n_grid - 1))] = 1.0
        return out
    logk = -0.5 * ((idx - center) / std) ** 2
    k = np.exp(logk - logk.max())
    return k / k.sum()


def spatial_kernel_matrix(params: PlatoonParams, n_grid: int) -> np.ndarray:
    """Row-stochastic matrix T[u, u'] = P(next vehicle at u' | this one at u)."""
    return np.stack([spatial_transition(u, params, n_grid) for u in range(n_grid)])


def temporal_kernel_matrix(params: PlatoonParams, n_grid: int) -> np.ndarray:
    """Row-stochastic matrix T[u, u'] = P(index u' now | index u one slot ago)."""
    return np.stack([temporal_transition(u, params, n_grid) for u in range(n_grid)])


def support_transition(c_prev: BernoulliC, rho_corr: float, activity_rate) -> BernoulliC:
    """One step of the two-state support Markov chain.

    The chain has stationary activity `activity_rate` and lag-1 correlation
    rho_corr, i.e. P(active -> active) = rho + (1 - rho) * rate and
    P(inactive -> active) = (1 - rho) * rate.
    """
    if not 0 <= rho_corr <= 1:
        raise ValueError("rho_corr must lie in [0, 1]")
    rate = np.broadcast_to(np.asarray(activity_rate, dtype=np.float64), c_prev.p.shape)
    p_stay = rho_corr + (1 - rho_corr) * rate
    p_birth = (1 - rho_corr) * rate
    return BernoulliC(c_prev.p * p_stay + (1 - c_prev.p) * p_birth)


def cross_slot_priors(
    psi_q_prev: CategoricalQ,
    psi_c_prev: BernoulliC,
    params: PlatoonParams,
    rho_corr: float,
    activity_rate,
) -> tuple[CategoricalQ, BernoulliC]:
    """Propagate last slot's posteriors into this slot's approximate priors.

    A vanishing uniform component keeps far cells representable in floats so
    downstream message products cannot hit exact zeros.
    """
    n_grid = psi_q_prev.pi.shape[1]
    kernel = temporal_kernel_matrix(params, n_grid)
    pi = psi_q_prev.pi @ kernel
    pi = pi / pi.sum(axis=1, keepdims=True)
    eps = 1e-9
    pi = (1 - eps) * pi + eps / n_grid
    c = support_transition(psi_c_prev, rho_corr, activity_rate)
    return CategoricalQ(pi), c


def initial_priors(n_vue: int, n_grid: int, activity_rate) -> tuple[CategoricalQ, BernoulliC]:
    """Slot-1 priors: uniform location, stationary support activity."""
    rate = np.asarray(activity_rate, dtype=np.float64)
    return CategoricalQ.uniform(n_vue, n_grid), BernoulliC(rate.copy())
