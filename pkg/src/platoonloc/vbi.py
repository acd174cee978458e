"""Mean-field variational updates and platoon-chain message passing.

One estimation pass alternates closed-form coordinate updates of the
Gaussian channel posteriors, the Gamma precision posteriors, the noise
precision, the categorical location posterior, and the Bernoulli scatterer
support, then exchanges extrinsic messages with the forward-backward chain
that carries the inter-vehicle spacing structure.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import digamma, gammaln

from .channel import SensingMatrices
from .errors import (
    ConditioningError,
    DegenerateMessageError,
    DegeneratePosteriorError,
    NumericalError,
)
from .priors import BernoulliC, CategoricalQ, Hyperparams

_LOG_PI = np.log(np.pi)
_MSG_FLOOR = 1e-12


@dataclass
class GaussianPosterior:
    """Complex Gaussian factor with mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def second_moment_diag(self) -> np.ndarray:
        return np.abs(self.mean) ** 2 + np.diag(self.cov).real

    @staticmethod
    def zeros(n: int) -> "GaussianPosterior":
        return GaussianPosterior(
            np.zeros(n, dtype=np.complex128), np.zeros((n, n), dtype=np.complex128)
        )


@dataclass
class GammaPosterior:
    """Independent Gamma factors with per-entry shape and rate."""

    shape: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        self.shape = np.atleast_1d(np.asarray(self.shape, dtype=np.float64))
        self.rate = np.atleast_1d(np.asarray(self.rate, dtype=np.float64))
        if np.any(self.shape <= 0) or np.any(self.rate <= 0):
            raise ValueError("Gamma parameters must be positive")

    def mean(self) -> np.ndarray:
        return self.shape / self.rate

    def mean_log(self) -> np.ndarray:
        return digamma(self.shape) - np.log(self.rate)

    def entropy(self) -> float:
        a, b = self.shape, self.rate
        return float(np.sum(a - np.log(b) + gammaln(a) + (1 - a) * digamma(a)))


@dataclass
class MessageSet:
    """Extrinsic messages between the sparse-update and chain entities."""

    nu_in: np.ndarray  # (M, U), sparse entity -> chain
    nu_out: np.ndarray  # (M, U), chain -> sparse entity
    belief: np.ndarray  # (M, U), chain marginals

    @staticmethod
    def initial(prior_pi: np.ndarray) -> "MessageSet":
        m, u = prior_pi.shape
        return MessageSet(
            nu_in=np.full((m, u), 1.0 / u),
            nu_out=prior_pi.copy(),
            belief=prior_pi.copy(),
        )


@dataclass
class PosteriorSet:
    """The full factorized posterior of one slot."""

    z_r: GaussianPosterior | None
    z_b: GaussianPosterior
    v: GaussianPosterior
    rho_r: GammaPosterior | None
    rho_b: GammaPosterior
    gamma: GammaPosterior
    kappa: GammaPosterior
    q: CategoricalQ
    c: BernoulliC
    converged: bool = False
    n_sweeps: int = 0

    def mu_z_stacked(self) -> np.ndarray:
        if self.z_r is None:
            return self.z_b.mean
        return np.concatenate([self.z_r.mean, self.z_b.mean])

    def z_branches(self):
        out = []
        if self.z_r is not None:
            out.append(("R", self.z_r, self.rho_r))
        out.append(("B", self.z_b, self.rho_b))
        return out


@dataclass
class VbiOptions:
    """Switches and tolerances of the estimation pass."""

    tol: float = 1e-3
    max_iters: int = 12
    cross_branch_residual: bool = True
    exchange_messages: bool = True
    iid_priors: bool = False  # plain sparse-learning mode, no structure
    jitter_scale: float = 1e-10
    spatial_kernel: np.ndarray | None = None  # (U, U) row-stochastic or None
    support_damping: float = 0.2  # relaxation of the support update per sweep
    freeze_support: bool = False  # hold the support at its prior (warm-up)
    message_damping: float = 1.0  # geometric chain-message damping, 1 = off
    exchange_every_sweep: bool = True  # chain exchange per sweep vs per pass


def hpd_solve(precision: np.ndarray, jitter_scale: float = 1e-10):
    """Invert a Hermitian positive-definite matrix with escalating jitter.

    Returns (inverse, logdet-of-jittered-matrix). Raises ConditioningError
    after three escalations.
    """
    n = precision.shape[0]
    base = jitter_scale * max(np.trace(precision).real / n, 1e-300)
    eye = np.eye(n)
    jitter = base
    for _ in range(4):
        try:
            c, low = cho_factor(precision + jitter * eye, lower=True)
            inv = cho_solve((c, low), eye.astype(np.complex128))
            logdet = 2.0 * float(np.sum(np.log(np.abs(np.diag(c)))))
            inv = 0.5 * (inv + inv.conj().T)
            return inv, logdet
        except np.linalg.LinAlgError:
            jitter *= 10
    raise ConditioningError("matrix stayed indefinite after jitter escalation")


def _branch_hyper(hyper: Hyperparams, branch: str):
    a, b = hyper.pair(branch, True)
    abar, bbar = hyper.pair(branch, False)
    return a, b, abar, bbar


def scale_hyperparams(hyper: Hyperparams, y: np.ndarray, mats: SensingMatrices) -> Hyperparams:
    """Anchor the Gamma rates to the observation's per-entry energy scale.

    The configured rates are treated as relative units; the absolute scale of
    one active coefficient is estimated per branch as the observation energy
    split across vehicles and the branch's mean squared column norm. Without
    this anchoring the active/inactive evidence cannot see coefficients far
    from unit scale.
    """
    y2 = float(np.vdot(y, y).real)
    m = mats.n_vue

    def col_scale(block):
        a = mats.block(block)
        return y2 / (m * float(np.mean(np.sum(np.abs(a) ** 2, axis=0))))

    s_b = col_scale("zb")
    s_r = col_scale("zr") if mats.ris_enabled else s_b
    s_v = col_scale("v")
    return Hyperparams(
        a_active_r=hyper.a_active_r,
        b_active_r=hyper.b_active_r * s_r,
        a_inactive_r=hyper.a_inactive_r,
        b_inactive_r=hyper.b_inactive_r * s_r,
        a_active_b=hyper.a_active_b,
        b_active_b=hyper.b_active_b * s_b,
        a_inactive_b=hyper.a_inactive_b,
        b_inactive_b=hyper.b_inactive_b * s_b,
        a_active_n=hyper.a_active_n,
        b_active_n=hyper.b_active_n * s_v,
        a_inactive_n=hyper.a_inactive_n,
        b_inactive_n=hyper.b_inactive_n * s_v,
        a_kappa=hyper.a_kappa,
        b_kappa=hyper.b_kappa,
    )


class ProjectedModel:
    """Observation projected onto the dictionary: A^H A, A^H y, ||y||^2.

    Every sweep-level update works in coefficient space through this object,
    so per-sweep cost is independent of the observation length.
    """

    def __init__(self, y: np.ndarray, mats: SensingMatrices):
        self.mats = mats
        n_los = mats.n_vue * mats.n_grid
        blocks = []
        if mats.ris_enabled:
            blocks.append(("zr", 0, n_los))
            blocks.append(("zb", n_los, 2 * n_los))
            off = 2 * n_los
        else:
            blocks.append(("zb", 0, n_los))
            off = n_los
        n_v = mats.Xi.shape[1]
        blocks.append(("v", off, off + n_v))
        self.slices = {name: slice(a, b) for name, a, b in blocks}
        A = np.hstack([mats.F, mats.Xi])
        self.gram = A.conj().T @ A
        self.proj_y = A.conj().T @ y
        self.y_energy = float(np.vdot(y, y).real)

    def sub(self, row: str, col: str) -> np.ndarray:
        return self.gram[self.slices[row], self.slices[col]]

    def rhs(self, name: str) -> np.ndarray:
        return self.proj_y[self.slices[name]]

    def residual_energy(self, post: "PosteriorSet") -> float:
        """E || y - A mu ||^2 + covariance traces, all in coefficient space."""
        parts = []
        if self.mats.ris_enabled:
            parts.append(("zr", post.z_r))
        parts.append(("zb", post.z_b))
        parts.append(("v", post.v))
        mu = np.concatenate([g.mean for _, g in parts])
        e = (
            self.y_energy
            - 2.0 * float(np.vdot(self.proj_y, mu).real)
            + float(np.vdot(mu, self.gram @ mu).real)
        )
        for name, g in parts:
            e += float(np.sum(g.cov * self.sub(name, name).T).real)
        return max(e, 0.0)


def _mix_rho_params(pi_flat, a, b, abar, bbar):
    shape = pi_flat * a + (1 - pi_flat) * abar + 1.0
    rate_prior = pi_flat * b + (1 - pi_flat) * bbar
    return shape, rate_prior


def update_z(
    y: np.ndarray,
    mats: SensingMatrices,
    post: PosteriorSet,
    hyper: Hyperparams,
    opts: VbiOptions,
    proj: ProjectedModel | None = None,
) -> None:
    """Gaussian coordinate updates of both LoS branches, in place.

    Sigma_i = (diag<rho_i> + <kappa> F_i^H F_i)^-1 and the mean regresses the
    residual after removing the scatterer mean and, unless disabled, the
    other branch's mean contribution.
    """
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite observation")
    proj = proj or ProjectedModel(y, mats)
    kap = float(post.kappa.mean()[0])
    branches = []
    if mats.ris_enabled:
        branches.append(("zr", "zb", post.z_r, post.z_b, post.rho_r))
    branches.append(("zb", "zr", post.z_b, post.z_r, post.rho_b))
    for block, other_block, gauss, other, rho in branches:
        rhs = proj.rhs(block) - proj.sub(block, "v") @ post.v.mean
        if opts.cross_branch_residual and mats.ris_enabled:
            rhs = rhs - proj.sub(block, other_block) @ other.mean
        precision = np.diag(rho.mean()).astype(np.complex128) + kap * proj.sub(
            block, block
        )
        cov, _ = hpd_solve(precision, opts.jitter_scale)
        gauss.mean = kap * (cov @ rhs)
        gauss.cov = cov


def update_v(
    y: np.ndarray,
    mats: SensingMatrices,
    post: PosteriorSet,
    hyper: Hyperparams,
    opts: VbiOptions,
    proj: ProjectedModel | None = None,
) -> None:
    """Gaussian coordinate update of the scatterer coefficients, in place."""
    proj = proj or ProjectedModel(y, mats)
    kap = float(post.kappa.mean()[0])
    rhs = proj.rhs("v") - proj.sub("v", "zb") @ post.z_b.mean
    if mats.ris_enabled:
        rhs = rhs - proj.sub("v", "zr") @ post.z_r.mean
    precision = np.diag(post.gamma.mean()).astype(np.complex128) + kap * proj.sub(
        "v", "v"
    )
    cov, _ = hpd_solve(precision, opts.jitter_scale)
    post.v.mean = kap * (cov @ rhs)
    post.v.cov = cov


def update_rho(
    pi_l: CategoricalQ, z_post: GaussianPosterior, hyper: Hyperparams, branch: str
) -> GammaPosterior:
    """Gamma update of one LoS precision branch."""
    a, b, abar, bbar = _branch_hyper(hyper, branch)
    pi_flat = pi_l.pi.reshape(-1)
    m2 = z_post.second_moment_diag()
    if np.any(m2 < -1e-12):
        raise ValueError("second moments must be nonnegative")
    shape, rate_prior = _mix_rho_params(pi_flat, a, b, abar, bbar)
    return GammaPosterior(shape, rate_prior + np.maximum(m2, 0.0))


def update_rho_iid(z_post: GaussianPosterior, a0: float = 1e-6, b0: float = 1e-6):
    """Flat independent precision update used by the unstructured estimator."""
    m2 = np.maximum(z_post.second_moment_diag(), 0.0)
    return GammaPosterior(np.full(m2.shape, a0 + 1.0), b0 + m2)


def update_gamma(
    pi_nl: BernoulliC, v_post: GaussianPosterior, hyper: Hyperparams
) -> GammaPosterior:
    """Gamma update of the scatterer precisions."""
    a, b, abar, bbar = _branch_hyper(hyper, "N")
    p = pi_nl.p.reshape(-1)
    m2 = np.maximum(v_post.second_moment_diag(), 0.0)
    shape = p * a + (1 - p) * abar + 1.0
    rate = p * b + (1 - p) * bbar + m2
    return GammaPosterior(shape, rate)


def expected_residual_energy(y, mats: SensingMatrices, post: PosteriorSet) -> float:
    """E || y - F z - Xi v ||^2 under the current Gaussian posteriors.

    Quadratic covariance terms reduce to tr(Sigma A^H A) through the cached
    Gram matrices.
    """
    r = y - mats.F @ post.mu_z_stacked() - mats.Xi @ post.v.mean
    total = float(np.vdot(r, r).real)
    for block, gauss in (("zr", post.z_r), ("zb", post.z_b), ("v", post.v)):
        if gauss is None or (block == "zr" and not mats.ris_enabled):
            continue
        total += float(np.sum(gauss.cov * mats.gram(block).T).real)
    return total


def _los_blocks(mats: SensingMatrices):
    blocks = []
    if mats.ris_enabled:
        blocks.append(("R", mats.f_ris))
    blocks.append(("B", mats.f_bs))
    return blocks


def update_kappa(
    y: np.ndarray,
    mats: SensingMatrices,
    post: PosteriorSet,
    hyper: Hyperparams,
    proj: ProjectedModel | None = None,
) -> GammaPosterior:
    """Conjugate noise-precision update from the expected residual energy."""
    kg = y.size
    eres = (
        proj.residual_energy(post)
        if proj is not None
        else expected_residual_energy(y, mats, post)
    )
    return GammaPosterior(
        np.array([hyper.a_kappa + kg]), np.array([hyper.b_kappa + eres])
    )


_EVIDENCE_CAP = 20.0  # nats; bounds the per-cell likelihood-evidence spread


def update_q(
    nu_out: np.ndarray, hyper: Hyperparams, post: PosteriorSet
) -> CategoricalQ:
    """Categorical location update from the precision-layer evidence.

    Combines, per grid cell, the active-versus-inactive Gamma evidence of
    every LoS branch with the chain message acting as prior; computed in the
    log domain and normalized per VUE. The evidence spread is clipped at
    _EVIDENCE_CAP nats: the factorized posterior overstates cell confidence
    by orders of magnitude, and unbounded evidence would let a stray
    secondary mode override any motion prior.
    """
    m_vue, n_grid = nu_out.shape
    evidence = np.zeros((m_vue, n_grid))
    for branch, _, rho in post.z_branches():
        a, b, abar, bbar = _branch_hyper(hyper, branch)
        t = rho.mean_log().reshape(m_vue, n_grid)
        e = rho.mean().reshape(m_vue, n_grid)
        evidence = evidence + (a - abar) * t - (b - bbar) * e
    evidence -= evidence.max(axis=1, keepdims=True)
    evidence = np.maximum(evidence, -_EVIDENCE_CAP)
    log_score = np.log(np.maximum(nu_out, 1e-300)) + evidence
    log_score -= log_score.max(axis=1, keepdims=True)
    w = np.exp(log_score)
    s = w.sum(axis=1)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise DegeneratePosteriorError("location posterior lost all mass")
    w = np.maximum(w / s[:, None], 1e-30)  # keep message products off exact zero
    return CategoricalQ(w / w.sum(axis=1, keepdims=True))


def update_c(prior_c: BernoulliC, hyper: Hyperparams, post: PosteriorSet) -> BernoulliC:
    """Bernoulli support update from the scatterer-precision evidence."""
    a, b, abar, bbar = _branch_hyper(hyper, "N")
    t = post.gamma.mean_log()
    e = post.gamma.mean()
    p = np.clip(prior_c.p.reshape(-1), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        lw1 = np.log(p) + a * np.log(b) - gammaln(a) + (a - 1) * t - b * e
        lw0 = np.log1p(-p) + abar * np.log(bbar) - gammaln(abar) + (abar - 1) * t - bbar * e
    out = np.where(
        np.isneginf(lw1),
        0.0,
        np.where(np.isneginf(lw0), 1.0, 1.0 / (1.0 + np.exp(np.clip(lw0 - lw1, -700, 700)))),
    )
    return BernoulliC(out.reshape(prior_c.p.shape))


def forward_backward_q(
    nu_in: np.ndarray,
    spatial_kernel: np.ndarray | None,
    temporal_msgs: np.ndarray,
    head_prior: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Chain marginals over the platoon ordering by forward-backward passing.

    nu_in rows are the per-vehicle extrinsic messages from the sparse
    entity; temporal_msgs rows are the cross-slot location priors. Returns
    (nu_out, belief): the extrinsic chain message and the full marginal.
    """
    m_vue, n_grid = nu_in.shape
    T = spatial_kernel
    if head_prior is None:
        head_prior = np.full(n_grid, 1.0 / n_grid)

    def _norm(vec, what):
        s = vec.sum()
        if not np.isfinite(s) or s <= 0:
            raise DegenerateMessageError(f"{what} lost all mass")
        return vec / s

    fwd = np.empty((m_vue, n_grid))
    fwd[0] = head_prior
    for m in range(m_vue - 1):
        fbar = _norm(fwd[m] * nu_in[m] * temporal_msgs[m], f"forward message {m}")
        if T is None:
            fwd[m + 1] = np.full(n_grid, 1.0 / n_grid)
        else:
            fwd[m + 1] = _norm(fbar @ T, f"forward message {m + 1}")
    bwd = np.empty((m_vue, n_grid))
    bwd[m_vue - 1] = np.ones(n_grid)
    for m in range(m_vue - 2, -1, -1):
        b_next = _norm(
            bwd[m + 1] * nu_in[m + 1] * temporal_msgs[m + 1], f"backward message {m + 1}"
        )
        if T is None:
            bwd[m] = np.ones(n_grid)
        else:
            bwd[m] = _norm(T @ b_next, f"backward message {m}")

    nu_out = np.empty((m_vue, n_grid))
    belief = np.empty((m_vue, n_grid))
    for m in range(m_vue):
        nu_out[m] = _norm(fwd[m] * temporal_msgs[m] * bwd[m], f"chain message {m}")
        belief[m] = _norm(nu_out[m] * nu_in[m], f"chain belief {m}")
    return nu_out, belief


def extrinsic_ratio(pi_post: np.ndarray, nu_out: np.ndarray) -> np.ndarray:
    """Guarded turbo ratio nu_in = posterior / nu_out, row-normalized."""
    m_vue, n_grid = pi_post.shape
    out = np.empty_like(pi_post)
    for m in range(m_vue):
        denom = nu_out[m]
        ratio = np.where(denom < _MSG_FLOOR, 1.0 / n_grid, pi_post[m] / np.maximum(denom, _MSG_FLOOR))
        s = ratio.sum()
        if s <= 0 or not np.isfinite(s):
            raise DegenerateMessageError("extrinsic ratio lost all mass")
        ratio = np.maximum(ratio / s, 1e-30)
        out[m] = ratio / ratio.sum()
    return out


def initialize_posteriors(
    y: np.ndarray,
    mats: SensingMatrices,
    prior_q: CategoricalQ,
    prior_c: BernoulliC,
    hyper: Hyperparams,
    opts: VbiOptions,
) -> PosteriorSet:
    """Start the factor posteriors from a flat location state.

    The location posterior starts uniform regardless of the prior: the prior
    acts through the chain message inside the categorical update. Seeding the
    posterior (and with it the precision mixture) from a concentrated prior
    would lock every other cell out of the Gaussian fit before any evidence
    is seen.
    """
    n_los = mats.n_vue * mats.n_grid
    n_v = mats.Xi.shape[1]
    z_r = GaussianPosterior.zeros(n_los) if mats.ris_enabled else None
    z_b = GaussianPosterior.zeros(n_los)
    v = GaussianPosterior.zeros(n_v)
    flat_q = CategoricalQ.uniform(mats.n_vue, mats.n_grid)
    if opts.iid_priors:
        rho_r = update_rho_iid(z_r) if mats.ris_enabled else None
        rho_b = update_rho_iid(z_b)
        gamma = update_rho_iid(v)
    else:
        rho_r = update_rho(flat_q, z_r, hyper, "R") if mats.ris_enabled else None
        rho_b = update_rho(flat_q, z_b, hyper, "B")
        gamma = update_gamma(prior_c, v, hyper)
    kappa = GammaPosterior(
        np.array([hyper.a_kappa + y.size]),
        np.array([hyper.b_kappa + float(np.vdot(y, y).real)]),
    )
    return PosteriorSet(
        z_r=z_r,
        z_b=z_b,
        v=v,
        rho_r=rho_r,
        rho_b=rho_b,
        gamma=gamma,
        kappa=kappa,
        q=flat_q,
        c=BernoulliC(prior_c.p.copy()),
    )


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(old)), 1e-12)
    return float(np.linalg.norm(new - old)) / denom


def e_step(
    y: np.ndarray,
    mats: SensingMatrices,
    prior_q: CategoricalQ,
    prior_c: BernoulliC,
    hyper: Hyperparams,
    opts: VbiOptions | None = None,
    init: PosteriorSet | None = None,
    messages: MessageSet | None = None,
) -> tuple[PosteriorSet, MessageSet]:
    """Run update sweeps plus one chain exchange per pass until stationary.

    Returns the final posterior set and messages; non-convergence within
    max_iters is reported through ``PosteriorSet.converged`` rather than an
    error.
    """
    opts = opts or VbiOptions()
    post = init if init is not None else initialize_posteriors(
        y, mats, prior_q, prior_c, hyper, opts
    )
    msgs = messages if messages is not None else MessageSet.initial(prior_q.pi)
    proj = ProjectedModel(y, mats)

    def exchange():
        msgs.nu_in = extrinsic_ratio(post.q.pi, msgs.nu_out)
        nu_out_new, belief = forward_backward_q(
            msgs.nu_in, opts.spatial_kernel, prior_q.pi
        )
        gamma_d = np.clip(opts.message_damping, 0.0, 1.0)
        if gamma_d < 1.0:  # geometric damping stabilizes the turbo loop
            mixed = np.exp(
                (1 - gamma_d) * np.log(np.maximum(msgs.nu_out, 1e-300))
                + gamma_d * np.log(np.maximum(nu_out_new, 1e-300))
            )
            msgs.nu_out = mixed / mixed.sum(axis=1, keepdims=True)
        else:
            msgs.nu_out = nu_out_new
        msgs.belief = belief

    converged = False
    sweep = 0
    for sweep in range(1, opts.max_iters + 1):
        mu_z_old = post.mu_z_stacked().copy()
        mu_v_old = post.v.mean.copy()

        update_z(y, mats, post, hyper, opts, proj)
        update_v(y, mats, post, hyper, opts, proj)
        if opts.iid_priors:
            if mats.ris_enabled:
                post.rho_r = update_rho_iid(post.z_r)
            post.rho_b = update_rho_iid(post.z_b)
            post.gamma = update_rho_iid(post.v)
        else:
            if mats.ris_enabled:
                post.rho_r = update_rho(post.q, post.z_r, hyper, "R")
            post.rho_b = update_rho(post.q, post.z_b, hyper, "B")
            post.gamma = update_gamma(post.c, post.v, hyper)
        post.kappa = update_kappa(y, mats, post, hyper, proj)
        if not opts.iid_priors:
            post.q = update_q(msgs.nu_out, hyper, post)
            if not opts.freeze_support:
                lam = np.clip(opts.support_damping, 0.0, 1.0)
                c_new = update_c(prior_c, hyper, post)
                delta = np.abs(c_new.p - post.c.p).max()
                if delta > 1e-3:  # hysteresis: stop chasing converged support
                    post.c = BernoulliC((1 - lam) * post.c.p + lam * c_new.p)
            if opts.exchange_messages and opts.exchange_every_sweep:
                exchange()

        dz = _rel_change(post.mu_z_stacked(), mu_z_old)
        dv = _rel_change(post.v.mean, mu_v_old)
        if dz < opts.tol and dv < opts.tol:
            converged = True
            break

    if not opts.iid_priors and opts.exchange_messages and not opts.exchange_every_sweep:
        # one exchange per pass: the chain message stays fixed while the
        # sweeps settle, then updates once
        exchange()
    post.converged = converged
    post.n_sweeps = sweep
    return post, msgs


def elbo(
    y: np.ndarray,
    mats: SensingMatrices,
    post: PosteriorSet,
    prior_q: CategoricalQ,
    prior_c: BernoulliC,
    hyper: Hyperparams,
) -> float:
    """Evidence lower bound of the factorized posterior (negative free energy).

    Full evaluation including every entropy term; monotone non-decreasing
    across update sweeps when the priors are held fixed.
    """
    kg = y.size
    kap = float(post.kappa.mean()[0])
    kap_log = float(post.kappa.mean_log()[0])
    total = kg * (kap_log - _LOG_PI) - kap * expected_residual_energy(y, mats, post)

    # LoS channel layers
    for branch, gauss, rho in post.z_branches():
        a, b, abar, bbar = _branch_hyper(hyper, branch)
        t, e = rho.mean_log(), rho.mean()
        m2 = np.maximum(gauss.second_moment_diag(), 0.0)
        total += float(np.sum(t - e * m2)) - m2.size * _LOG_PI
        pi_flat = post.q.pi.reshape(-1)
        total += float(
            np.sum(
                pi_flat * (a * np.log(b) - gammaln(a) + (a - 1) * t - b * e)
                + (1 - pi_flat) * (abar * np.log(bbar) - gammaln(abar) + (abar - 1) * t - bbar * e)
            )
        )
        total += rho.entropy()
        _, logdet_cov = hpd_solve_logdet_guard(gauss.cov)
        total += m2.size * (1 + _LOG_PI) + logdet_cov

    # scatterer layers
    a, b, abar, bbar = _branch_hyper(hyper, "N")
    t, e = post.gamma.mean_log(), post.gamma.mean()
    m2 = np.maximum(post.v.second_moment_diag(), 0.0)
    total += float(np.sum(t - e * m2)) - m2.size * _LOG_PI
    p = np.clip(post.c.p.reshape(-1), 0.0, 1.0)
    total += float(
        np.sum(
            p * (a * np.log(b) - gammaln(a) + (a - 1) * t - b * e)
            + (1 - p) * (abar * np.log(bbar) - gammaln(abar) + (abar - 1) * t - bbar * e)
        )
    )
    total += post.gamma.entropy()
    _, logdet_v = hpd_solve_logdet_guard(post.v.cov)
    total += m2.size * (1 + _LOG_PI) + logdet_v

    # categorical location layer
    tiny = 1e-300
    total += float(np.sum(post.q.pi * np.log(np.maximum(prior_q.pi, tiny))))
    total += float(-np.sum(post.q.pi * np.log(np.maximum(post.q.pi, tiny))))

    # Bernoulli support layer
    pc = np.clip(prior_c.p.reshape(-1), tiny, 1 - tiny)
    total += float(np.sum(p * np.log(pc) + (1 - p) * np.log1p(-pc)))
    pq = np.clip(p, tiny, 1 - tiny)
    total += float(-np.sum(p * np.log(pq) + (1 - p) * np.log1p(-pq)))

    # noise precision layer
    total += (
        hyper.a_kappa * np.log(hyper.b_kappa)
        - float(gammaln(hyper.a_kappa))
        + (hyper.a_kappa - 1) * kap_log
        - hyper.b_kappa * kap
    )
    total += post.kappa.entropy()
    return float(total)


def hpd_solve_logdet_guard(cov: np.ndarray) -> tuple[None, float]:
    """log det of a Hermitian PSD covariance via Cholesky with tiny jitter."""
    n = cov.shape[0]
    jitter = 1e-300
    for _ in range(5):
        try:
            c, _ = cho_factor(cov + jitter * np.eye(n), lower=True)
            return None, 2.0 * float(np.sum(np.log(np.abs(np.diag(c)))))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 1e10, 1e-30 * np.trace(cov).real / n)
    raise ConditioningError("covariance logdet failed")
