"""Backward/forward-pass trajectory solvers.

Three solvers share one outer loop: a risk-neutral iterative LQR, a
risk-sensitive solver with process noise, and a risk-sensitive solver with
measurement uncertainty that runs its recursion on the plant-plus-estimator
augmented system.

Under the exponential transform the value function is
``exp{sigma (1/2 dx'S dx + s'dx + sbar)}`` and the Gaussian expectation over
the process noise inflates the quadratic before the control minimization:

    M = S + sigma S C (Om^-1 - sigma C'S C)^-1 C' S

computed here through the symmetric square root of the noise covariance so
that singular covariances are handled; positive definiteness of the inner
matrix is exactly the feasibility boundary of the exponential integral
(``NeuroticBreakdown`` beyond it).  With sigma = 0 the expectation only
shifts the constant by the usual trace term and the recursion reduces to the
risk-neutral one.
"""

import inspect
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .estimator import build_augmented, run_filter_pass
from .exceptions import (
    ContractError,
    NeuroticBreakdown,
    NotFittedError,
    NumericalError,
    RegularizationError,
)
from .models import linearize
from .validation import as_vector, symmetrize

DEFAULT_ALPHAS = tuple(0.5 ** k for k in range(7))  # 1, 1/2, ..., 1/64

NEUTRAL = "neutral"
RISK_PROCESS = "risk_process"
RISK_MEASUREMENT = "risk_measurement"
MODES = (NEUTRAL, RISK_PROCESS, RISK_MEASUREMENT)


@dataclass(frozen=True)
class ValueQuadratic:
    """Quadratic argument (S, s, sbar) of the exponential value function."""

    S: np.ndarray
    s: np.ndarray
    sbar: float

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.size and np.max(np.abs(S - S.T)) > 1e-10 * max(1.0, np.max(np.abs(S))):
            raise ContractError("S must be symmetric within 1e-10")
        object.__setattr__(self, "S", symmetrize(S))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))


@dataclass(frozen=True)
class Policy:
    """Per-step affine policy du = k + K (measured deviation).

    For the measurement-uncertainty solver the recursion's minimizer on the
    stacked (true, estimated) state is split into ``Kx`` (true-state
    channel) and ``Kxhat`` (estimate channel); ``Ks`` stores their sum, the
    policy conditioned on the available information, which at run time
    multiplies the measured state deviation.  ``Ks`` is therefore the
    impedance the policy presents to an unexpected deviation and is what
    the gain analysis reads.
    """

    ks: np.ndarray            # (T, m)
    Ks: np.ndarray            # (T, m, n)
    mode: str = NEUTRAL
    Kx: np.ndarray = None     # (T, m, n) split channels, measurement mode
    Kxhat: np.ndarray = None

    @property
    def horizon(self):
        return self.ks.shape[0]

    def feedforward(self, t):
        return self.ks[t]

    def feedback(self, t):
        return self.Ks[t]


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    alpha: float
    max_feedforward: float
    breakdown: bool = False


@dataclass
class ForwardPassResult:
    xs: np.ndarray
    us: np.ndarray
    cost: float
    diverged: bool = False


def _psd_sqrt(mat):
    w, V = np.linalg.eigh(np.asarray(mat, dtype=float))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def risk_completion(value, C, omega, sigma):
    """Gaussian expectation of the exponential value through one noise step.

    Returns (M, m, cbar) such that, with pre-noise mean ``mu = A dx + B du``,
    ``E[V(mu + C w)] = exp{sigma (1/2 mu'M mu + m'mu + cbar)}``.  For
    sigma = 0 this is the risk-neutral expectation: M = S, m = s and the
    constant picks up ``1/2 tr(C'S C Omega)``.

    Raises NeuroticBreakdown when the completion matrix
    ``I - sigma W C'S C W`` (W the PSD square root of Omega) loses positive
    definiteness, which is exactly where the integral stops existing.
    """
    S, s, sbar = value.S, value.s, value.sbar
    C = np.asarray(C, dtype=float)
    omega = np.asarray(omega, dtype=float)
    CtSC = C.T @ S @ C
    if sigma == 0.0:
        return S.copy(), s.copy(), sbar + 0.5 * float(np.trace(CtSC @ omega))
    W = _psd_sqrt(omega)
    N = np.eye(W.shape[0]) - sigma * W @ CtSC @ W
    w, V = np.linalg.eigh(symmetrize(N))
    if w[0] <= 0.0:
        raise NeuroticBreakdown(
            f"exponential expectation diverged (smallest eigenvalue {w[0]:.3e})",
            eigenvalue=float(w[0]),
        )
    Ninv = (V / w) @ V.T
    G = W @ Ninv @ W            # equals (Omega^-1 - sigma C'S C)^-1 when invertible
    CGCt = C @ G @ C.T
    M = symmetrize(S + sigma * S @ CGCt @ S)
    m = s + sigma * S @ CGCt @ s
    logdet = float(np.sum(np.log(w)))
    cbar = sbar + 0.5 * sigma * float(s @ CGCt @ s) - logdet / (2.0 * sigma)
    return M, m, cbar


def _complete_noise_quadratic(Hzz, Hzw, Hww, gz, gw, c, cov, sigma):
    """Integrate the exponential of a joint quadratic over its noise block.

    The exponent is sigma (1/2 [z; w]' H [z; w] + [gz; gw]' [z; w] + c) with
    w ~ N(0, cov).  Returns the (S, s, c) triple of the resulting quadratic
    in z, or raises NeuroticBreakdown when the integral diverges.  sigma = 0
    degenerates to the plain expectation (trace correction only).
    """
    if sigma == 0.0:
        return Hzz, gz, c + 0.5 * float(np.trace(Hww @ cov))
    W = _psd_sqrt(cov)
    Nm = np.eye(W.shape[0]) - sigma * W @ Hww @ W
    w, V = np.linalg.eigh(symmetrize(Nm))
    if w[0] <= 0.0:
        raise NeuroticBreakdown(
            f"exponential expectation diverged (smallest eigenvalue {w[0]:.3e})",
            eigenvalue=float(w[0]),
        )
    Tm = W @ ((V / w) @ V.T) @ W
    S = symmetrize(Hzz + sigma * Hzw @ Tm @ Hzw.T)
    s = gz + sigma * Hzw @ Tm @ gw
    cc = c + 0.5 * sigma * float(gw @ Tm @ gw) \
        - float(np.sum(np.log(w))) / (2.0 * sigma)
    return S, s, cc


def _measurement_step(value, step, aug, cost, sigma, lam):
    """One backward step of the measurement-uncertainty recursion.

    Gain extraction follows the augmented-system recursion: complete the
    expectation over (w, g), form the stage quadratic on the stacked state
    z = (dx, dxhat) with the tracking cost on the true deviation, and split
    the minimizer into its true-state and estimate channels.  The executed
    policy applies their sum to the information actually available at run
    time, the measured deviation:

        du = k + K_cond (F dx + D g)

    and the value update integrates this executed law, current-step
    measurement noise included.  Feedback therefore pays for the noise it
    injects through its own gain; directions whose measurements cannot be
    trusted (a spiked contact covariance ahead of touchdown) make large
    gains expensive to a risk-averse objective and the impedance drops
    exactly there.  With G = 0 the estimate channel collapses and the
    recursion reduces to the marginal risk-sensitive pass.
    """
    A, B, C, F, D = step.A, step.B, step.C, step.F, step.D
    n, m = A.shape[0], B.shape[1]
    Atil, Btil, Ctil = aug.Atil, aug.Btil, aug.Ctil
    noise_cov = aug.noise_cov
    nw = C.shape[1]

    M, mvec, cbar = risk_completion(value, Ctil, noise_cov, sigma)

    Qz = np.zeros((2 * n, 2 * n))
    Qz[:n, :n] = cost.Q
    qz = np.concatenate([cost.q, np.zeros(n)])
    Pz = np.zeros((m, 2 * n))
    Pz[:, :n] = cost.P

    MA = M @ Atil
    Quu = cost.R + Btil.T @ M @ Btil
    Quz = Pz + Btil.T @ MA
    gu = cost.r + Btil.T @ mvec

    Quu_reg = symmetrize(Quu) + lam * np.eye(m)
    try:
        chol = scipy.linalg.cho_factor(Quu_reg, lower=True)
    except scipy.linalg.LinAlgError:
        raise _NotPositiveDefinite
    k = -scipy.linalg.cho_solve(chol, gu)
    Kfull = -scipy.linalg.cho_solve(chol, Quz)
    Kx, Kxhat = Kfull[:, :n].copy(), Kfull[:, n:].copy()
    Kcond = Kx + Kxhat

    # Executed law in z coordinates: du = k + Kz z + Kgam g with the
    # feedback entering through the true-state channel (the measurement).
    KcF = Kcond @ F
    Kgam = Kcond @ D
    Kz = np.zeros((m, 2 * n))
    Kz[:, :n] = KcF
    Acl = Atil + Btil @ Kz
    Ccl = Ctil.copy()
    Ccl[:, nw:] = Ccl[:, nw:] + Btil @ Kgam
    Du_xi = np.zeros((m, noise_cov.shape[0]))
    Du_xi[:, nw:] = Kgam
    S1, s1 = value.S, value.s

    R = cost.R
    Hzz = Qz + Kz.T @ R @ Kz + Pz.T @ Kz + Kz.T @ Pz + Acl.T @ S1 @ Acl
    Hzw = Kz.T @ R @ Du_xi + Pz.T @ Du_xi + Acl.T @ S1 @ Ccl
    Hww = Du_xi.T @ R @ Du_xi + Ccl.T @ S1 @ Ccl
    off = Btil @ k
    gz_cl = qz + Kz.T @ (R @ k + cost.r) + Pz.T @ k + Acl.T @ (S1 @ off + s1)
    gw_cl = Du_xi.T @ (R @ k + cost.r) + Ccl.T @ (S1 @ off + s1)
    c_cl = cost.c0 + float(cost.r @ k) + 0.5 * float(k @ R @ k) \
        + 0.5 * float(off @ S1 @ off) + float(s1 @ off) + value.sbar

    S_new, s_new, c_new = _complete_noise_quadratic(
        Hzz, Hzw, Hww, gz_cl, gw_cl, c_cl, noise_cov, sigma)

    improvement = -(float(gu @ k) + 0.5 * float(k @ Quu @ k))
    return ValueQuadratic(S_new, s_new, c_new), (k, Kcond, Kx, Kxhat), improvement


def backward_pass(steps, costs, terminal, sigma=0.0, mode=NEUTRAL, omega=None,
                  aug=None, reg_floor=1e-6, reg_cap=1e6):
    """Value recursion and policy extraction.

    ``terminal`` is the (S, s, sbar) triple of the terminal cost.  In
    measurement mode the recursion runs on the augmented steps (required via
    ``aug``) and the feedback is split into its true-state and estimate
    blocks, whose sum is the executable gain.

    Returns (policy, values, expected_improvement) where the improvement is
    the predicted cost decrease of a full (alpha = 1) step.
    """
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    T = len(steps)
    if len(costs) != T:
        raise ContractError("steps and costs must have equal length")
    if mode == RISK_MEASUREMENT and (aug is None or len(aug) != T):
        raise ContractError("measurement mode requires augmented steps")

    n = steps[0].A.shape[0] if T else len(terminal[1])
    m = steps[0].B.shape[1] if T else 0
    sig = 0.0 if mode == NEUTRAL else float(sigma)

    lam = 0.0
    while True:
        try:
            return _backward_once(steps, costs, terminal, sig, mode, omega, aug,
                                  n, m, lam)
        except _NotPositiveDefinite:
            lam = max(reg_floor, 2.0 * lam)
            if lam > reg_cap:
                raise RegularizationError(
                    f"control Hessian indefinite at regularization {lam:.1e}"
                ) from None


class _NotPositiveDefinite(Exception):
    pass


def _backward_once(steps, costs, terminal, sigma, mode, omega, aug, n, m, lam):
    T = len(steps)
    augmented = mode == RISK_MEASUREMENT
    S_T, s_T, c_T = terminal
    if augmented:
        S = np.zeros((2 * n, 2 * n))
        S[:n, :n] = S_T
        value = ValueQuadratic(S, np.concatenate([np.asarray(s_T, float),
                                                  np.zeros(n)]), float(c_T))
    else:
        value = ValueQuadratic(np.asarray(S_T, float), np.asarray(s_T, float),
                               float(c_T))
    values = [None] * (T + 1)
    values[T] = value

    ks = np.zeros((T, m))
    Ks = np.zeros((T, m, n))
    Kx = np.zeros((T, m, n)) if augmented else None
    Kxhat = np.zeros((T, m, n)) if augmented else None
    expected = 0.0

    for t in range(T - 1, -1, -1):
        step = steps[t]
        cost = costs[t]
        try:
            if augmented:
                values[t], pieces, impr = _measurement_step(
                    values[t + 1], step, aug[t], cost, sigma, lam)
                k, Kcond, kx, kxh = pieces
                ks[t] = k
                Ks[t] = Kcond
                Kx[t] = kx
                Kxhat[t] = kxh
                expected += impr
                continue
            A, B, C = step.A, step.B, step.C
            noise_cov = omega if omega is not None \
                else np.zeros((C.shape[1],) * 2)
            M, mvec, cpart = risk_completion(values[t + 1], C, noise_cov,
                                             sigma)
        except NeuroticBreakdown as err:
            raise NeuroticBreakdown(
                f"{err} at step {t}", step=t, eigenvalue=err.eigenvalue
            ) from None

        MA = M @ A
        Qxx = cost.Q + A.T @ MA
        Quu = cost.R + B.T @ M @ B
        Qux = cost.P + B.T @ MA
        qx = cost.q + A.T @ mvec
        qu = cost.r + B.T @ mvec
        cbar = cpart + cost.c0

        Quu_reg = symmetrize(Quu) + lam * np.eye(m)
        try:
            chol = scipy.linalg.cho_factor(Quu_reg, lower=True)
        except scipy.linalg.LinAlgError:
            raise _NotPositiveDefinite
        k = -scipy.linalg.cho_solve(chol, qu)
        K = -scipy.linalg.cho_solve(chol, Qux)

        S_new = symmetrize(Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K)
        s_new = qx + K.T @ qu + Qux.T @ k + K.T @ Quu @ k
        c_new = cbar + float(qu @ k) + 0.5 * float(k @ Quu @ k)
        values[t] = ValueQuadratic(S_new, s_new, c_new)

        ks[t] = k
        Ks[t] = K
        expected -= float(qu @ k) + 0.5 * float(k @ Quu @ k)

    if augmented:
        policy = Policy(ks=ks, Ks=Ks, mode=mode, Kx=Kx, Kxhat=Kxhat)
    else:
        policy = Policy(ks=ks, Ks=Ks, mode=mode)
    return policy, values, expected


def forward_pass(model, schedule, cost_spec, xs_n, us_n, policy, alpha):
    """Deterministic rollout of the improved policy around a nominal.

    Applies ``u_t = u_n + alpha k_t + K_t (x (-) x_n)`` (line search scales
    the feedforward only) through the plant under the phase schedule; the
    feedback acts on the deterministic-plant deviation, which with zero
    noise realizations equals the measured/estimated deviation the policy
    was derived for.  A non-finite state or a numerical failure mid-rollout
    flags the result as diverged; the caller treats it as a failed
    line-search candidate.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ContractError("alpha must lie in [0, 1]")
    space = model.space
    T = schedule.horizon
    xs = np.zeros((T + 1, space.tangent_dim))
    us = np.zeros((T, model.control_dim))
    xs[0] = xs_n[0]
    x = xs[0]
    for t in range(T):
        dx = space.difference(x, xs_n[t])
        u = us_n[t] + alpha * policy.ks[t] + policy.Ks[t] @ dx
        try:
            x_next = model.step(x, u, schedule.contacts_at(t))
        except NumericalError:
            return ForwardPassResult(xs[: t + 1], us[:t], np.inf, diverged=True)
        if not np.all(np.isfinite(x_next)):
            return ForwardPassResult(xs[: t + 1], us[:t], np.inf, diverged=True)
        x = x_next
        us[t] = u
        xs[t + 1] = x
    return ForwardPassResult(xs, us, cost_spec.evaluate(xs, us), diverged=False)


class BaseTrajectorySolver:
    """Shared outer loop with a fit/predict estimator surface.

    Hyperparameters live on the constructor and are introspectable through
    ``get_params``/``set_params``; ``fit`` consumes an initial state and seed
    controls and exposes the solution as trailing-underscore attributes.
    """

    _mode = NEUTRAL

    def __init__(self, model, schedule, cost, noise=None, sigma=0.0,
                 max_iters=60, tol=1e-8, alphas=DEFAULT_ALPHAS,
                 reg_floor=1e-6, reg_cap=1e6):
        self.model = model
        self.schedule = schedule
        self.cost = cost
        self.noise = noise
        self.sigma = sigma
        self.max_iters = max_iters
        self.tol = tol
        self.alphas = alphas
        self.reg_floor = reg_floor
        self.reg_cap = reg_cap

    # sklearn-style parameter plumbing ------------------------------------

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return sorted(name for name in sig.parameters if name != "self")

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ContractError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    # solving --------------------------------------------------------------

    def _validate(self):
        if float(self.tol) <= 0:
            raise ContractError("tol must be positive")
        if not all(0.0 < a <= 1.0 for a in self.alphas):
            raise ContractError("line-search values must lie in (0, 1]")
        if self.cost.horizon != self.schedule.horizon:
            raise ContractError(
                f"cost horizon {self.cost.horizon} != schedule horizon "
                f"{self.schedule.horizon}"
            )
        if self._mode == RISK_MEASUREMENT and self.noise is None:
            raise ContractError("measurement mode requires a noise model")

    def _rollout_open_loop(self, x0, us):
        xs = np.zeros((self.schedule.horizon + 1, self.model.space.tangent_dim))
        xs[0] = x0
        for t in range(self.schedule.horizon):
            xs[t + 1] = self.model.step(xs[t], us[t], self.schedule.contacts_at(t))
        return xs

    def _linearize_all(self, xs, us):
        return [linearize(self.model, xs[t], us[t], self.schedule.contacts_at(t))
                for t in range(self.schedule.horizon)]

    def _prepare_pass(self, xs, us):
        """Linearizations plus mode-specific extras for one backward pass."""
        steps = self._linearize_all(xs, us)
        omega = self.noise.omega if self.noise is not None else None
        fpass, aug = None, None
        if self._mode == RISK_MEASUREMENT:
            fpass = run_filter_pass(self.model, self.schedule, xs, us,
                                    self.noise, steps=steps)
            aug = [build_augmented(steps[t], fpass.gains[t], self.noise.omega,
                                   fpass.gammas[t],
                                   err_cov=fpass.covariances[t])
                   for t in range(len(steps))]
        return steps, omega, fpass, aug

    def _backward(self, xs, us, steps, omega, aug):
        costs = [self.cost.quadratize(xs[t], us[t], t)
                 for t in range(self.schedule.horizon)]
        terminal = self.cost.quadratize_terminal(xs[-1])
        return backward_pass(steps, costs, terminal, sigma=self.sigma,
                             mode=self._mode, omega=omega, aug=aug,
                             reg_floor=self.reg_floor, reg_cap=self.reg_cap)

    def fit(self, x0, us_init=None):
        """Iterate linearize / backward pass / line search to convergence.

        Sets ``xs_``, ``us_``, ``policy_``, ``values_``, ``cost_``, ``log_``,
        ``converged_``, ``no_progress_`` and (measurement mode)
        ``filter_pass_``.  Returns self.
        """
        self._validate()
        T = self.schedule.horizon
        x0 = as_vector(x0, self.model.space.tangent_dim, "x0")
        if us_init is None:
            us_init = np.zeros((T, self.model.control_dim))
        us = np.asarray(us_init, dtype=float)
        if us.shape != (T, self.model.control_dim):
            raise ContractError(
                f"us_init must have shape {(T, self.model.control_dim)}"
            )
        xs = self._rollout_open_loop(x0, us)
        cost = self.cost.evaluate(xs, us)

        log = []
        no_progress = 0
        converged = False
        policy = values = fpass = None
        for it in range(1, int(self.max_iters) + 1):
            steps, omega, fpass, aug = self._prepare_pass(xs, us)
            try:
                policy, values, expected = self._backward(xs, us, steps, omega, aug)
            except NeuroticBreakdown:
                log.append(IterationRecord(it, cost, 0.0, np.nan, breakdown=True))
                self.log_ = log
                raise
            kmax = float(np.max(np.abs(policy.ks))) if policy.ks.size else 0.0

            accepted_alpha = 0.0
            for alpha in self.alphas:
                trial = forward_pass(self.model, self.schedule, self.cost,
                                     xs, us, policy, alpha)
                if trial.diverged or not np.isfinite(trial.cost):
                    continue
                if trial.cost < cost:
                    prev = cost
                    xs, us, cost = trial.xs, trial.us, trial.cost
                    accepted_alpha = alpha
                    break
            log.append(IterationRecord(it, cost, accepted_alpha, kmax))
            if accepted_alpha > 0.0:
                no_progress = 0
                if abs(prev - cost) < float(self.tol):
                    converged = True
                    break
            else:
                # Nothing to gain: the quadratic model predicts less than tol.
                if abs(expected) < float(self.tol):
                    converged = True
                    break
                no_progress += 1
                if no_progress >= 3:
                    break

        # Final pass so the returned gains correspond to the final nominal.
        steps, omega, fpass, aug = self._prepare_pass(xs, us)
        policy, values, _ = self._backward(xs, us, steps, omega, aug)

        self.xs_ = xs
        self.us_ = us
        self.cost_ = cost
        self.policy_ = policy
        self.values_ = values
        self.filter_pass_ = fpass
        self.log_ = log
        self.converged_ = converged
        self.no_progress_ = (not converged) and no_progress >= 3
        self.iterations_ = len(log)
        return self

    def predict(self, x, t):
        """Policy control at state ``x`` and step ``t`` around the fit nominal."""
        if not hasattr(self, "policy_"):
            raise NotFittedError("call fit before predict")
        if not 0 <= t < self.policy_.horizon:
            raise ContractError(f"step {t} outside horizon")
        dx = self.model.space.difference(as_vector(x, self.model.space.tangent_dim),
                                         self.xs_[t])
        return self.us_[t] + self.policy_.ks[t] + self.policy_.Ks[t] @ dx

    @property
    def predicted_objective_(self):
        """Risk-sensitive (or expected, when neutral) cost-to-go at the start."""
        if not hasattr(self, "values_"):
            raise NotFittedError("call fit before reading the objective")
        return self.values_[0].sbar


class IterativeLQR(BaseTrajectorySolver):
    """Risk-neutral iLQR baseline."""

    _mode = NEUTRAL


class RiskSensitiveILQR(BaseTrajectorySolver):
    """Risk-sensitive solver over process noise (exponential cost)."""

    _mode = RISK_PROCESS


class MeasurementRiskILQR(BaseTrajectorySolver):
    """Risk-sensitive solver with measurement uncertainty on the augmented
    plant + estimator system; the returned feedback is the conditioned gain."""

    _mode = RISK_MEASUREMENT


def iteration_log_to_csv(log, path):
    """Write an iteration log as CSV (iteration, cost, alpha, max_feedforward,
    breakdown_flag)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,cost,alpha,max_feedforward,breakdown_flag\n")
        for rec in log:
            fh.write(f"{rec.iteration},{rec.cost:.17g},{rec.alpha:.17g},"
                     f"{rec.max_feedforward:.17g},{int(rec.breakdown)}\n")
