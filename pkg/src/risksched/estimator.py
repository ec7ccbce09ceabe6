"""Error-state Kalman filtering along a nominal trajectory.

The filter runs on trajectory deviations: given per-step linearizations, the
gain ``G = A S F^T (F S F^T + D G_t D^T)^-1`` minimizes the error covariance
of the one-step-ahead error dynamics ``de' = (A - GF) de + C w - G D g``.
Gains are computed once per outer solver iteration on the fresh nominal and
held fixed while the backward pass runs on the augmented system that stacks
the plant and estimator deviations.
"""

from dataclasses import dataclass, field

import numpy as np

from .contact import project_contact_covariance
from .exceptions import ContractError, NumericalError
from .models import linearize
from .validation import as_matrix, check_psd, symmetrize


@dataclass(frozen=True)
class NoiseModel:
    """Process / measurement covariances with contact-uncertainty activation.

    ``gamma_c`` lives on the swing-foot (dp, dpdot) coordinates and is folded
    into the measurement covariance only inside the landing window (the
    trailing ``landing_fraction`` of each swing phase); it is zero during
    lift-off and early swing.
    """

    omega: np.ndarray
    gamma_fs: np.ndarray
    gamma_c: np.ndarray = None
    landing_fraction: float = 0.3

    def __post_init__(self):
        omega = check_psd(np.asarray(self.omega, dtype=float), tol=1e-10, name="omega")
        gamma_fs = check_psd(np.asarray(self.gamma_fs, dtype=float), tol=1e-10,
                             name="gamma_fs")
        gamma_c = self.gamma_c
        if gamma_c is not None:
            gamma_c = check_psd(np.asarray(gamma_c, dtype=float), tol=1e-10,
                                name="gamma_c")
        if not 0.0 <= self.landing_fraction <= 1.0:
            raise ContractError("landing_fraction must lie in [0, 1]")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "gamma_fs", gamma_fs)
        object.__setattr__(self, "gamma_c", gamma_c)

    @classmethod
    def diagonal(cls, n, omega=1e-6, gamma_fs=5e-3, gamma_c=None,
                 landing_fraction=0.3):
        return cls(omega * np.eye(n), gamma_fs * np.eye(n), gamma_c,
                   landing_fraction)


@dataclass(frozen=True)
class FilterPass:
    """Gains and error covariances of one filtering sweep."""

    gains: tuple          # T matrices, tangent x meas
    covariances: tuple    # T+1 matrices, tangent x tangent
    gammas: tuple         # T per-step measurement covariances actually used
    sigma0: np.ndarray

    @property
    def horizon(self):
        return len(self.gains)


@dataclass(frozen=True)
class AugmentedStep:
    """Stacked plant + estimator linear dynamics for one step.

    Atil = [[A, 0], [G F, A - G F]],  Btil = [B; B],
    Ctil = blockdiag(C, G D),  noise_cov = blockdiag(Omega, Gamma_t).

    The filter context of the step rides along: the gain G, the error
    covariance Sigma_t of (dx - dxhat), and the measurement covariance; the
    measurement-uncertainty backward pass consumes these directly.
    """

    Atil: np.ndarray
    Btil: np.ndarray
    Ctil: np.ndarray
    noise_cov: np.ndarray
    gain: np.ndarray = None
    err_cov: np.ndarray = None
    gamma: np.ndarray = None


def kalman_gain(A, sigma, F, D, gamma):
    """G = A S F^T (F S F^T + D Gamma D^T)^-1."""
    A, F, D = (np.asarray(m, dtype=float) for m in (A, F, D))
    sigma = np.asarray(sigma, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    innovation = F @ sigma @ F.T + D @ gamma @ D.T
    try:
        sol = np.linalg.solve(innovation.T, (A @ sigma @ F.T).T).T
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"singular innovation covariance: {err}") from err
    if not np.all(np.isfinite(sol)):
        raise NumericalError("singular innovation covariance (non-finite gain)")
    return sol


def propagate_error_cov(A, G, F, C, omega, D, gamma, sigma):
    """S' = (A - GF) S (A - GF)^T + C Omega C^T + G D Gamma D^T G^T.

    The output is symmetrized and its (numerically) negative eigenvalues are
    clipped at zero so downstream factorizations stay valid.
    """
    A, G, F, C, D = (np.asarray(m, dtype=float) for m in (A, G, F, C, D))
    closed = A - G @ F
    out = closed @ sigma @ closed.T + C @ omega @ C.T
    GD = G @ D
    out = out + GD @ gamma @ GD.T
    out = symmetrize(out)
    w, V = np.linalg.eigh(out)
    if w[0] < 0:
        out = symmetrize((V * np.clip(w, 0.0, None)) @ V.T)
    return out


def gamma_schedule(model, schedule, xs, noise):
    """Per-step measurement covariance along a nominal trajectory.

    Outside landing windows this is the full-state covariance; inside them
    the swing-foot uncertainty is projected into state space and added.
    """
    gammas = []
    for t in range(schedule.horizon):
        _, contacts, swing = schedule.active_phase(t)
        gamma = noise.gamma_fs
        if (noise.gamma_c is not None and swing
                and schedule.in_landing_window(t, noise.landing_fraction)):
            swing_map = model.swing_map(xs[t], contacts)
            if swing_map is not None:
                gamma = project_contact_covariance(noise.gamma_fs, noise.gamma_c,
                                                   swing_map)
        gammas.append(gamma)
    return gammas


def run_filter_pass(model, schedule, xs, us, noise, sigma0=None, steps=None):
    """Sweep the filter along a nominal trajectory.

    Linearizes each step (or reuses ``steps`` when provided), composes the
    per-step measurement covariance, computes the gain and then propagates
    the error covariance.  ``sigma0`` defaults to the full-state measurement
    covariance.
    """
    T = schedule.horizon
    if len(xs) < T + 1 or len(us) < T:
        raise ContractError("nominal trajectory does not cover the horizon")
    if steps is None:
        steps = [linearize(model, xs[t], us[t], schedule.contacts_at(t))
                 for t in range(T)]
    gammas = gamma_schedule(model, schedule, xs, noise)
    sigma = np.asarray(sigma0, dtype=float) if sigma0 is not None \
        else noise.gamma_fs.copy()
    sigma = check_psd(sigma, tol=1e-10, name="sigma0")
    gains, covs = [], [sigma]
    for t in range(T):
        st = steps[t]
        G = kalman_gain(st.A, sigma, st.F, st.D, gammas[t])
        sigma = propagate_error_cov(st.A, G, st.F, st.C, noise.omega,
                                    st.D, gammas[t], sigma)
        gains.append(G)
        covs.append(sigma)
    return FilterPass(gains=tuple(gains), covariances=tuple(covs),
                      gammas=tuple(gammas), sigma0=covs[0])


def build_augmented(step, G, omega, gamma, err_cov=None):
    """Stack one step's plant and estimator blocks into the 2n system."""
    A, B, C, F, D = step.A, step.B, step.C, step.F, step.D
    n, m = A.shape[0], B.shape[1]
    G = as_matrix(G, (n, F.shape[0]), name="G")
    GF = G @ F
    Atil = np.zeros((2 * n, 2 * n))
    Atil[:n, :n] = A
    Atil[n:, :n] = GF
    Atil[n:, n:] = A - GF
    Btil = np.vstack([B, B])
    GD = G @ D
    nw, ng = C.shape[1], GD.shape[1]
    Ctil = np.zeros((2 * n, nw + ng))
    Ctil[:n, :nw] = C
    Ctil[n:, nw:] = GD
    noise_cov = np.zeros((nw + ng, nw + ng))
    noise_cov[:nw, :nw] = omega
    noise_cov[nw:, nw:] = gamma
    gamma = np.asarray(gamma, dtype=float)
    err_cov = np.zeros((n, n)) if err_cov is None else np.asarray(err_cov, float)
    return AugmentedStep(Atil=Atil, Btil=Btil, Ctil=Ctil, noise_cov=noise_cov,
                         gain=G.copy(), err_cov=err_cov, gamma=gamma)
