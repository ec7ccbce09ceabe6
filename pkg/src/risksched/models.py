"""Discrete-time models used by the solvers and the simulator.

A model owns its state space, control dimension and optimizer time step.
``step`` is the discrete transition ``x (+) dt * f(x, u)`` (explicit Euler
for the continuous models); the active contact set selects the dynamics
branch for models that have feet.  ``linearize`` produces the per-step
linearization on the tangent chart, preferring model-supplied analytic
Jacobians and falling back to central finite differences through the
retraction.
"""

from dataclasses import dataclass

import numpy as np

from .chains import PlanarChain, chain_dynamics, dynamics_partials, foot_position
from .contact import SwingMap, resolve_contact_forces
from .exceptions import ContractError, SingularContactError
from .statespace import StateSpace
from .validation import as_matrix, as_vector, check_finite

FD_STEP = 1e-6


@dataclass(frozen=True)
class LinearStep:
    """One step's linearization plus measurement maps.

    A: tangent x tangent, B: tangent x control, C: tangent x process-noise,
    F: measurement x tangent, D: measurement x measurement-noise.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "F", "D"):
            check_finite(getattr(self, name), name)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def control_dim(self):
        return self.B.shape[1]


class Model:
    """Base model: subclasses set space/control_dim/dt and implement rate()."""

    space: StateSpace
    control_dim: int
    dt: float

    def rate(self, x, u, contacts=()):
        """Continuous tangent rate f(x, u) under the given contact set."""
        raise NotImplementedError

    def step(self, x, u, contacts=()):
        x = as_vector(x, self.space.tangent_dim, "x")
        u = as_vector(u, self.control_dim, "u")
        check_finite(u, "u")
        return self.space.compose(x, self.dt * self.rate(x, u, contacts))

    def jacobians(self, x, u, contacts=()):
        """Analytic (A, B) of step() when available, else None."""
        return None

    def noise_input(self, x, u, contacts=()):
        """Process-noise input map C (tangent x noise)."""
        return np.eye(self.space.tangent_dim)

    def measure(self, x, u=None):
        """Measurement g(x, u); the default observes the full chart."""
        return as_vector(x, self.space.tangent_dim, "x").copy()

    def measurement_jacobians(self, x, u=None):
        n = self.space.tangent_dim
        return np.eye(n), np.eye(n)

    @property
    def meas_dim(self):
        return self.space.tangent_dim

    def swing_map(self, x, contacts=()):
        """Block maps for swing-foot uncertainty; None when footless."""
        return None

    # Simulator hooks -----------------------------------------------------

    def foot_points(self, x):
        """[(position, velocity)] of contactable points; empty by default."""
        return []

    def sim_rate(self, x, u, foot_forces=()):
        """Continuous rate with external point forces at the feet."""
        return self.rate(x, u, ())


class LinearModel(Model):
    """Exact discrete LTI transition x' = A x + B u."""

    def __init__(self, A, B, dt=1.0, noise_map=None):
        self.A = as_matrix(A, name="A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ContractError("A must be square")
        self.B = as_matrix(B, (n, None), name="B")
        self.space = StateSpace.linear(n)
        self.control_dim = self.B.shape[1]
        self.dt = float(dt)
        self._C = np.eye(n) if noise_map is None else as_matrix(noise_map, (n, None))

    def rate(self, x, u, contacts=()):
        return (self.A @ x + self.B @ u - x) / self.dt

    def step(self, x, u, contacts=()):
        x = as_vector(x, self.space.tangent_dim, "x")
        u = as_vector(u, self.control_dim, "u")
        return self.A @ x + self.B @ u

    def jacobians(self, x, u, contacts=()):
        return self.A.copy(), self.B.copy()

    def noise_input(self, x, u, contacts=()):
        return self._C.copy()


def double_integrator(dt=0.01):
    """Explicit-Euler double integrator: p' = p + dt v, v' = v + dt u."""
    return LinearModel(A=[[1.0, dt], [0.0, 1.0]], B=[[0.0], [dt]], dt=dt)


class Pendulum(Model):
    """Torque-limited pendulum; angle measured from the hanging equilibrium."""

    def __init__(self, mass=1.0, length=0.5, gravity=9.81, damping=0.05,
                 torque_limit=5.0, dt=0.01):
        self.mass = float(mass)
        self.length = float(length)
        self.gravity = float(gravity)
        self.damping = float(damping)
        self.torque_limit = float(torque_limit)
        self.dt = float(dt)
        self.space = StateSpace(("ang", "lin"))
        self.control_dim = 1

    def _torque(self, u):
        return float(np.clip(u[0], -self.torque_limit, self.torque_limit))

    def rate(self, x, u, contacts=()):
        theta, omega = x
        inertia = self.mass * self.length ** 2
        acc = (self._torque(u) - self.damping * omega) / inertia \
            - (self.gravity / self.length) * np.sin(theta)
        return np.array([omega, acc])

    def jacobians(self, x, u, contacts=()):
        theta, omega = x
        inertia = self.mass * self.length ** 2
        dacc_dth = -(self.gravity / self.length) * np.cos(theta)
        dacc_dom = -self.damping / inertia
        A = np.eye(2) + self.dt * np.array([[0.0, 1.0], [dacc_dth, dacc_dom]])
        saturated = abs(u[0]) >= self.torque_limit
        du = 0.0 if saturated else 1.0 / inertia
        B = self.dt * np.array([[0.0], [du]])
        return A, B


class Monoped(Model):
    """Planar floating-base monoped: (x, z) base, hip and knee, point foot.

    Coordinates are [x_b, z_b, q_hip, q_knee, and their rates]; the hip and
    knee are wrapped angle components.  During stance the rigid-contact
    forces are resolved and applied inside the dynamics.
    """

    def __init__(self, chain=None, dt=0.01):
        self.chain = chain if chain is not None else PlanarChain(
            lengths=(0.16, 0.16), masses=(0.2, 0.2),
            base="floating", base_mass=1.5,
        )
        if self.chain.base != "floating":
            raise ContractError("monoped needs a floating-base chain")
        nq = self.chain.nq
        kinds = ["lin", "lin"] + ["ang"] * self.chain.n_links
        self.space = StateSpace(tuple(kinds) + ("lin",) * nq)
        self.control_dim = self.chain.n_actuated
        self.dt = float(dt)
        self._ST = self.chain.selection()

    @property
    def nq(self):
        return self.chain.nq

    def split(self, x):
        nq = self.nq
        return x[:nq], x[nq:]

    def rate(self, x, u, contacts=()):
        q, v = self.split(np.asarray(x, dtype=float))
        u = np.asarray(u, dtype=float)
        M, h, J, Jd = chain_dynamics(self.chain, q, v)
        tau_full = self._ST @ u
        if contacts:
            try:
                lam = resolve_contact_forces(M, h, J, Jd, v, tau_full)
            except SingularContactError as err:
                raise SingularContactError(
                    f"{err} (contacts {tuple(contacts)})", phase=tuple(contacts)
                ) from err
            vdot = np.linalg.solve(M, tau_full - h + J.T @ lam)
        else:
            vdot = np.linalg.solve(M, tau_full - h)
        return np.concatenate([v, vdot])

    def contact_forces(self, x, u, contacts=(0,)):
        """Resolved rigid-contact forces at the active feet."""
        q, v = self.split(np.asarray(x, dtype=float))
        M, h, J, Jd = chain_dynamics(self.chain, q, v)
        return resolve_contact_forces(M, h, J, Jd, v, self._ST @ np.asarray(u, float))

    def jacobians(self, x, u, contacts=()):
        if contacts:
            return None  # stance linearization uses finite differences
        q, v = self.split(np.asarray(x, dtype=float))
        nq = self.nq
        M, h, _, _ = chain_dynamics(self.chain, q, v)
        dM, dh_dq, dh_dv = dynamics_partials(self.chain, q, v)
        vdot = np.linalg.solve(M, self._ST @ np.asarray(u, float) - h)
        dvdot_dq = np.zeros((nq, nq))
        for k in range(self.chain.n_links):
            col = -dh_dq[:, self.chain.nb + k] - dM[k] @ vdot
            dvdot_dq[:, self.chain.nb + k] = np.linalg.solve(M, col)
        dvdot_dv = -np.linalg.solve(M, dh_dv)
        n = 2 * nq
        Ac = np.zeros((n, n))
        Ac[:nq, nq:] = np.eye(nq)
        Ac[nq:, :nq] = dvdot_dq
        Ac[nq:, nq:] = dvdot_dv
        Bc = np.zeros((n, self.control_dim))
        Bc[nq:, :] = np.linalg.solve(M, self._ST)
        return np.eye(n) + self.dt * Ac, self.dt * Bc

    def swing_map(self, x, contacts=()):
        q, v = self.split(np.asarray(x, dtype=float))
        _, _, J, Jd = chain_dynamics(self.chain, q, v)
        if 0 in contacts:
            return SwingMap.from_jacobians(None, None, J, Jd)
        return SwingMap.from_jacobians(J, Jd, None, None)

    # Simulator hooks -----------------------------------------------------

    def foot_points(self, x):
        q, v = self.split(np.asarray(x, dtype=float))
        _, _, J, _ = chain_dynamics(self.chain, q, v)
        return [(foot_position(self.chain, q), J @ v)]

    def sim_rate(self, x, u, foot_forces=()):
        q, v = self.split(np.asarray(x, dtype=float))
        M, h, J, _ = chain_dynamics(self.chain, q, v)
        w = self._ST @ np.asarray(u, dtype=float) - h
        for f in foot_forces:
            w = w + J.T @ np.asarray(f, dtype=float)
        return np.concatenate([v, np.linalg.solve(M, w)])


def linearize(model, x, u, contacts=()):
    """Per-step linearization around (x, u) under the given contact set.

    A and B come from the model's analytic Jacobians when provided, else
    from central finite differences taken through the retraction pair with
    step 1e-6.  C, F, D are the model's noise and measurement maps.
    """
    x = as_vector(x, model.space.tangent_dim, "x")
    u = as_vector(u, model.control_dim, "u")
    ab = model.jacobians(x, u, contacts)
    if ab is None:
        ab = _fd_jacobians(model, x, u, contacts)
    A, B = ab
    check_finite(A, "A"), check_finite(B, "B")
    C = model.noise_input(x, u, contacts)
    F, D = model.measurement_jacobians(x, u)
    return LinearStep(A=np.asarray(A, float), B=np.asarray(B, float),
                      C=np.asarray(C, float), F=np.asarray(F, float),
                      D=np.asarray(D, float))


def _fd_jacobians(model, x, u, contacts, eps=FD_STEP):
    space = model.space
    n, m = space.tangent_dim, model.control_dim
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for j in range(n):
        d = np.zeros(n)
        d[j] = eps
        xp = model.step(space.compose(x, d), u, contacts)
        xm = model.step(space.compose(x, -d), u, contacts)
        A[:, j] = space.difference(xp, xm) / (2 * eps)
    for j in range(m):
        d = np.zeros(m)
        d[j] = eps
        xp = model.step(x, u + d, contacts)
        xm = model.step(x, u - d, contacts)
        B[:, j] = space.difference(xp, xm) / (2 * eps)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ContractError("non-finite dynamics in the finite-difference stencil")
    return A, B
