"""Planar serial chains with point masses at the link ends.

A chain is a floating (x, z) or fixed base followed by revolute links; link
``j`` carries a point mass at its distal end.  Joint angles are relative and
measured from the straight-down direction, so a link at angle ``t`` points
along ``(sin t, -cos t)``.  Generalized coordinates are ``[x_b, z_b, q_0, ...]``
for a floating base and ``[q_0, ...]`` for a fixed one.

The manipulator-form quantities M(q), h(q, v) and the point-foot Jacobians
are assembled from the mass-point Jacobians:

    M = sum_j m_j J_j^T J_j            h = sum_j m_j J_j^T (a_j + [0, g])

with ``a_j = Jdot_j v`` the bias acceleration of mass point ``j``.  Everything
here is written with explicit loops over the (few) links; partial derivatives
of M and h with respect to q and v are provided for analytic linearization of
the contact-free dynamics.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError

FIXED = "fixed"
FLOATING = "floating"

GRAVITY = 9.81


@dataclass(frozen=True)
class PlanarChain:
    """Kinematic description of a planar point-mass chain."""

    lengths: tuple
    masses: tuple
    base: str = FLOATING
    base_mass: float = 0.0
    gravity: float = GRAVITY
    foot_link: int = -1

    def __post_init__(self):
        lengths = tuple(float(l) for l in self.lengths)
        masses = tuple(float(m) for m in self.masses)
        if len(lengths) != len(masses) or not lengths:
            raise ContractError("lengths and masses must be equally sized, nonempty")
        if any(l <= 0 for l in lengths) or any(m <= 0 for m in masses):
            raise ContractError("link lengths and masses must be positive")
        if self.base not in (FIXED, FLOATING):
            raise ContractError(f"unknown base kind {self.base!r}")
        if self.base == FLOATING and self.base_mass <= 0:
            raise ContractError("floating base needs a positive base mass")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "foot_link", range(len(lengths))[self.foot_link])

    @property
    def n_links(self):
        return len(self.lengths)

    @property
    def nb(self):
        """Number of base coordinates (2 floating, 0 fixed)."""
        return 2 if self.base == FLOATING else 0

    @property
    def nq(self):
        return self.nb + self.n_links

    @property
    def n_actuated(self):
        return self.n_links

    @property
    def total_mass(self):
        return self.base_mass + sum(self.masses)

    def selection(self):
        """S^T mapping joint torques to generalized forces (nq x n_links)."""
        st = np.zeros((self.nq, self.n_links))
        st[self.nb :, :] = np.eye(self.n_links)
        return st


def _frames(chain, q, v=None):
    """Absolute angles, rates and their sin/cos for every link."""
    nb = chain.nb
    theta = np.cumsum(q[nb:])
    s = np.column_stack([np.sin(theta), -np.cos(theta)])
    c = np.column_stack([np.cos(theta), np.sin(theta)])
    thetadot = np.cumsum(v[nb:]) if v is not None else None
    return theta, thetadot, s, c


def _point_jacobians(chain, s_dirs, c_dirs, thetadot=None):
    """Jacobians (and Jdot when rates are given) of every mass point."""
    nb, L = chain.nb, chain.n_links
    n = chain.nq
    ls = chain.lengths
    Js = np.zeros((L, 2, n))
    Jds = np.zeros((L, 2, n)) if thetadot is not None else None
    for j in range(L):
        if nb:
            Js[j, 0, 0] = 1.0
            Js[j, 1, 1] = 1.0
        for k in range(j + 1):
            col = np.zeros(2)
            for i in range(k, j + 1):
                col += ls[i] * c_dirs[i]
            Js[j, :, nb + k] = col
            if thetadot is not None:
                dcol = np.zeros(2)
                for i in range(k, j + 1):
                    dcol -= ls[i] * thetadot[i] * s_dirs[i]
                Jds[j, :, nb + k] = dcol
    return Js, Jds


def chain_dynamics(chain, q, v):
    """Manipulator-form terms M, h and foot-point J, Jdot at (q, v).

    Returns (M, h, J, Jdot) with M symmetric positive definite, h combining
    Coriolis and gravity generalized forces, and J, Jdot the 2 x nq Jacobian
    and its time derivative for the point foot.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = chain.nq
    if q.shape != (n,) or v.shape != (n,):
        raise ContractError(f"expected q, v of length {n}")
    _, thetadot, s, c = _frames(chain, q, v)
    Js, Jds = _point_jacobians(chain, s, c, thetadot)
    grav = np.array([0.0, chain.gravity])

    M = np.zeros((n, n))
    h = np.zeros(n)
    if chain.nb:
        M[0, 0] = M[1, 1] = chain.base_mass
        h[:2] += chain.base_mass * grav
    for j in range(chain.n_links):
        m, Jj = chain.masses[j], Js[j]
        M += m * Jj.T @ Jj
        a_j = Jds[j] @ v
        h += m * Jj.T @ (a_j + grav)
    foot = chain.foot_link
    return M, h, Js[foot], Jds[foot]


def foot_position(chain, q):
    """World position of the point foot."""
    q = np.asarray(q, dtype=float)
    nb = chain.nb
    p = q[:2].copy() if nb else np.zeros(2)
    theta = np.cumsum(q[nb:])
    for i in range(chain.foot_link + 1):
        p += chain.lengths[i] * np.array([np.sin(theta[i]), -np.cos(theta[i])])
    return p


def foot_velocity(chain, q, v):
    _, _, J, _ = chain_dynamics(chain, q, np.asarray(v, dtype=float))
    return J @ np.asarray(v, dtype=float)


def total_energy(chain, q, v):
    """Kinetic plus gravitational potential energy."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    M, _, _, _ = chain_dynamics(chain, q, v)
    kinetic = 0.5 * v @ M @ v
    nb = chain.nb
    z = q[1] if nb else 0.0
    potential = chain.base_mass * chain.gravity * z if nb else 0.0
    theta = np.cumsum(q[nb:])
    zj = z
    for j in range(chain.n_links):
        zj = zj - chain.lengths[j] * np.cos(theta[j])
        potential += chain.masses[j] * chain.gravity * zj
    return kinetic + potential


def dynamics_partials(chain, q, v):
    """Partial derivatives of M and h for analytic linearization.

    Returns (dM, dh_dq, dh_dv): ``dM[k]`` is dM/dq over the k-th revolute
    coordinate (base translations never change M or h), ``dh_dq`` / ``dh_dv``
    are nq x nq with zero base columns.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    nb, L, n = chain.nb, chain.n_links, chain.nq
    ls = chain.lengths
    _, thetadot, s, c = _frames(chain, q, v)
    Js, Jds = _point_jacobians(chain, s, c, thetadot)
    grav = np.array([0.0, chain.gravity])

    # dJ[j][k]: derivative of mass-point Jacobian j w.r.t. revolute coord k;
    # column c of J_j sums l_i * c_i over i in [c, j], so its derivative
    # swaps c_i -> -s_i for i >= k.
    dM = np.zeros((L, n, n))
    dh_dq = np.zeros((n, n))
    dh_dv = np.zeros((n, n))
    for k in range(L):
        for j in range(k, L):
            m, Jj = chain.masses[j], Js[j]
            dJ = np.zeros((2, n))
            for col in range(j + 1):
                acc = np.zeros(2)
                for i in range(max(col, k), j + 1):
                    acc -= ls[i] * s[i]
                dJ[:, nb + col] = acc
            dM[k] += m * (dJ.T @ Jj + Jj.T @ dJ)

            a_j = Jds[j] @ v
            # d a_j / dq_k with a_j = -sum_i l_i thetadot_i^2 s_i
            da_dq = np.zeros(2)
            for i in range(k, j + 1):
                da_dq -= ls[i] * thetadot[i] ** 2 * c[i]
            dh_dq[:, nb + k] += m * (dJ.T @ (a_j + grav) + Jj.T @ da_dq)

            # d a_j / dv_k = -2 sum_{i>=k} l_i thetadot_i s_i
            da_dv = np.zeros(2)
            for i in range(k, j + 1):
                da_dv -= 2.0 * ls[i] * thetadot[i] * s[i]
            dh_dv[:, nb + k] += m * (Jj.T @ da_dv)
    return dM, dh_dq, dh_dv


def leg_ik(l1, l2, target, elbow=-1.0):
    """Joint angles (hip, knee) placing a 2-link foot at ``target`` (rel. base).

    ``elbow`` picks the knee-bend sign.  Raises if the target is out of reach.
    """
    dx, dz = float(target[0]), float(target[1])
    r2 = dx * dx + dz * dz
    r = np.sqrt(r2)
    if r > l1 + l2 + 1e-12 or r < abs(l1 - l2) - 1e-12:
        raise ContractError(f"IK target at distance {r:.4f} out of reach")
    cos_knee = np.clip((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    knee = np.sign(elbow) * np.arccos(cos_knee)
    phi = np.arctan2(dx, -dz)
    hip = phi - np.arctan2(l2 * np.sin(knee), l1 + l2 * np.cos(knee))
    return float(hip), float(knee)
