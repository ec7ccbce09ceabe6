"""Rigid contact force resolution, phase schedules, and the projection of
swing-foot uncertainty into state-space covariance.

Active contacts impose no-motion constraints ``J v = 0`` and
``Jdot v + J vdot = 0``; projecting the manipulator dynamics onto the
contact space yields the constraint forces in closed form.  Swing-foot
measurement uncertainty, expressed on (dp, dpdot) of the foot, is mapped back
to the state tangent through the minimum-norm inverse of the swing block map
and restricted to motions consistent with the active contacts by a null-space
projector.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, SingularContactError
from .validation import as_matrix, check_psd, symmetrize

COND_LIMIT = 1e12
SVD_CUTOFF = 1e-10


def resolve_contact_forces(M, h, J, Jdot, v, tau_full):
    """Constraint forces of the active contacts.

    ``tau_full`` is the generalized force vector (actuation already mapped
    through the selection matrix).  With L = (J M^-1 J^T)^-1,

        lam = -L Jdot v + L J M^-1 h - L J M^-1 tau_full

    which drives the contact-point acceleration ``Jdot v + J vdot`` to zero
    when substituted back into the forward dynamics.
    """
    J = np.asarray(J, dtype=float)
    if J.size == 0 or J.shape[0] == 0:
        return np.zeros(0)
    M = np.asarray(M, dtype=float)
    Minv_JT = np.linalg.solve(M, J.T)
    JMiJT = J @ Minv_JT
    cond = np.linalg.cond(JMiJT)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularContactError(
            f"contact-space inertia condition number {cond:.3e} exceeds {COND_LIMIT:.0e}"
        )
    rhs = -np.asarray(Jdot, dtype=float) @ v + Minv_JT.T @ (np.asarray(h) - np.asarray(tau_full))
    return np.linalg.solve(JMiJT, rhs)


def pseudoinverse(A):
    """Moore-Penrose inverse.

    Uses the closed form A^T (A A^T)^-1 when the rows are safely independent,
    otherwise an SVD with singular values below ``1e-10 * sigma_max`` dropped.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        A = np.atleast_2d(A)
    r, c = A.shape
    if r == 0 or c == 0:
        return np.zeros((c, r))
    if r <= c:
        gram = A @ A.T
        if np.linalg.matrix_rank(gram, hermitian=True) == r and np.linalg.cond(gram) < COND_LIMIT:
            return A.T @ np.linalg.inv(gram)
    return np.linalg.pinv(A, rcond=SVD_CUTOFF)


def nullspace_projector(A_c):
    """P = I - A_c^+ A_c; the identity when there are no active contact rows."""
    A_c = np.asarray(A_c, dtype=float)
    if A_c.ndim != 2:
        A_c = np.atleast_2d(A_c)
    n = A_c.shape[1]
    if n == 0:
        raise ContractError("nullspace_projector needs a column dimension")
    if A_c.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - pseudoinverse(A_c) @ A_c


@dataclass(frozen=True)
class SwingMap:
    """Block maps from state tangent to foot (dp, dpdot) deviations.

    ``A_s`` stacks [[J_s, 0], [Jdot_s, J_s]] for the swinging feet and ``A_c``
    has the same structure for the feet actively in contact (zero rows when
    no feet are in contact).
    """

    A_s: np.ndarray
    A_c: np.ndarray

    @classmethod
    def from_jacobians(cls, J_s, Jdot_s, J_c=None, Jdot_c=None):
        return cls(stack_block_map(J_s, Jdot_s), stack_block_map(J_c, Jdot_c))


def stack_block_map(J, Jdot):
    """Assemble [[J, 0], [Jdot, J]] from a task Jacobian and its derivative."""
    if J is None or np.asarray(J).size == 0:
        width = 0 if J is None else 2 * np.asarray(J).shape[1]
        return np.zeros((0, width))
    J = np.asarray(J, dtype=float)
    Jdot = np.asarray(Jdot, dtype=float)
    if J.shape != Jdot.shape:
        raise ContractError("J and Jdot must have matching shapes")
    k, n = J.shape
    out = np.zeros((2 * k, 2 * n))
    out[:k, :n] = J
    out[k:, :n] = Jdot
    out[k:, n:] = J
    return out


def project_contact_covariance(gamma_fs, gamma_c, swing):
    """Total measurement covariance with swing-contact uncertainty folded in.

    gamma = gamma_fs + P_c A_s^+ gamma_c A_s^+T P_c^T, symmetrized.  The
    output dominates gamma_fs in the PSD order since the added term is a
    congruence of a PSD matrix.
    """
    gamma_fs = check_psd(np.asarray(gamma_fs, dtype=float), tol=1e-10, name="gamma_fs")
    n = gamma_fs.shape[0]
    gamma_c = np.asarray(gamma_c, dtype=float)
    if gamma_c.size == 0 or swing.A_s.shape[0] == 0:
        return gamma_fs.copy()
    gamma_c = check_psd(gamma_c, tol=1e-10, name="gamma_c")
    A_s = as_matrix(swing.A_s, (gamma_c.shape[0], n), name="A_s")
    pinv = pseudoinverse(A_s)
    if swing.A_c.shape[0] > 0:
        P_c = nullspace_projector(as_matrix(swing.A_c, (None, n), name="A_c"))
        pinv = P_c @ pinv
    total = gamma_fs + pinv @ gamma_c @ pinv.T
    return symmetrize(total)


@dataclass(frozen=True)
class Phase:
    """One contiguous contact phase: [start, end) step indices."""

    phase_id: int
    contacts: tuple
    start: int
    end: int


class PhaseSchedule:
    """Ordered contact phases partitioning the optimization horizon.

    The first step of each phase uses that phase's contact set (a switch
    index belongs to the new phase).  ``feet`` lists every contact point the
    model owns; the swing set of a phase is ``feet`` minus its contacts.
    """

    def __init__(self, segments, feet=(0,)):
        self.feet = tuple(feet)
        phases = []
        start = 0
        for i, (contacts, duration) in enumerate(segments):
            duration = int(duration)
            if duration <= 0:
                raise ContractError(f"phase {i} has non-positive duration")
            contacts = tuple(sorted(contacts))
            unknown = set(contacts) - set(self.feet)
            if unknown:
                raise ContractError(f"phase {i} names unknown feet {sorted(unknown)}")
            phases.append(Phase(i, contacts, start, start + duration))
            start += duration
        if not phases:
            raise ContractError("schedule needs at least one phase")
        self.phases = tuple(phases)
        self.horizon = start

    def active_phase(self, t):
        """(phase id, active contact set, swing set) covering step ``t``."""
        if not 0 <= t < self.horizon:
            raise ContractError(f"step {t} outside horizon [0, {self.horizon})")
        for ph in self.phases:
            if ph.start <= t < ph.end:
                swing = tuple(f for f in self.feet if f not in ph.contacts)
                return ph.phase_id, ph.contacts, swing
        raise AssertionError("phases must partition the horizon")

    def contacts_at(self, t):
        return self.active_phase(t)[1]

    def switch_steps(self):
        """Indices where a new phase begins (excluding step 0)."""
        return tuple(ph.start for ph in self.phases[1:])

    def phase_of(self, t):
        return self.phases[self.active_phase(t)[0]]

    def in_landing_window(self, t, fraction):
        """True when t falls in the trailing ``fraction`` of a swing phase.

        Swing phases are those whose swing set is nonempty.  The window is
        where contact uncertainty is activated ahead of touchdown.
        """
        pid, _, swing = self.active_phase(t)
        if not swing:
            return False
        ph = self.phases[pid]
        span = ph.end - ph.start
        return t >= ph.end - max(1, int(np.ceil(fraction * span)))

    def __len__(self):
        return self.horizon
