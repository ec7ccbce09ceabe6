"""Reference-tracking quadratic costs and their local expansions.

Running cost at step t:

    l_t = 1/2 (x (-) xref_t)^T Q_t (x (-) xref_t) + 1/2 (u - uref_t)^T R (u - uref_t)

with ``Q_t = switch_multiplier * Q`` at phase-boundary steps and ``Q``
elsewhere; the terminal cost uses Q_T.  Because the costs are quadratic by
construction, quadratization is exact: the weights are copied and the linear
terms are the weighted tracking residuals of the nominal trajectory.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .statespace import StateSpace
from .validation import as_matrix, check_psd, symmetrize


@dataclass(frozen=True)
class QuadCost:
    """Local quadratic expansion of one step's cost around a nominal point."""

    Q: np.ndarray
    q: np.ndarray
    R: np.ndarray
    r: np.ndarray
    P: np.ndarray  # control x tangent cross term
    c0: float

    def value(self, dx, du):
        """Evaluate the quadratic form at a deviation (dx, du)."""
        return float(
            0.5 * dx @ self.Q @ dx + self.q @ dx
            + 0.5 * du @ self.R @ du + self.r @ du
            + du @ self.P @ dx + self.c0
        )


@dataclass(frozen=True)
class CostSpec:
    """Tracking weights and references over a fixed horizon."""

    space: StateSpace
    Q: np.ndarray
    R: np.ndarray
    Q_terminal: np.ndarray
    x_ref: np.ndarray  # (horizon + 1, tangent_dim)
    u_ref: np.ndarray  # (horizon, control_dim)
    switch_steps: tuple = ()
    switch_multiplier: float = 100.0
    _switch_set: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.space.tangent_dim
        Q = check_psd(as_matrix(self.Q, (n, n), name="Q"), tol=1e-10, name="Q")
        Qt = check_psd(as_matrix(self.Q_terminal, (n, n), name="Q_terminal"),
                       tol=1e-10, name="Q_terminal")
        R = as_matrix(self.R, name="R")
        w = np.linalg.eigvalsh(symmetrize(R))
        if w[0] <= 0:
            raise ContractError("R must be positive definite")
        x_ref = np.asarray(self.x_ref, dtype=float)
        u_ref = np.asarray(self.u_ref, dtype=float)
        if x_ref.ndim != 2 or x_ref.shape[1] != n:
            raise ContractError("x_ref must be (horizon+1, tangent_dim)")
        if u_ref.ndim != 2 or u_ref.shape[0] != x_ref.shape[0] - 1:
            raise ContractError("u_ref must be (horizon, control_dim)")
        if self.switch_multiplier <= 0:
            raise ContractError("switch multiplier must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", symmetrize(R))
        object.__setattr__(self, "Q_terminal", Qt)
        object.__setattr__(self, "x_ref", x_ref)
        object.__setattr__(self, "u_ref", u_ref)
        object.__setattr__(self, "switch_steps", tuple(int(t) for t in self.switch_steps))
        object.__setattr__(self, "_switch_set", frozenset(self.switch_steps))

    @property
    def horizon(self):
        return self.u_ref.shape[0]

    @property
    def control_dim(self):
        return self.u_ref.shape[1]

    def state_weight(self, t):
        if t in self._switch_set:
            return self.switch_multiplier * self.Q
        return self.Q

    def stage_cost(self, x, u, t):
        dx = self.space.difference(x, self.x_ref[t])
        du = np.asarray(u, dtype=float) - self.u_ref[t]
        return float(0.5 * dx @ self.state_weight(t) @ dx + 0.5 * du @ self.R @ du)

    def terminal_cost(self, x):
        dx = self.space.difference(x, self.x_ref[self.horizon])
        return float(0.5 * dx @ self.Q_terminal @ dx)

    def evaluate(self, xs, us):
        """Total cost of a trajectory pair (length horizon+1 / horizon)."""
        xs = np.asarray(xs, dtype=float)
        us = np.asarray(us, dtype=float)
        if xs.shape[0] != self.horizon + 1 or us.shape[0] != self.horizon:
            raise ContractError(
                f"trajectory lengths ({xs.shape[0]}, {us.shape[0]}) do not match "
                f"horizon {self.horizon}"
            )
        total = self.terminal_cost(xs[-1])
        for t in range(self.horizon):
            total += self.stage_cost(xs[t], us[t], t)
        return total

    def quadratize(self, x_n, u_n, t):
        """Exact local expansion of the stage cost around (x_n, u_n)."""
        if not 0 <= t < self.horizon:
            raise ContractError(f"step {t} outside horizon [0, {self.horizon})")
        Qt = self.state_weight(t)
        dx = self.space.difference(x_n, self.x_ref[t])
        du = np.asarray(u_n, dtype=float) - self.u_ref[t]
        c0 = float(0.5 * dx @ Qt @ dx + 0.5 * du @ self.R @ du)
        return QuadCost(
            Q=Qt.copy(), q=Qt @ dx,
            R=self.R.copy(), r=self.R @ du,
            P=np.zeros((self.control_dim, self.space.tangent_dim)),
            c0=c0,
        )

    def quadratize_terminal(self, x_n):
        """Terminal value quadratic (S, s, sbar) around the nominal end state."""
        dx = self.space.difference(x_n, self.x_ref[self.horizon])
        return (
            self.Q_terminal.copy(),
            self.Q_terminal @ dx,
            float(0.5 * dx @ self.Q_terminal @ dx),
        )
