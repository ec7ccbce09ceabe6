"""State manifold made of linear components and wrapped planar angles.

States are plain float arrays of length ``tangent_dim``; the :class:`StateSpace`
owns the component layout and provides the retraction pair ``compose`` /
``difference``.  Angle entries are always stored wrapped to (-pi, pi], so a
state array produced by this module is its unique representative.  Tangents
are plain float arrays as well; no wrapping applies to them.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .validation import as_matrix, as_vector, check_finite, symmetrize

TWO_PI = 2.0 * np.pi

LINEAR = "lin"
ANGLE = "ang"


def wrap_angle(theta):
    """Wrap angles to the interval (-pi, pi].  Idempotent."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)


@dataclass(frozen=True)
class StateSpace:
    """Ordered component layout of a state manifold.

    kinds: tuple of component markers, ``"lin"`` or ``"ang"``, one per
    tangent coordinate.  Immutable after construction.
    """

    kinds: tuple
    _angle_idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kinds = tuple(self.kinds)
        if len(kinds) < 1:
            raise ContractError("state space needs at least one component")
        bad = [k for k in kinds if k not in (LINEAR, ANGLE)]
        if bad:
            raise ContractError(f"unknown component kinds: {bad}")
        object.__setattr__(self, "kinds", kinds)
        idx = np.array([i for i, k in enumerate(kinds) if k == ANGLE], dtype=int)
        idx.setflags(write=False)
        object.__setattr__(self, "_angle_idx", idx)

    @classmethod
    def linear(cls, n):
        return cls((LINEAR,) * n)

    @property
    def tangent_dim(self):
        return len(self.kinds)

    @property
    def n_lin(self):
        return self.tangent_dim - self.n_ang

    @property
    def n_ang(self):
        return int(self._angle_idx.size)

    @property
    def angle_indices(self):
        return self._angle_idx

    def wrap(self, coords):
        """Return a copy of ``coords`` with angle entries wrapped to (-pi, pi]."""
        out = as_vector(coords, self.tangent_dim, "coords").copy()
        if self._angle_idx.size:
            out[self._angle_idx] = wrap_angle(out[self._angle_idx])
        return out

    def compose(self, x, dx):
        """Retraction x (+) dx: add, then wrap angle entries."""
        x = as_vector(x, self.tangent_dim, "x")
        dx = as_vector(dx, self.tangent_dim, "dx")
        check_finite(dx, "dx")
        return self.wrap(x + dx)

    def difference(self, x, y):
        """Local difference x (-) y; angle components take the shortest arc."""
        x = as_vector(x, self.tangent_dim, "x")
        y = as_vector(y, self.tangent_dim, "y")
        d = x - y
        if self._angle_idx.size:
            d[self._angle_idx] = wrap_angle(d[self._angle_idx])
        return d


@dataclass(frozen=True)
class Gaussian:
    """Gaussian with symmetric PSD covariance (tolerance 1e-12 on input)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, name="mean")
        cov = as_matrix(self.cov, (mean.size, mean.size), name="cov")
        if cov.size:
            scale = max(1.0, float(np.max(np.abs(cov))))
            if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
                raise ContractError("cov is not symmetric within 1e-12")
            w = np.linalg.eigvalsh(symmetrize(cov))
            if w[0] < -1e-12 * scale:
                raise ContractError(
                    f"cov has eigenvalue {w[0]:.3e} below -1e-12"
                )
        mean = mean.copy()
        cov = symmetrize(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


def transform_gaussian(A, b, g):
    """Push a Gaussian through the affine map z -> A z + b.

    Returns N(A mean + b, A cov A^T) with the covariance symmetrized.
    """
    A = as_matrix(A, (None, g.dim), name="A")
    b = as_vector(b, A.shape[0], name="b")
    mean = A @ g.mean + b
    cov = symmetrize(A @ g.cov @ A.T)
    return Gaussian(mean, cov)
