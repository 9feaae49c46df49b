"""The two-level non-Hermitian model H(x, y) and its closed-form generators.

    H(x, y) = [[-i x, 1 + i y], [1 + i y, i x]]

Its spectrum is +-sqrt((1 + i y)^2 - x^2), so the exceptional points sit at
(x, y) = (+-1, 0) and extrude to the lines (t, +-1, 0) in the base space.
Everything here is an exact formula and serves as the oracle layer for the
numerical solver and the transport integrator.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AtExceptionalPoint, DimensionMismatch, DomainError
from .matrix_core import EP_THRESHOLD

SQRT_HALF = 1 / math.sqrt(2)

IDENTITY = np.eye(2, dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
S = SQRT_HALF * np.array([[1, -1j], [-1j, 1]], dtype=np.complex128)
S_INV = SQRT_HALF * np.array([[1, 1j], [1j, 1]], dtype=np.complex128)
T = np.array([[0, 1], [1, 0]], dtype=np.complex128)
I_HOL = np.array([[0, 1], [-1, 0]], dtype=np.complex128)

DX_H = np.array([[-1j, 0], [0, 1j]], dtype=np.complex128)
DY_H = np.array([[0, 1j], [1j, 0]], dtype=np.complex128)


@dataclass(frozen=True)
class ReferenceConstants:
    S: np.ndarray = field(default_factory=lambda: S.copy())
    sigma_z: np.ndarray = field(default_factory=lambda: SIGMA_Z.copy())
    T: np.ndarray = field(default_factory=lambda: T.copy())
    I_hol: np.ndarray = field(default_factory=lambda: I_HOL.copy())
    identity: np.ndarray = field(default_factory=lambda: IDENTITY.copy())


CONSTANTS = ReferenceConstants()


@dataclass(frozen=True)
class BasePoint:
    t: float
    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if not all(math.isfinite(v) for v in (self.t, *self.q)):
            raise ValueError(f"non-finite base point {self}")

    @classmethod
    def from_coords(cls, coords) -> "BasePoint":
        return cls(coords[0], tuple(coords[1:]))

    @property
    def coords(self) -> np.ndarray:
        return np.array((self.t, *self.q))


@dataclass(frozen=True)
class EPLocus:
    points: np.ndarray  # (k, n_params)

    def line(self, index: int, t: float) -> BasePoint:
        """Time-extrusion of the ``index``-th EP to time ``t``."""
        return BasePoint(t, tuple(self.points[index]))

    def distance(self, q) -> np.ndarray:
        """Euclidean parameter-space distance to the nearest EP (batched)."""
        q = np.asarray(q, dtype=float)
        if len(self.points) == 0:
            return np.full(q.shape[:-1], np.inf)
        diff = q[..., None, :] - self.points
        return np.min(np.linalg.norm(diff, axis=-1), axis=-1)


class HamiltonianFamily(abc.ABC):
    """Map from base-space points to a Hamiltonian and its parameter partials.

    Subclasses implement ``hamiltonian`` and ``partial``. The batch methods
    loop by default; override them for speed.
    """

    dim: int
    n_params: int
    is_time_independent: bool = True

    @abc.abstractmethod
    def hamiltonian(self, p: BasePoint) -> np.ndarray: ...

    @abc.abstractmethod
    def partial(self, i: int, p: BasePoint) -> np.ndarray:
        """Derivative of H along parameter ``i`` (0-based over q, not t)."""

    def ep_locus(self) -> EPLocus:
        return EPLocus(np.empty((0, self.n_params)))

    def hamiltonian_batch(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return np.stack([self.hamiltonian(BasePoint.from_coords(c)) for c in coords])

    def partial_batch(self, i: int, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return np.stack([self.partial(i, BasePoint.from_coords(c)) for c in coords])


def _h(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty(np.broadcast(x, y).shape + (2, 2), dtype=np.complex128)
    off = 1 + 1j * y
    out[..., 0, 0] = -1j * x
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    out[..., 1, 1] = 1j * x
    return out


def _disc(x, y):
    a = 1 + 1j * np.asarray(y, dtype=float)
    return a * a - np.asarray(x, dtype=float) ** 2


def _kx(x, y, t):
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    a = 1 + 1j * y
    c = -1 / (a * a - x * x)
    out = np.empty(x.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c * (-1j * x * x * t)
    out[..., 0, 1] = c * (a * x * t - a / 2)
    out[..., 1, 0] = c * (a * x * t + a / 2)
    out[..., 1, 1] = c * (1j * x * x * t)
    return out


def _ky(x, y, t):
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    a = 1 + 1j * y
    c = 1 / (a * a - x * x)
    out = np.empty(x.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c * (a * x * t)
    out[..., 0, 1] = c * (1j * a * a * t - 1j * x / 2)
    out[..., 1, 0] = c * (1j * a * a * t + 1j * x / 2)
    out[..., 1, 1] = c * (-a * x * t)
    return out


def hamiltonian_at(x: float, y: float) -> np.ndarray:
    return _h(x, y)


def discriminant(x: float, y: float) -> complex:
    """(1 + i y)^2 - x^2; the eigenvalues of H(x, y) are +-sqrt of this."""
    return complex(_disc(x, y))


def _check_clear(x, y, ep_threshold):
    d = abs(discriminant(x, y))
    if d < ep_threshold:
        raise AtExceptionalPoint(f"|discriminant| = {d:.3e} at (x, y) = ({x}, {y})")


def kx_closed(x: float, y: float, t: float, ep_threshold: float = EP_THRESHOLD) -> np.ndarray:
    _check_clear(x, y, ep_threshold)
    return _kx(x, y, t)


def ky_closed(x: float, y: float, t: float, ep_threshold: float = EP_THRESHOLD) -> np.ndarray:
    _check_clear(x, y, ep_threshold)
    return _ky(x, y, t)


def lambda_ref_O(r, theta):
    """Published closed form for the diagonal of S^-1 U S on the origin circle.

    The radicand has positive real part for 0 < r < 1, so the principal
    fourth root is continuous in theta and returns to 1 at 2 pi. Between the
    endpoints it is not the transported value (the gap reaches 1.15 at
    r = 0.5); use ``lambda_exact_O`` as the pointwise oracle.
    """
    if not 0 < r < 1:
        raise DomainError(f"r must lie in (0, 1), got {r}")
    z = r * np.exp(-1j * np.asarray(theta, dtype=float))
    radicand = (1 - r) * (1 + z) / ((1 + r) * (1 - z))
    return radicand ** 0.25


def lambda_exact_O(r, theta):
    """Exact solution of d(lambda)/d(theta) = f(theta) lambda on the origin circle.

    Partial fractions of the loop generator in z = exp(i theta) give
    lambda^4 = (1 + r)(1 - r e^{-i theta}) / ((1 - r)(1 + r e^{i theta})),
    whose real part 1 - r^2 cos(2 theta) (up to a positive factor) keeps the
    principal root continuous. ``lambda_ref_O`` agrees with it only at
    theta = 0 and 2 pi.
    """
    if not 0 < r < 1:
        raise DomainError(f"r must lie in (0, 1), got {r}")
    theta = np.asarray(theta, dtype=float)
    radicand = (1 + r) * (1 - r * np.exp(-1j * theta)) / ((1 - r) * (1 + r * np.exp(1j * theta)))
    return radicand ** 0.25


def lambda_ref_minus(rho, theta):
    """Diagonal entry of S^-1 U S along the circle of radius rho about (-1, 0)."""
    if not 0 < rho < 2:
        raise DomainError(f"rho must lie in (0, 2), got {rho}")
    theta = np.asarray(theta, dtype=float)
    radicand = (2 - rho * np.exp(-1j * theta)) / (2 - rho)
    return np.exp(-0.25j * theta) * radicand ** 0.25


def apply_T_symmetry(m) -> np.ndarray:
    m = np.asarray(m)
    if m.shape[-2:] != (2, 2):
        raise DimensionMismatch("T symmetry acts on 2x2 matrices")
    return T @ m @ T


class TwoLevelEPModel(HamiltonianFamily):
    """H(x, y) on the base space (t, x, y); time independent."""

    dim = 2
    n_params = 2
    is_time_independent = True

    def hamiltonian(self, p: BasePoint) -> np.ndarray:
        x, y = p.q
        return _h(x, y)

    def partial(self, i: int, p: BasePoint) -> np.ndarray:
        if i == 0:
            return DX_H.copy()
        if i == 1:
            return DY_H.copy()
        raise IndexError(f"model has 2 parameters, got direction {i}")

    def ep_locus(self) -> EPLocus:
        return EPLocus(np.array([[1.0, 0.0], [-1.0, 0.0]]))

    def hamiltonian_batch(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return _h(coords[..., 1], coords[..., 2])

    def partial_batch(self, i: int, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        m = self.partial(i, BasePoint(0.0, (0.0, 0.0)))
        return np.broadcast_to(m, coords.shape[:-1] + (2, 2)).copy()


MODEL = TwoLevelEPModel()


def flatness_residuals(x, y, t, h: float = 1e-5):
    """Curvature residual norms from central differences of the closed forms.

    Derivatives use the five-point stencil with step ``h``.

    Returns Frobenius norms of
      d_t K_x - d_x H + i[H, K_x],
      d_t K_y - d_y H + i[H, K_y],
      d_x K_y - d_y K_x + i[K_x, K_y].
    Broadcasts over array inputs.
    """
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    H = _h(x, y)
    kx = _kx(x, y, t)
    ky = _ky(x, y, t)

    def d(f):
        # five-point central stencil, O(h^4)
        return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)

    dt_kx = d(lambda e: _kx(x, y, t + e))
    dt_ky = d(lambda e: _ky(x, y, t + e))
    dx_h = d(lambda e: _h(x + e, y))
    dy_h = d(lambda e: _h(x, y + e))
    dx_ky = d(lambda e: _ky(x + e, y, t))
    dy_kx = d(lambda e: _kx(x, y + e, t))

    def norm(m):
        return np.sqrt(np.sum(np.abs(m) ** 2, axis=(-2, -1)))

    r_tx = dt_kx - dx_h + 1j * (H @ kx - kx @ H)
    r_ty = dt_ky - dy_h + 1j * (H @ ky - ky @ H)
    r_xy = dx_ky - dy_kx + 1j * (kx @ ky - ky @ kx)
    return norm(r_tx), norm(r_ty), norm(r_xy)
