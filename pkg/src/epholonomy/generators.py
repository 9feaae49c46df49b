"""Gauge-fixed evolution generators K_i = t K1_i + K0_i.

For a time-independent H the flatness conditions in the adiabatic gauge
reduce to the algebraic system

    [K1, H] = 0,    K1 + i [H, K0] = d_i H,

which is solved in the eigenbasis of H. The eigenbasis-diagonal part of K0
is fixed to zero; this is the gauge that reproduces the model's printed
closed forms.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from . import model as _model
from .errors import AtExceptionalPoint, NearDegenerate, NotTimeIndependent
from .matrix_core import EP_THRESHOLD, commutator, eig2, frobenius_norm
from .model import BasePoint, EPLocus, HamiltonianFamily


@dataclass(frozen=True)
class GeneratorPair:
    direction: int
    K1: np.ndarray
    K0: np.ndarray
    base: BasePoint

    def residuals(self, family: HamiltonianFamily) -> tuple[float, float]:
        """Frobenius norms of both determining equations at ``base``."""
        H = family.hamiltonian(self.base)
        dH = family.partial(self.direction, self.base)
        r1 = frobenius_norm(commutator(self.K1, H))
        r2 = frobenius_norm(self.K1 + 1j * commutator(H, self.K0) - dH)
        return float(r1), float(r2)


def _eigenbasis(H: np.ndarray, ep_threshold: float):
    if H.shape == (2, 2):
        dec = eig2(H, ep_threshold)
        w = np.array(dec.eigenvalues)
        V = dec.right_eigenvectors
    else:
        w, V = np.linalg.eig(H)
        gaps = np.abs(w[:, None] - w[None, :]) + np.diag(np.full(len(w), np.inf))
        if gaps.min() < ep_threshold:
            raise NearDegenerate(f"eigenvalue gap {gaps.min():.3e} below threshold")
    return w, V


def solve_generator_pair(
    family: HamiltonianFamily, i: int, p: BasePoint, ep_threshold: float = EP_THRESHOLD
) -> GeneratorPair:
    if not family.is_time_independent:
        raise NotTimeIndependent("the algebraic reduction needs a t-independent Hamiltonian")
    H = family.hamiltonian(p)
    try:
        w, V = _eigenbasis(H, ep_threshold)
    except NearDegenerate as exc:
        raise AtExceptionalPoint(f"degenerate spectrum at {p}: {exc}") from exc
    Vi = np.linalg.inv(V)
    M = Vi @ family.partial(i, p) @ V
    gap = w[:, None] - w[None, :]
    np.fill_diagonal(gap, 1.0)
    N = -1j * M / gap
    np.fill_diagonal(N, 0.0)
    K1 = V @ np.diag(np.diag(M)) @ Vi
    K0 = V @ N @ Vi
    return GeneratorPair(i, K1, K0, p)


def assemble_K(pair: GeneratorPair, t: float) -> np.ndarray:
    return t * pair.K1 + pair.K0


@dataclass(frozen=True)
class CrossCheck:
    """Residual norms of the cross-direction identities between two directions."""

    slope: float  # d_i K1_j - d_j K1_i - i[K0_j, K1_i] + i[K0_i, K1_j]
    intercept: float  # d_i K0_j - d_j K0_i - i[K0_j, K0_i]
    slopes_commute: float  # [K1_i, K1_j]


def cross_direction_check(
    pa: GeneratorPair,
    pb: GeneratorPair,
    family: HamiltonianFamily,
    p: BasePoint,
    h: float = 1e-5,
) -> CrossCheck:
    i, j = pa.direction, pb.direction

    def shifted(direction, k, sign):
        q = list(p.q)
        q[k] += sign * h
        return solve_generator_pair(family, direction, BasePoint(p.t, tuple(q)))

    def d(direction, k):
        plus, minus = shifted(direction, k, 1), shifted(direction, k, -1)
        return (plus.K1 - minus.K1) / (2 * h), (plus.K0 - minus.K0) / (2 * h)

    di_kj1, di_kj0 = d(j, i)
    dj_ki1, dj_ki0 = d(i, j)
    slope = di_kj1 - dj_ki1 - 1j * commutator(pb.K0, pa.K1) + 1j * commutator(pa.K0, pb.K1)
    intercept = di_kj0 - dj_ki0 - 1j * commutator(pb.K0, pa.K0)
    return CrossCheck(
        float(frobenius_norm(slope)),
        float(frobenius_norm(intercept)),
        float(frobenius_norm(commutator(pa.K1, pb.K1))),
    )


class GeneratorField(abc.ABC):
    """Source of all connection generators (K_0 = H, K_1, ..., K_n) on the base space."""

    dim: int
    n_params: int

    @abc.abstractmethod
    def generators(self, coords: np.ndarray) -> np.ndarray:
        """Batched generators: coords (N, 1+n) -> (N, 1+n, dim, dim)."""

    def ep_locus(self) -> EPLocus:
        return EPLocus(np.empty((0, self.n_params)))


class ClosedFormField(GeneratorField):
    """The model's exact H, K_x, K_y."""

    dim = 2
    n_params = 2

    def generators(self, coords):
        coords = np.asarray(coords, dtype=float)
        t, x, y = coords[..., 0], coords[..., 1], coords[..., 2]
        return np.stack([_model._h(x, y), _model._kx(x, y, t), _model._ky(x, y, t)], axis=-3)

    def ep_locus(self):
        return _model.MODEL.ep_locus()


class SolvedField(GeneratorField):
    """Generators obtained by solving the determining system pointwise.

    Vectorised over points with a batched eigensolve; raises
    ``AtExceptionalPoint`` where the spectrum is (near) degenerate.
    """

    def __init__(self, family: HamiltonianFamily, ep_threshold: float = EP_THRESHOLD):
        if not family.is_time_independent:
            raise NotTimeIndependent("SolvedField needs a t-independent family")
        self.family = family
        self.dim = family.dim
        self.n_params = family.n_params
        self.ep_threshold = ep_threshold

    def ep_locus(self):
        return self.family.ep_locus()

    def pairs(self, coords):
        """Batched (K1, K0) per direction: two arrays of shape (N, n, dim, dim)."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        H = self.family.hamiltonian_batch(coords)
        w, V = np.linalg.eig(H)
        gap = w[..., :, None] - w[..., None, :]
        off = ~np.eye(self.dim, dtype=bool)
        smallest = np.min(np.abs(gap[..., off]), axis=-1)
        if np.any(smallest < self.ep_threshold):
            k = int(np.argmin(smallest))
            raise AtExceptionalPoint(f"degenerate spectrum at coords {coords[k]}")
        Vi = np.linalg.inv(V)
        gap = np.where(off, gap, 1.0)
        k1s, k0s = [], []
        for i in range(self.n_params):
            M = Vi @ self.family.partial_batch(i, coords) @ V
            diag = M * np.eye(self.dim)
            N = np.where(off, -1j * M / gap, 0.0)
            k1s.append(V @ diag @ Vi)
            k0s.append(V @ N @ Vi)
        return np.stack(k1s, axis=1), np.stack(k0s, axis=1)

    def generators(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        k1, k0 = self.pairs(coords)
        K = coords[:, 0, None, None, None] * k1 + k0
        H = self.family.hamiltonian_batch(coords)
        return np.concatenate([H[:, None], K], axis=1)
