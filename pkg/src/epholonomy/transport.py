"""Parallel transport of the evolution operator along base-space paths.

Solves dU/ds = -i (dq^mu/ds) K_mu(gamma(s)) U with classical fixed-step RK4.
Because the ODE is linear and A(s) does not depend on U, each RK4 step is
an exact matrix propagator built from A at the three stage nodes; the
propagators are assembled in one vectorised pass and multiplied in order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EndpointMismatch, NotDiagonalizedByS, PathThroughEP, StepTooCoarse
from .generators import ClosedFormField, GeneratorField
from .matrix_core import frobenius_distance
from .model import I_HOL, IDENTITY, S, S_INV
from .paths import Path

EP_CLEARANCE = 1e-3
MIN_STEPS = 100
CLASSIFY_TOL = 1e-6

HOLONOMY_LABELS = ("identity", "I", "I^2", "I^3")
HOLONOMY_POWERS = tuple(np.linalg.matrix_power(I_HOL, k) for k in range(4))


@dataclass(frozen=True)
class TransportResult:
    s: np.ndarray  # (M,)
    U: np.ndarray  # (M, d, d), U[0] = 1
    coords: np.ndarray  # (M, 1+n) base points at the samples
    step_count: int
    est_error: float
    closed: bool

    @property
    def holonomy(self) -> np.ndarray:
        return self.U[-1]

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.s.tolist(), self.U))

    def start(self) -> np.ndarray:
        return self.coords[0]

    def end(self) -> np.ndarray:
        return self.coords[-1]


def _generator_matrix(field: GeneratorField, coords: np.ndarray, vel: np.ndarray) -> np.ndarray:
    K = field.generators(coords)  # (N, 1+n, d, d)
    return -1j * np.einsum("nm,nmab->nab", vel, K)


def _check_clearance(field: GeneratorField, coords: np.ndarray, clearance: float) -> None:
    dist = field.ep_locus().distance(coords[:, 1:])
    if np.any(dist < clearance):
        k = int(np.argmin(dist))
        raise PathThroughEP(
            f"path passes within {dist[k]:.3e} of an EP at base point {coords[k]} "
            f"(clearance {clearance:.1e})"
        )


def stage_generators(seg, field: GeneratorField, steps: int, clearance: float = EP_CLEARANCE):
    """A(s) = -i v.K on the RK4 half-step grid of one segment.

    Returns the step size, the half-grid nodes, their base points and A.
    """
    h = (seg.s1 - seg.s0) / steps
    nodes = seg.s0 + 0.5 * h * np.arange(2 * steps + 1)
    coords = seg.position(nodes)
    _check_clearance(field, coords, clearance)
    return h, nodes, coords, _generator_matrix(field, coords, seg.velocity(nodes))


def _segment_propagators(seg, field, steps, clearance):
    h, nodes, coords, A = stage_generators(seg, field, steps, clearance)
    A1, A2, A3 = A[0:-1:2], A[1::2], A[2::2]
    eye = np.eye(A.shape[-1])
    B2 = A2 @ (eye + 0.5 * h * A1)
    B3 = A2 @ (eye + 0.5 * h * B2)
    B4 = A3 @ (eye + h * B3)
    P = eye + (h / 6) * (A1 + 2 * B2 + 2 * B3 + B4)
    return nodes[::2], coords[::2], P


def _propagate(path: Path, field: GeneratorField, steps: int, clearance: float, keep: bool):
    dim = field.dim
    U = np.eye(dim, dtype=np.complex128)
    s_out, c_out, u_out = [], [], []
    for n, seg in enumerate(path.segments):
        s, c, P = _segment_propagators(seg, field, steps, clearance)
        if not keep:
            for Pk in P:
                U = Pk @ U
            continue
        # sequential products: a tree or scan ordering loses ~10x in round-off near the EPs
        Us = np.empty((steps + 1, dim, dim), dtype=np.complex128)
        Us[0] = U
        for k in range(steps):
            U = np.matmul(P[k], U, out=Us[k + 1])
        first = 0 if n == 0 else 1  # joints are shared with the previous segment
        s_out.append(s[first:])
        c_out.append(c[first:])
        u_out.append(Us[first:])
    if not keep:
        return U
    return np.concatenate(s_out), np.concatenate(c_out), np.concatenate(u_out)


def integrate_transport(
    path: Path,
    field: GeneratorField | None = None,
    steps: int = 20000,
    tol: float | None = None,
    ep_clearance: float = EP_CLEARANCE,
) -> TransportResult:
    """Integrate U along ``path`` with ``steps`` RK4 steps per segment.

    ``est_error`` is ``||U_end(steps) - U_end(2 steps)||_F``. When ``tol``
    is given and the estimate exceeds it, ``StepTooCoarse`` is raised.
    """
    result, _ = _transport_with_fine(path, field or ClosedFormField(), steps, tol, ep_clearance)
    return result


def _transport_with_fine(path, field, steps, tol, ep_clearance):
    """The transport result plus the endpoint operator at 2 * steps."""
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps per segment, got {steps}")
    s, coords, U = _propagate(path, field, steps, ep_clearance, keep=True)
    fine = _propagate(path, field, 2 * steps, ep_clearance, keep=False)
    est_error = float(frobenius_distance(U[-1], fine))
    if tol is not None and est_error > tol:
        raise StepTooCoarse(f"Richardson estimate {est_error:.3e} exceeds tolerance {tol:.1e}")
    return TransportResult(s, U, coords, steps * len(path.segments), est_error, path.closed), fine


@dataclass(frozen=True)
class LambdaTrace:
    s: np.ndarray
    values: np.ndarray  # lambda(s) = (S^-1 U S)_11
    offdiag: np.ndarray  # max off-diagonal magnitude of S^-1 U S
    max_jump: float  # largest |lambda(s_k+1) - lambda(s_k)|

    def pairs(self) -> list[tuple[float, complex]]:
        return list(zip(self.s.tolist(), self.values.tolist()))


def lambda_trace(result: TransportResult, tol: float = 1e-6) -> LambdaTrace:
    xi = S_INV @ result.U @ S
    off = np.maximum(np.abs(xi[:, 0, 1]), np.abs(xi[:, 1, 0]))
    if off.max() > tol:
        k = int(np.argmax(off))
        raise NotDiagonalizedByS(f"S^-1 U S off-diagonal {off[k]:.3e} at s = {result.s[k]:.6g}")
    lam = xi[:, 0, 0]
    jump = float(np.max(np.abs(np.diff(lam)))) if len(lam) > 1 else 0.0
    return LambdaTrace(result.s, lam, off, jump)


@dataclass(frozen=True)
class HolonomyClass:
    label: str  # identity, I, I^2, I^3 or other
    distance: float
    winding_mod4: int | None


def classify_holonomy(h, tol: float = CLASSIFY_TOL) -> HolonomyClass:
    h = np.asarray(h)
    if h.shape != (2, 2):
        raise DimensionMismatch("holonomy classification needs a 2x2 matrix")
    dists = [float(frobenius_distance(h, p)) for p in HOLONOMY_POWERS]
    k = int(np.argmin(dists))
    if dists[k] >= tol:
        return HolonomyClass("other", dists[k], None)
    return HolonomyClass(HOLONOMY_LABELS[k], dists[k], k)


def compose(a: TransportResult, b: TransportResult, tol: float = 1e-12) -> np.ndarray:
    """Evolution operator of ``a`` followed by ``b``: U_b U_a."""
    if np.max(np.abs(a.end() - b.start())) > tol:
        raise EndpointMismatch(f"path end {a.end()} does not meet path start {b.start()}")
    return b.holonomy @ a.holonomy


def transport_state(psi0, result: TransportResult) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (result.U.shape[-1],):
        raise DimensionMismatch(f"state of shape {psi0.shape} vs operator dim {result.U.shape[-1]}")
    return result.holonomy @ psi0


def reference_power(k: int) -> np.ndarray:
    """I_hol ** k for any integer k."""
    return HOLONOMY_POWERS[k % 4].copy()


__all__ = [
    "TransportResult",
    "LambdaTrace",
    "HolonomyClass",
    "integrate_transport",
    "lambda_trace",
    "classify_holonomy",
    "compose",
    "transport_state",
    "reference_power",
    "IDENTITY",
]
