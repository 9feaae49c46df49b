"""Hilbert-space metric transported along paths.

Connection compatibility fixes d_mu G = i G K_mu - i K_mu^dagger G, so along
a path with A = -i v.K the metric obeys dG/ds = -G A - A^dagger G. Joint
transport keeps U^dagger G U constant, which is what makes <psi|G|psi>
conserved even though the Euclidean norm of psi drifts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotHermitian, PositivityLost
from .generators import ClosedFormField, GeneratorField
from .matrix_core import adjoint, as_matrix, frobenius_norm, is_positive_definite, min_eigenvalue_2x2
from .model import BasePoint
from .paths import Path
from .transport import EP_CLEARANCE, MIN_STEPS, TransportResult, _transport_with_fine, integrate_transport, stage_generators

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricState:
    G: np.ndarray
    base: BasePoint
    s: np.ndarray  # sample positions
    history: np.ndarray  # (M, d, d)
    coords: np.ndarray  # (M, 1+n)
    max_asymmetry: float  # largest pre-symmetrisation ||G - G^dagger||_F / ||G||_F
    min_eigenvalue: float


def _min_eig(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 2:
        return min_eigenvalue_2x2(G)
    return np.linalg.eigvalsh(G)[..., 0]


def _rk4_propagators(L: np.ndarray, h: float) -> np.ndarray:
    """Exact RK4 step matrices for x' = L(s) x from L on the half-step grid."""
    L1, L2, L3 = L[0:-1:2], L[1::2], L[2::2]
    eye = np.eye(L.shape[-1])
    B2 = L2 @ (eye + 0.5 * h * L1)
    B3 = L2 @ (eye + 0.5 * h * B2)
    B4 = L3 @ (eye + h * B3)
    return eye + (h / 6) * (L1 + 2 * B2 + 2 * B3 + B4)


def _as_real(P: np.ndarray) -> np.ndarray:
    """Complex (..., m, m) maps as real (..., 2m, 2m) maps on (Re, Im) stacks."""
    return np.block([[P.real, -P.imag], [P.imag, P.real]])


def _real_symmetriser(d: int) -> np.ndarray:
    """Real-linear projector vec(G) -> vec((G + G^dagger) / 2) on (Re, Im) stacks."""
    perm = np.eye(d * d)[np.arange(d * d).reshape(d, d).T.ravel()]
    eye = np.eye(d * d)
    zero = np.zeros((d * d, d * d))
    return np.block([[0.5 * (eye + perm), zero], [zero, 0.5 * (eye - perm)]])


def evolve_metric(
    path: Path,
    G0=None,
    steps: int = 20000,
    field: GeneratorField | None = None,
    ep_clearance: float = EP_CLEARANCE,
) -> MetricState:
    """RK4 for dG/ds = -G A - A^dagger G, symmetrised after every step."""
    field = field or ClosedFormField()
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps per segment, got {steps}")
    G = np.eye(field.dim, dtype=np.complex128) if G0 is None else as_matrix(G0)
    if not is_positive_definite(G):
        raise ValueError("initial metric must be Hermitian positive-definite")

    d = G.shape[0]
    eye = np.eye(d)
    sym = _real_symmetriser(d)
    s_out, c_out, g_out = [], [], []
    worst = 0.0
    for n, seg in enumerate(path.segments):
        h, nodes, coords, A = stage_generators(seg, field, steps, ep_clearance)
        # row-major vec: vec(-G A - A^dagger G) = L vec(G)
        L = -(np.einsum("ij,nkl->nikjl", eye, np.swapaxes(A, -1, -2))
              + np.einsum("nij,kl->nikjl", adjoint(A), eye)).reshape(-1, d * d, d * d)
        P = _as_real(_rk4_propagators(L, h))
        M = sym @ P  # RK4 step followed by (G + G^dagger) / 2, real-linear
        g = np.empty((steps + 1, 2 * d * d))
        g[0] = np.concatenate([G.real.ravel(), G.imag.ravel()])
        for k in range(steps):
            g[k + 1] = M[k] @ g[k]
        raw = np.einsum("nij,nj->ni", P, g[:-1])
        asym = np.linalg.norm(raw - raw @ sym.T, axis=-1) / np.linalg.norm(raw, axis=-1)
        worst = max(worst, float(asym.max()))
        hist = (g[:, : d * d] + 1j * g[:, d * d:]).reshape(-1, d, d)
        G = hist[-1]
        first = 0 if n == 0 else 1
        s_out.append(nodes[::2][first:])
        c_out.append(coords[::2][first:])
        g_out.append(hist[first:])
    history = np.concatenate(g_out)
    lowest = _min_eig(history)
    if np.any(lowest <= 0):
        k = int(np.argmin(lowest))
        raise PositivityLost(f"metric lost positivity (min eigenvalue {lowest[k]:.3e}) at sample {k}")
    log.debug("metric asymmetry before symmetrisation: %.3e", worst)
    coords = np.concatenate(c_out)
    return MetricState(
        G=history[-1],
        base=BasePoint.from_coords(coords[-1]),
        s=np.concatenate(s_out),
        history=history,
        coords=coords,
        max_asymmetry=worst,
        min_eigenvalue=float(lowest.min()),
    )


@dataclass(frozen=True)
class NormTrace:
    s: np.ndarray
    metric_norm: np.ndarray  # <psi|G|psi>, real part
    metric_norm_imag: np.ndarray
    euclidean_norm: np.ndarray  # <psi|psi>

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.metric_norm - 1.0)))

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.s.tolist(), self.metric_norm.tolist()))


def _norm_trace(psi0, tr: TransportResult, state: MetricState) -> NormTrace:
    psi0 = np.asarray(psi0, dtype=np.complex128)
    G0 = state.history[0]
    if psi0.shape != (G0.shape[0],):
        raise DimensionMismatch(f"state of shape {psi0.shape} vs dim {G0.shape[0]}")
    n0 = np.vdot(psi0, G0 @ psi0)
    if abs(n0 - 1) > 1e-10:
        raise ValueError(f"initial state not normalised in G0: <psi|G|psi> = {n0}")
    psi = tr.U @ psi0
    val = np.einsum("ma,mab,mb->m", psi.conj(), state.history, psi)
    return NormTrace(tr.s, val.real, val.imag, np.sum(np.abs(psi) ** 2, axis=-1))


@dataclass(frozen=True)
class JointTransport:
    """U, G and optionally psi carried along the same path on the same RK4 grid."""

    transport: TransportResult
    metric: MetricState
    norm: NormTrace | None
    consistency: float  # ||U^dagger G_end U - G0||_F
    est_error: float  # same quantity, steps vs 2 steps: ||W_n - W_2n||_F with W = U^dagger G U


def joint_transport(
    path: Path,
    psi0=None,
    G0=None,
    steps: int = 20000,
    field: GeneratorField | None = None,
) -> JointTransport:
    field = field or ClosedFormField()
    state = evolve_metric(path, G0, steps, field)
    tr, U_fine = _transport_with_fine(path, field, steps, None, EP_CLEARANCE)
    G0 = state.history[0]

    def invariant(U, G):
        return adjoint(U) @ G @ U

    W = invariant(tr.holonomy, state.G)
    W_fine = invariant(U_fine, evolve_metric(path, G0, 2 * steps, field).G)

    norm = None
    if psi0 is not None:
        norm = _norm_trace(psi0, tr, state)
    return JointTransport(
        tr,
        state,
        norm,
        float(frobenius_norm(W - G0)),
        float(frobenius_norm(W - W_fine)),
    )


def norm_along_path(
    psi0,
    path: Path,
    G0=None,
    steps: int = 20000,
    field: GeneratorField | None = None,
) -> NormTrace:
    """Co-transport psi and G on the same RK4 grid and record <psi|G|psi>."""
    field = field or ClosedFormField()
    state = evolve_metric(path, G0, steps, field)
    return _norm_trace(psi0, integrate_transport(path, field, steps), state)


def _as_velocity(direction, n: int) -> np.ndarray:
    if np.ndim(direction) == 0:
        v = np.zeros(n)
        v[int(direction)] = 1.0
        return v
    v = np.asarray(direction, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f"direction vector of length {v.shape} for {n} base coordinates")
    return v


def compatibility_residual(
    p: BasePoint,
    G,
    direction,
    dG=None,
    field: GeneratorField | None = None,
) -> float:
    """||dG - v^mu (i G K_mu - i K_mu^dagger G)||_F at ``p``.

    ``direction`` is a base-space index (0 is time) or a tangent vector;
    ``dG`` is the derivative of G along it, zero for a constant metric field.
    """
    field = field or ClosedFormField()
    G = np.asarray(G, dtype=np.complex128)
    K = field.generators(p.coords[None])[0]
    v = _as_velocity(direction, K.shape[0])
    Kv = np.einsum("m,mab->ab", v, K)
    expected = 1j * G @ Kv - 1j * adjoint(Kv) @ G
    dG = np.zeros_like(G) if dG is None else np.asarray(dG)
    return float(frobenius_norm(dG - expected))


def trajectory_residuals(state: MetricState, path: Path, field: GeneratorField | None = None) -> np.ndarray:
    """Compatibility residuals at interior samples, with dG/ds from central differences."""
    field = field or ClosedFormField()
    out = []
    for seg in path.segments:
        mask = (state.s > seg.s0) & (state.s < seg.s1)
        idx = np.nonzero(mask)[0]
        idx = idx[(idx > 0) & (idx < len(state.s) - 1)]
        if len(idx) == 0:
            continue
        ds = state.s[idx + 1] - state.s[idx - 1]
        dG = (state.history[idx + 1] - state.history[idx - 1]) / ds[:, None, None]
        vel = seg.velocity(state.s[idx])
        K = field.generators(state.coords[idx])
        Kv = np.einsum("nm,nmab->nab", vel, K)
        G = state.history[idx]
        res = dG - (1j * G @ Kv - 1j * adjoint(Kv) @ G)
        out.append(frobenius_norm(res))
    return np.concatenate(out) if out else np.empty(0)


def check_hermitian(G, tol: float = 1e-10) -> None:
    if frobenius_norm(np.asarray(G) - adjoint(G)) > tol * max(1.0, frobenius_norm(G)):
        raise NotHermitian("metric is not Hermitian")
