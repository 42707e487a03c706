"""DC measurement model: Jacobians, WLS estimation, bad-data detection, attacks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .grid import MeasurementPlacement, Meter, MeterKind, PowerNetwork, build_incidence

PIVOT_TOL = 1e-8


class Unobservable(ValueError):
    def __init__(self, rank: int, n: int):
        super().__init__(f"unobservable: reduced Jacobian has rank {rank} < {n}")
        self.rank = rank
        self.n = n


def gauss_jordan(M: np.ndarray, rel_tol: float = PIVOT_TOL):
    """Reduced row echelon form with partial pivoting.

    Pivots below ``rel_tol`` times the largest entry of the input are treated
    as zero. Returns ``(rref, pivot_columns)``.
    """
    R = np.array(M, dtype=float, copy=True)
    rows, cols = R.shape
    if R.size == 0:
        return R, []
    tol = rel_tol * max(np.abs(R).max(), 1e-300)
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) <= tol:
            R[r:, c] = 0.0
            continue
        if p != r:
            R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, c], R[r])
        pivots.append(c)
        r += 1
    return R, pivots


def matrix_rank(M: np.ndarray, rel_tol: float = PIVOT_TOL) -> int:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    return len(gauss_jordan(M, rel_tol)[1])


@dataclass(frozen=True)
class JacobianSet:
    full: np.ndarray
    reduced: np.ndarray
    row_meters: tuple[int, ...]
    reference: int

    @property
    def m(self) -> int:
        return self.full.shape[0]

    @property
    def n(self) -> int:
        return self.reduced.shape[1]


@dataclass(frozen=True)
class KnowledgeError:
    """Admittance perturbation per line; absent lines are known exactly."""

    epsilon: Mapping[int, float] = field(default_factory=dict)

    def __getitem__(self, line: int) -> float:
        return self.epsilon.get(line, 0.0)

    @classmethod
    def unknown_except(cls, network: PowerNetwork, known: Iterable[int], rng: np.random.Generator,
                       scale: float = 0.5) -> "KnowledgeError":
        """Random perturbation on every line not in ``known``; keeps y + eps > 0."""
        known = set(known)
        eps = {}
        for ln in network.lines:
            if ln.id not in known:
                y = ln.admittance
                eps[ln.id] = float(y * rng.uniform(-scale, scale))
        return cls(eps)


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: np.ndarray
    residual_norm: float
    gain_inverse_rank: int
    residual: np.ndarray | None = None


@dataclass(frozen=True)
class AttackVector:
    a: np.ndarray
    c: np.ndarray | None = None


def meter_row(network: PowerNetwork, meter: Meter, admittances: Sequence[float],
              A: np.ndarray | None = None) -> np.ndarray:
    if A is None:
        A = build_incidence(network)
    if meter.kind is MeterKind.INJECTION:
        row = np.zeros(network.n_buses)
        j = meter.bus
        for ln in network.lines:
            if ln.pseudo or j not in ln.ends:
                continue
            # (A^T Y A)[j, :] restricted to line ln
            row += A[ln.id, j] * admittances[ln.id] * A[ln.id]
        return row
    return meter.direction * admittances[meter.line] * A[meter.line].astype(float)


def _jacobian(network, meters, admittances):
    A = build_incidence(network)
    H = np.zeros((len(meters), network.n_buses))
    for i, m in enumerate(meters):
        H[i] = meter_row(network, m, admittances, A)
    reduced = np.delete(H, network.reference, axis=1)
    return JacobianSet(H, reduced, tuple(m.id for m in meters), network.reference)


def build_jacobian(network: PowerNetwork, placement: MeasurementPlacement | Sequence[Meter]) -> JacobianSet:
    y = [ln.admittance for ln in network.lines]
    return _jacobian(network, list(placement), y)


def attacker_jacobian(network: PowerNetwork, placement, eps: KnowledgeError) -> JacobianSet:
    y = []
    for ln in network.lines:
        value = ln.admittance + eps[ln.id]
        if not value > 0:
            raise ValueError(f"line {ln.id}: nonpositive perturbed admittance")
        y.append(value)
    return _jacobian(network, list(placement), y)


def selection_matrices(network: PowerNetwork, placement: MeasurementPlacement):
    """``(L_F, L_I)``: signed flow selection and injection selection matrices."""
    flows = [m for m in placement if m.kind is not MeterKind.INJECTION]
    injections = [m for m in placement if m.kind is MeterKind.INJECTION]
    LF = np.zeros((len(flows), len(network.lines)), dtype=int)
    for i, m in enumerate(flows):
        LF[i, m.line] = m.direction
    LI = np.zeros((len(injections), network.n_buses), dtype=int)
    for i, m in enumerate(injections):
        LI[i, m.bus] = 1
    return LF, LI


def estimator_matrix(jac: JacobianSet, Q: np.ndarray | None = None) -> np.ndarray:
    """``P = (H^T Q^-1 H)^-1 H^T Q^-1`` for the reduced Jacobian."""
    H = jac.reduced
    rank = matrix_rank(H)
    if rank < H.shape[1]:
        raise Unobservable(rank, H.shape[1])
    w = _weights(Q, H.shape[0])
    Hw = H * np.sqrt(w)[:, None]
    # least-squares pseudo-inverse of the whitened system, then re-weight
    q, r = np.linalg.qr(Hw)
    return np.linalg.solve(r, q.T) * np.sqrt(w)[None, :]


def _weights(Q, m):
    if Q is None:
        return np.ones(m)
    Q = np.asarray(Q, dtype=float)
    diag = np.diag(Q) if Q.ndim == 2 else Q
    if np.any(diag <= 0):
        raise ValueError("Q must be positive")
    return 1.0 / diag


def wls_estimate(jac: JacobianSet, z: np.ndarray, Q: np.ndarray | None = None) -> EstimationResult:
    z = np.asarray(z, dtype=float)
    if z.shape != (jac.m,):
        raise ValueError("measurement vector length does not match the Jacobian")
    P = estimator_matrix(jac, Q)
    theta = P @ z
    r = z - jac.reduced @ theta
    return EstimationResult(theta, float(np.linalg.norm(r)), jac.n, r)


def default_tau(m: int, n: int, confidence: float = 0.975) -> float:
    dof = m - n
    if dof <= 0:
        raise ValueError("no measurement redundancy: threshold undefined")
    return float(np.sqrt(stats.chi2.ppf(confidence, dof)))


def bdd_detect(result: EstimationResult, tau: float) -> bool:
    return result.residual_norm > tau


def apply_attack(z: np.ndarray, a: AttackVector | np.ndarray) -> np.ndarray:
    vec = a.a if isinstance(a, AttackVector) else np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    if vec.shape != z.shape:
        raise ValueError("attack length does not match measurement length")
    return z + vec


def full_state(network: PowerNetwork, c: np.ndarray | Mapping[int, float]) -> np.ndarray:
    """Length n+1 bus vector from a reduced vector or a bus -> value mapping."""
    out = np.zeros(network.n_buses)
    if isinstance(c, Mapping):
        for b, v in c.items():
            out[b] = v
    else:
        c = np.asarray(c, dtype=float)
        if c.shape == (network.n_buses,):
            return c.copy()
        if c.shape != (network.n_states,):
            raise ValueError("state vector has the wrong length")
        out[np.arange(network.n_buses) != network.reference] = c
    if out[network.reference] != 0:
        out -= out[network.reference]
    return out


def reduced_state(network: PowerNetwork, full: np.ndarray) -> np.ndarray:
    full = np.asarray(full, dtype=float)
    return np.delete(full - full[network.reference], network.reference)
