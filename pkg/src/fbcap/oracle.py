"""Brute-force reference computations used to certify the solvers.

Nothing here is fast. Trajectory enumeration and grid search are capped by
explicit budgets so that the oracles stay at desk scale (tiny horizons,
binary alphabets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ConfigurationError, ConvergenceError
from .kernels import (NORM_TOL, ChannelKernel, CostFunction, InitialCondition, InputPolicy,
                      successor_table)

ENUM_BUDGET = 10**7
GRID_BUDGET = 10**7


@dataclass(frozen=True)
class GridSpec:
    """Simplex grid step and number of local refinement passes.

    Each refinement level shrinks the step by ``refine_factor``.
    """

    resolution: float = 1e-3
    refine_levels: int = 1
    refine_factor: float = 100.0
    points_per_axis: int = 13   # per-pass grid size per free coordinate

    def __post_init__(self):
        if not 0 < self.resolution <= 0.5:
            raise ConfigurationError("grid resolution must lie in (0, 0.5]")
        if self.refine_levels < 0:
            raise ConfigurationError("refine_levels must be nonnegative")
        if self.refine_factor <= 1 or self.points_per_axis < 5:
            raise ConfigurationError("refine_factor must exceed 1 and points_per_axis be at least 5")

    @property
    def final_resolution(self) -> float:
        return self.resolution / self.refine_factor**self.refine_levels


# --------------------------------------------------------------------------
# Exhaustive directed information
# --------------------------------------------------------------------------


def exhaustive_directed_info(q: ChannelKernel, pi: InputPolicy, mu: InitialCondition,
                             budget: int = ENUM_BUDGET) -> float:
    """Directed information by literal enumeration of all ``(x^n, y^n)`` paths.

    The output conditional of each stage is obtained by summing the joint law
    over input histories sharing the same initial word and output history.
    """
    T, X, Y = q.horizon, q.nx, q.ny
    size = (X * Y) ** T
    if size > budget:
        raise BudgetError(f"{X}^{T} x {Y}^{T} = {size} trajectories exceeds budget {budget}")
    if pi.pi.shape[0] != T or pi.J < q.M or mu.J != pi.J:
        raise ConfigurationError("channel, policy and initial distribution are inconsistent")
    J = pi.J
    W = Y**J
    qJ = q.expanded(J)
    succ = successor_table(Y, J)

    # axis 0: initial word, axis 1: (x, y) history flattened
    P = mu.mu[:, None].copy()
    word = np.arange(W)[:, None]
    yhist = np.zeros((W, 1), dtype=np.int64)
    total = 0.0
    for t in range(T):
        pit = pi.pi[t][word]            # (W, H, X)
        qt = qJ[t][word]                # (W, H, X, Y)
        P = P[:, :, None, None] * pit[:, :, :, None] * qt
        yh = np.broadcast_to((yhist * Y)[:, :, None, None] + np.arange(Y), P.shape)
        keys = np.arange(W)[:, None, None, None] * Y ** (t + 1) + yh
        py = np.bincount(keys.ravel(), weights=P.ravel(), minlength=W * Y ** (t + 1))
        prev_keys = keys // Y
        pprev = np.bincount(prev_keys.ravel(), weights=P.ravel(),
                            minlength=W * Y**t)
        nu = np.divide(py[keys], pprev[prev_keys], out=np.zeros(P.shape), where=P > 0)
        mask = P > 0
        total += float(np.sum(P[mask] * np.log2(qt[mask] / nu[mask])))
        word = np.broadcast_to(succ[word][:, :, None, :], P.shape).reshape(W, -1)
        yhist = yh.reshape(W, -1)
        P = P.reshape(W, -1)
    return total


# --------------------------------------------------------------------------
# Grid search over policies
# --------------------------------------------------------------------------


def _batched_lagrangian(qJ, succ, mu, cJ, s, policies):
    """Lagrangian value ``I - s * total cost`` for a batch of policies (B, T, W, X)."""
    B, T, W, X = policies.shape
    Y = qJ.shape[-1]
    with np.errstate(divide="ignore"):
        logq = np.where(qJ > 0, np.log2(np.where(qJ > 0, qJ, 1.0)), 0.0)
    shift = np.zeros((W, Y, W))
    shift[np.arange(W)[:, None], np.arange(Y)[None, :], succ] = 1.0
    p = np.broadcast_to(mu, (B, W)).copy()
    val = np.zeros(B)
    for t in range(T):
        pt = policies[:, t]                                   # (B, W, X)
        nu = np.einsum("bwx,wxy->bwy", pt, qJ[t])
        with np.errstate(divide="ignore"):
            lognu = np.log2(np.where(nu > 0, nu, 1.0))
        # E log q - E log nu, both weighted by the word law
        eq = np.einsum("bw,bwx,wxy,wxy->b", p, pt, qJ[t], logq[t])
        enu = np.einsum("bw,bwy,bwy->b", p, nu, lognu)
        val += eq - enu
        if cJ is not None and s:
            val -= s * np.einsum("bw,bwx,wx->b", p, pt, cJ[t])
        p = np.einsum("bw,bwy,wyv->bv", p, nu, shift)
    return val


def _reachable(qJ, succ, mu):
    T, W = qJ.shape[:2]
    reach = np.zeros((T, W), dtype=bool)
    cur = mu > 0
    for t in range(T):
        reach[t] = cur
        can = (qJ[t].max(axis=1) > 0) & cur[:, None]          # (W, Y)
        nxt = np.zeros(W, dtype=bool)
        nxt[succ[can]] = True
        cur = nxt
    return reach


def _axis(center, half, step):
    """Grid ``center + j*step`` for ``|j| <= half``, restricted to [0, 1]."""
    pts = center + step * np.arange(-half, half + 1)
    return pts[(pts >= -1e-15) & (pts <= 1 + 1e-15)].clip(0.0, 1.0)


def brute_force_ftfi(q: ChannelKernel, mu, cost: CostFunction | None = None, s: float = 0.0,
                     grid: GridSpec = GridSpec(), budget: int = GRID_BUDGET, chunk: int = 200_000):
    """Grid search over binary-input policies, jointly across stages and words.

    Only columns reachable from ``mu`` are searched; the rest stay uniform.
    The search proceeds in passes: each pass evaluates a full product grid
    of ``points_per_axis`` values per column around the incumbent, and the
    window is shrunk once the incumbent sits strictly inside it. Passes stop
    when the step reaches ``grid.final_resolution``. Returns
    ``(policy, value)`` with ``value = I(X^n -> Y^n) - s * sum_t E gamma_t``.
    """
    if q.nx != 2:
        raise ConfigurationError("grid oracle supports binary inputs only")
    J = max(q.M, cost.N if cost is not None else 0)
    if not isinstance(mu, InitialCondition):
        mu = InitialCondition.point(mu, J, q.ny) if isinstance(mu, (int, tuple)) \
            else InitialCondition(mu, J, q.ny)
    qJ = q.expanded(J)
    cJ = cost.expanded(J) if cost is not None else None
    succ = successor_table(q.ny, J)
    T, W = q.horizon, q.ny**J
    cols = np.argwhere(_reachable(qJ, succ, mu.mu))
    k = len(cols)
    m = grid.points_per_axis
    if m**k > budget:
        raise BudgetError(f"{m}^{k} grid points per pass exceeds budget {budget}")

    def evaluate(axes):
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k)
        best_v, best_p = -np.inf, None
        for i in range(0, len(mesh), chunk):
            sub = mesh[i:i + chunk]
            pol = np.full((len(sub), T, W, 2), 0.5)
            pol[:, cols[:, 0], cols[:, 1], 0] = sub
            pol[:, cols[:, 0], cols[:, 1], 1] = 1 - sub
            v = _batched_lagrangian(qJ, succ, mu.mu, cJ, s, pol)
            j = int(np.argmax(v))
            if v[j] > best_v:
                best_v, best_p = float(v[j]), sub[j].copy()
        return best_v, best_p

    half = (m - 1) // 2
    step = 1.0 / (2 * half)
    target = grid.final_resolution
    axes = [_axis(0.5, half, step)] * k
    best_v, best_p = evaluate(axes)
    for _ in range(10_000):
        # incumbent on a window edge that is not a simplex edge: slide the window
        on_edge = any((b == ax[0] and b > 0) or (b == ax[-1] and b < 1)
                      for b, ax in zip(best_p, axes))
        if not on_edge:
            if step <= target * (1 + 1e-9):
                break
            step = max(target, step * 2 / half)
        axes = [_axis(c, half, step) for c in best_p]
        v, p = evaluate(axes)
        if v > best_v:
            best_v, best_p = v, p
        elif on_edge:
            # sliding did not improve: treat the incumbent as interior
            if step <= target * (1 + 1e-9):
                break
            step = max(target, step * 2 / half)
            axes = [_axis(c, half, step) for c in best_p]
            v, p = evaluate(axes)
            if v > best_v:
                best_v, best_p = v, p
    pol = np.full((T, W, 2), 0.5)
    pol[cols[:, 0], cols[:, 1], 0] = best_p
    pol[cols[:, 0], cols[:, 1], 1] = 1 - best_p
    return InputPolicy(pol, J, q.ny), best_v


# --------------------------------------------------------------------------
# Stationary distributions
# --------------------------------------------------------------------------


def stationary_distribution(T, tol: float = 1e-14, max_iter: int = 10**6) -> np.ndarray:
    """Fixed point of a column-stochastic matrix by power iteration from uniform.

    A chain that keeps oscillating raises ``ConvergenceError`` whose context
    holds the detected period and the orbit.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ConfigurationError("transition matrix must be square")
    if np.any(T < -NORM_TOL) or np.max(np.abs(T.sum(0) - 1)) > NORM_TOL:
        raise ConfigurationError("transition matrix must be column-stochastic")
    d = T.shape[0]
    v = np.full(d, 1.0 / d)
    for it in range(1, max_iter + 1):
        nv = T @ v
        nv /= nv.sum()
        if np.max(np.abs(nv - v)) < tol:
            return nv
        v = nv
        if it % 1000 == 0:
            _raise_if_periodic(T, v)
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations",
                           residual=float(np.max(np.abs(T @ v - v))))


def _raise_if_periodic(T, v):
    orbit = [v]
    for _ in range(T.shape[0]):
        orbit.append(T @ orbit[-1])
    for period in range(2, T.shape[0] + 1):
        if np.max(np.abs(orbit[period] - orbit[0])) < 1e-12:
            raise ConvergenceError(
                f"chain is periodic with period {period}; no limiting distribution",
                residual=float(np.max(np.abs(orbit[1] - orbit[0]))),
                context={"period": period, "orbit": [o.tolist() for o in orbit[:period]]})
