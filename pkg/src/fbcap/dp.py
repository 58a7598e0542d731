"""Backward dynamic programming for finite-horizon feedback capacity.

Each stage solves, for every memory word ``w``, the concave program

    K_t(w) = max_pi  sum_x pi(x) [ sum_y q(y|w,x) (log2 q/nu + K_{t+1}(w y)) - s gamma(x, w) ]

by alternating maximization over the reverse kernel ``r(x|w,y)`` and the
policy column, starting from the uniform column. ``K`` is the Lagrangian
value; with ``s = 0`` it is the plain directed-information value ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, ConfigurationError, ConvergenceError
from .kernels import (ChannelKernel, CostFunction, InitialCondition, InputPolicy, OutputKernel,
                      directed_information, expected_cost, successor_table)

TINY = 1e-300
ASCENT_SLACK = 1e-10  # tolerated floating-point dip in the stage objective
POLISH_EVERY = 50     # alternating iterations between Newton polishing attempts
PRUNE_MASS = 1e-6     # inputs below this mass that lose to the support are set to zero
SUPPORT_EPS = 1e-9    # inputs at or above this mass count as supported
GAP_TOL = 1e-10       # score spread allowed over the support at termination
LN2 = np.log(2.0)


@dataclass
class StageResult:
    policy: np.ndarray      # (W, X)
    output: np.ndarray      # (W, Y)
    value: np.ndarray       # (W,)
    reverse: np.ndarray     # (W, Y, X)
    iterations: int
    residual: float
    min_increment: float


def _objective(pi, q, base):
    nu = np.matmul(pi[:, None, :], q)[:, 0, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(nu > 0, nu * np.log2(np.where(nu > 0, nu, 1.0)), 0.0)
    return (pi * base).sum(-1) - ent.sum(-1)


def _face_is_stable(col, q_w, base_w, zeroed):
    """True when every zeroed input still scores below the support at ``col``."""
    nu = col @ q_w
    D = base_w - q_w @ np.log2(np.maximum(nu, TINY))
    return bool(np.all(D[zeroed] < D[col > 0].max()))


def _newton_polish(pi, q, base, support_eps=1e-8):
    """One safeguarded Newton step per word on the support of ``pi``.

    The alternating iteration is linearly convergent and crawls when the stage
    objective is flat; a Newton step restricted to the simplex face of the
    current support is accepted only if it keeps the column positive and does
    not decrease the objective.
    """
    out = pi.copy()
    obj0 = _objective(pi, q, base)
    for w in range(pi.shape[0]):
        S = np.nonzero(pi[w] > support_eps)[0]
        if S.size < 2:
            continue
        qs = q[w, S]                                   # (k, Y)
        # directions that leave nu unchanged: the objective is linear along them,
        # so follow the projected gradient to the face of the simplex
        B = np.vstack([qs.T, np.ones(S.size)])
        _, sv, vt = np.linalg.svd(B)
        rank = int(np.sum(sv > 1e-12 * sv[0]))
        if rank < S.size:
            N = vt[rank:]
            g_null = N.T @ (N @ base[w, S])
            if np.max(np.abs(g_null)) > 1e-14 and np.any(g_null < 0):
                neg = g_null < 0
                t = np.min(-pi[w, S][neg] / g_null[neg])
                cand = pi[w].copy()
                cand[S] = np.maximum(pi[w, S] + t * g_null, 0.0)
                cand[S[neg][np.argmin(-pi[w, S][neg] / g_null[neg])]] = 0.0
                cand /= cand.sum()
                if _objective(cand[None], q[w:w + 1], base[w:w + 1])[0] >= obj0[w]:
                    out[w] = cand
                    continue
        nu = pi[w] @ q[w]
        pos = nu > 0
        lognu = np.log2(np.where(pos, nu, 1.0))
        g = base[w, S] - qs @ lognu
        Hs = -(qs[:, pos] / nu[pos]) @ qs[:, pos].T / LN2
        k = S.size
        A = np.zeros((k + 1, k + 1))
        A[:k, :k], A[:k, k], A[k, :k] = Hs, 1.0, 1.0
        rhs = np.concatenate([-g, [0.0]])
        d = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
        # inputs the full step pushes out of the simplex are tried on the face first
        if np.any(pi[w, S] + d <= 0):
            cand = pi[w].copy()
            cand[S] = np.maximum(pi[w, S] + d, 0.0)
            cand /= cand.sum()
            if (_objective(cand[None], q[w:w + 1], base[w:w + 1])[0] > obj0[w]
                    and _face_is_stable(cand, q[w], base[w], S[pi[w, S] + d <= 0])):
                out[w] = cand
                continue
        step = 1.0
        for _ in range(40):
            cand = pi[w].copy()
            cand[S] += step * d
            if np.all(cand[S] > 0):
                cand /= cand.sum()
                if _objective(cand[None], q[w:w + 1], base[w:w + 1])[0] >= obj0[w]:
                    out[w] = cand
                    break
            step *= 0.5
    return out


def _prune(pi, D, q, base):
    """Zero out vanishing inputs whose score is below the support's, re-seed zeroed ones that win.

    Multiplicative updates only shrink a losing input geometrically, so a small
    sup-norm change does not mean that input has reached zero.
    """
    big = pi >= PRUNE_MASS
    top = np.where(big, D, -np.inf).max(-1, keepdims=True)
    drop = (pi > 0) & ~big & (D < top - 1e-12)
    revive = (pi == 0) & (D > top + 1e-12)
    if not drop.any() and not revive.any():
        return pi, False
    new = np.where(drop, 0.0, np.where(revive, PRUNE_MASS, pi))
    new /= new.sum(-1, keepdims=True)
    ok = _objective(new, q, base) > _objective(pi, q, base)
    # a dropped input must still lose at the pruned point, otherwise zero is not optimal
    nu = np.matmul(new[:, None, :], q)[:, 0, :]
    Dn = base - np.matmul(q, np.log2(np.maximum(nu, TINY))[:, :, None])[:, :, 0]
    top_n = np.where(new > 0, Dn, -np.inf).max(-1, keepdims=True)
    ok &= ~np.any(drop & (Dn >= top_n), axis=-1)
    ok |= revive.any(-1)
    new = np.where(ok[:, None], new, pi)
    return new, bool(ok.any())


def _stage_batch(q, v, c, s, tol_inner, max_inner):
    """Alternating maximization for a batch of independent words.

    q: (W, X, Y), v: (W, Y) continuation values at successor words,
    c: (W, X) stage cost or None.
    """
    W, X, Y = q.shape
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0, np.log2(np.where(q > 0, q, 1.0)), 0.0)
    # part of D(x) that does not depend on the current policy
    base = (q * (logq + v[:, None, :])).sum(-1)
    if c is not None and s:
        base = base - s * c
    qt = np.ascontiguousarray(q.transpose(0, 2, 1))  # (W, Y, X)

    pi = np.full((W, X), 1.0 / X)
    prev_obj = None
    min_inc = np.inf
    residual = np.inf
    it = 0
    while it < max_inner:
        it += 1
        nu = np.matmul(pi[:, None, :], q)[:, 0, :]
        D = base - np.matmul(q, np.log2(np.maximum(nu, TINY))[:, :, None])[:, :, 0]
        obj = np.matmul(pi[:, None, :], D[:, :, None]).ravel()
        if prev_obj is not None:
            inc = (obj - prev_obj).min()
            if inc < min_inc:
                min_inc = float(inc)
                if inc < -ASCENT_SLACK * max(1.0, float(np.abs(obj).max())):
                    raise ConvergenceError(
                        f"stage objective decreased by {-inc:.3e}", residual=residual)
        prev_obj = obj
        e = pi * np.exp2(D - D.max(-1, keepdims=True))
        new = e / e.sum(-1, keepdims=True)
        residual = float(np.abs(new - pi).max())
        if residual < tol_inner:
            # tiny masses move by tiny amounts: also require equal scores on the support
            sup = pi >= SUPPORT_EPS
            gap = (np.where(sup, D, -np.inf).max(-1) - np.where(sup, D, np.inf).min(-1)).max()
            if gap > GAP_TOL:
                residual = max(residual, tol_inner)
        pi = new
        if residual < tol_inner or it % POLISH_EVERY == 0:
            pi, changed = _prune(pi, D, q, base)
            if residual < tol_inner and not changed:
                break
            if not residual < tol_inner:
                pi = _newton_polish(pi, q, base)
            prev_obj = _objective(pi, q, base)
    else:
        raise ConvergenceError(
            f"inner iteration did not reach {tol_inner:g} in {max_inner} iterations",
            residual=residual)

    nu = np.einsum("wx,wyx->wy", pi, qt)
    lognu = np.log2(np.maximum(nu, TINY))
    D = base - np.einsum("wxy,wy->wx", q, lognu)
    value = (pi * D).sum(-1)
    r = qt * pi[:, None, :] / np.maximum(nu, TINY)[:, :, None]
    r_sum = r.sum(-1, keepdims=True)
    r = np.where(r_sum > 0, r / np.where(r_sum > 0, r_sum, 1.0), 1.0 / X)
    return StageResult(pi, nu, value, r, it, residual, min_inc)


def solve_stage(q_w, v_next, cost=None, s: float = 0.0, tol_inner: float = 1e-12,
                max_inner: int = 10_000) -> StageResult:
    """Solve one stage for one word (``q_w`` of shape (X, Y)) or a batch (W, X, Y).

    ``v_next[..., y]`` is the next-stage value at the word reached after
    emitting ``y``.
    """
    if s < 0:
        raise ConfigurationError("Lagrange multiplier s must be nonnegative")
    q_w = np.asarray(q_w, dtype=float)
    single = q_w.ndim == 2
    q3 = q_w[None] if single else q_w
    v = np.asarray(v_next, dtype=float).reshape(q3.shape[0], q3.shape[2])
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("continuation values must be finite")
    c = None
    if cost is not None:
        c = np.asarray(cost, dtype=float).reshape(q3.shape[0], q3.shape[1])
    res = _stage_batch(q3, v, c, s, tol_inner, max_inner)
    if single:
        res.policy, res.output, res.reverse = res.policy[0], res.output[0], res.reverse[0]
        res.value = res.value[0]
    return res


@dataclass
class DpSolution:
    policy: InputPolicy
    values: np.ndarray              # (n+2, W), K_t(w) without the s(n+1)kappa offset
    output: OutputKernel
    reverse: np.ndarray             # (n+1, W, Y, X)
    ftfi_value: float
    directed_information: float
    achieved_cost: float | None
    s: float
    kappa: float | None
    mu: InitialCondition
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.policy.n

    @property
    def lagrangian(self) -> float:
        return float(self.values[0] @ self.mu.mu)

    @property
    def per_unit(self) -> float:
        return self.ftfi_value / (self.n + 1)


def _memory(q: ChannelKernel, cost: CostFunction | None) -> int:
    return max(q.M, cost.N if cost is not None else 0)


def _as_initial(mu, J, ny) -> InitialCondition:
    if isinstance(mu, InitialCondition):
        if mu.J != J:
            raise ConfigurationError(f"initial distribution is over length-{mu.J} words, need J={J}")
        return mu
    if isinstance(mu, (int, np.integer, tuple)):
        return InitialCondition.point(mu, J, ny)
    return InitialCondition(mu, J, ny)


def solve_ftfi(q: ChannelKernel, mu, cost: CostFunction | None = None, s: float = 0.0,
               kappa: float | None = None, tol_inner: float = 1e-12,
               max_inner: int = 10_000) -> DpSolution:
    """Backward sweep ``t = n, ..., 0`` over all memory words.

    ``ftfi_value`` is the Lagrangian ``sum_w K_0(w) mu(w) + s (n+1) kappa``;
    ``kappa`` defaults to the achieved average cost, in which case the value
    coincides with the directed information of the optimal policy.
    """
    if s < 0:
        raise ConfigurationError("Lagrange multiplier s must be nonnegative")
    if cost is not None and cost.gamma.shape[0] != q.horizon:
        raise ConfigurationError("cost horizon differs from channel horizon")
    J = _memory(q, cost)
    mu = _as_initial(mu, J, q.ny)
    T, W, X, Y = q.horizon, q.ny**J, q.nx, q.ny
    qJ = q.expanded(J)
    cJ = cost.expanded(J) if cost is not None else None
    succ = successor_table(Y, J)

    values = np.zeros((T + 1, W))
    pi = np.empty((T, W, X))
    nu = np.empty((T, W, Y))
    rev = np.empty((T, W, Y, X))
    iters = np.empty(T, dtype=int)
    resid = np.empty(T)
    min_inc = np.inf
    for t in range(T - 1, -1, -1):
        try:
            res = _stage_batch(qJ[t], values[t + 1][succ], None if cJ is None else cJ[t], s,
                               tol_inner, max_inner)
        except ConvergenceError as exc:
            raise ConvergenceError(f"stage t={t}: {exc}", residual=exc.residual,
                                   context={"t": t}) from exc
        pi[t], nu[t], values[t], rev[t] = res.policy, res.output, res.value, res.reverse
        iters[t], resid[t] = res.iterations, res.residual
        min_inc = min(min_inc, res.min_increment)

    policy = InputPolicy(pi, J, Y, normalize=True)
    output = OutputKernel(nu, J, normalize=True)
    di = directed_information(q, policy, mu)
    achieved = expected_cost(q, policy, cost, mu) if cost is not None else None
    lag = float(values[0] @ mu.mu)
    k = kappa if kappa is not None else achieved
    ftfi = lag + s * T * k if (cost is not None and s) else lag
    diag = {"iterations": iters, "residual": resid, "min_increment": float(min_inc),
            "max_iterations": int(iters.max()), "max_residual": float(resid.max())}
    return DpSolution(policy, values, output, rev, float(ftfi), di, achieved, float(s),
                      k, mu, diag)


@dataclass
class KKTReport:
    equality: np.ndarray     # (n+1, W) max |D(x) - K| over supported x
    inequality: np.ndarray   # (n+1, W) max (D(x) - K)^+ over unsupported x
    K: np.ndarray            # (n+2, W)
    tol: float

    @property
    def residual(self) -> np.ndarray:
        return np.maximum(self.equality, self.inequality)

    @property
    def max_residual(self) -> float:
        return float(self.residual.max())

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol

    def worst(self):
        """``(t, w, residual)`` of the largest violation."""
        r = self.residual
        t, w = np.unravel_index(int(np.argmax(r)), r.shape)
        return int(t), int(w), float(r[t, w])


def verify_kkt(q: ChannelKernel, pi: InputPolicy, cost: CostFunction | None = None,
               s: float = 0.0, tol: float = 1e-8, support_eps: float = 1e-9) -> KKTReport:
    """Check the sequential necessary and sufficient optimality conditions.

    The per-word constant ``K_t(w)`` is built backwards from the candidate
    policy as the largest left-hand side over its supported inputs.
    """
    if tol <= 0:
        raise ConfigurationError("tolerance must be positive")
    if pi.pi.shape[0] != q.horizon or pi.nx != q.nx or pi.ny != q.ny:
        raise ConfigurationError("policy does not match the channel")
    J = pi.J
    if J < _memory(q, cost):
        raise ConfigurationError(f"policy memory J={J} is shorter than the channel/cost memory")
    T, W, X, Y = q.horizon, q.ny**J, q.nx, q.ny
    qJ = q.expanded(J)
    cJ = cost.expanded(J) if cost is not None else None
    succ = successor_table(Y, J)
    with np.errstate(divide="ignore"):
        logq = np.where(qJ > 0, np.log2(np.where(qJ > 0, qJ, 1.0)), 0.0)

    K = np.zeros((T + 1, W))
    eq = np.zeros((T, W))
    ineq = np.zeros((T, W))
    for t in range(T - 1, -1, -1):
        p = pi.pi[t]
        nu = np.einsum("wx,wxy->wy", p, qJ[t])
        lognu = np.log2(np.maximum(nu, TINY))
        # unsupported inputs may put mass where nu = 0: D = +inf correctly flags them
        with np.errstate(invalid="ignore"):
            D = (qJ[t] * (logq[t] - lognu[:, None, :] + K[t + 1][succ][:, None, :])).sum(-1)
        if cJ is not None and s:
            D = D - s * cJ[t]
        sup = p >= support_eps
        Kt = np.where(sup, D, -np.inf).max(-1)
        K[t] = Kt
        eq[t] = np.where(sup, np.abs(D - Kt[:, None]), 0.0).max(-1)
        ineq[t] = np.where(~sup, np.maximum(D - Kt[:, None], 0.0), 0.0).max(-1)
    return KKTReport(eq, ineq, K, tol)


def cost_constrained_capacity(q: ChannelKernel, gamma: CostFunction, mu, kappa_target: float,
                              s_bracket=(0.0, 1.0), cost_tol: float = 1e-4, s_tol: float = 1e-10,
                              **solver_kw):
    """Bisection on the multiplier until the achieved cost hits ``kappa_target``.

    Returns ``(s_star, solution)``. When the target is at least the cost of the
    unconstrained optimum the constraint is inactive and ``s_star = 0``.
    """
    if kappa_target < 0:
        raise ConfigurationError("cost target must be nonnegative")
    lo, hi = map(float, s_bracket)
    if not 0 <= lo < hi:
        raise ConfigurationError(f"invalid multiplier bracket {s_bracket!r}")

    def run(s):
        return solve_ftfi(q, mu, gamma, s=s, kappa=kappa_target, **solver_kw)

    free = run(0.0)
    if kappa_target >= free.achieved_cost:
        return 0.0, free
    sol_lo = free if lo == 0 else run(lo)
    sol_hi = run(hi)
    if not sol_lo.achieved_cost >= kappa_target >= sol_hi.achieved_cost:
        raise BracketError(
            f"bracket [{lo}, {hi}] gives costs [{sol_lo.achieved_cost:.6g}, {sol_hi.achieved_cost:.6g}],"
            f" which do not straddle {kappa_target}",
            cost_lo=sol_lo.achieved_cost, cost_hi=sol_hi.achieved_cost)
    for sol, s in ((sol_lo, lo), (sol_hi, hi)):
        if abs(sol.achieved_cost - kappa_target) < cost_tol:
            return s, sol
    best = (hi, sol_hi)
    while hi - lo >= s_tol:
        mid = 0.5 * (lo + hi)
        sol = run(mid)
        if abs(sol.achieved_cost - kappa_target) < cost_tol:
            return mid, sol
        if sol.achieved_cost > kappa_target:
            lo = mid
        else:
            hi, best = mid, (mid, sol)
    return best
