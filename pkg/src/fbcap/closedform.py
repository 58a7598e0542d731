"""Closed-form recursions for binary unit- and two-memory channels.

Channels (words stored most-recent-last, see ``fbcap.kernels``):

* BUMCO(alpha, beta, gamma, delta): binary, unit output memory, with
  ``q(0|x=0,y'=0)=alpha, q(0|x=0,y'=1)=beta, q(0|x=1,y'=0)=gamma,
  q(0|x=1,y'=1)=delta``.
* BEUMCO(alpha, gamma, beta): binary input, outputs ``(0, e, 1)``; the input
  arrives unerased with probability ``alpha, gamma, beta`` after a previous
  output ``0, e, 1`` respectively.
* BSTMCO(alpha, beta, gamma, delta): binary, two-step output memory with the
  input/output symmetry ``q(y|y1,y2,x) = q(1-y|1-y1,1-y2,1-x)``.

Differences of value functions use one orientation throughout:
``delta = C(1) - C(0)`` for BUMCO (with or without cost),
``(C(0) - C(1), C(1) - C(e))`` for BEUMCO, and
``C(y1=0,y2=1) - C(0,0)`` for BSTMCO.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, ConsistencyError, RegimeError
from .kernels import (ChannelKernel, CostFunction, FiniteAlphabet, InitialCondition, InputPolicy,
                      OutputKernel, binary_entropy as H, directed_information, expected_cost,
                      word_index)
from .oracle import stationary_distribution

REGIME_SLACK = 1e-12


def _log1p2(x):
    """``log2(1 + 2**x)`` without overflow."""
    return np.logaddexp2(0.0, x)


def _stages(n, *params):
    if n < 0:
        raise ConfigurationError("horizon n must be nonnegative")
    out = []
    for p in params:
        a = np.asarray(p, dtype=float)
        if a.ndim == 0:
            a = np.full(n + 1, float(a))
        elif a.shape != (n + 1,):
            raise ConfigurationError(f"per-stage parameter has shape {a.shape}, expected ({n + 1},)")
        if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
            raise ConfigurationError("channel parameters must lie in [0, 1]")
        out.append(a)
    return out


# --------------------------------------------------------------------------
# Parameter sets and channel constructors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BumcoParams:
    alpha: object
    beta: object
    gamma: object
    delta: object

    def stages(self, n):
        a, b, g, d = _stages(n, self.alpha, self.beta, self.gamma, self.delta)
        if np.any(a == g) or np.any(b == d):
            raise ConfigurationError("BUMCO requires alpha != gamma and beta != delta")
        return a, b, g, d

    def kernel(self, n) -> ChannelKernel:
        a, b, g, d = _stages(n, self.alpha, self.beta, self.gamma, self.delta)
        q = np.empty((n + 1, 2, 2, 2))
        q[:, 0, 0, 0], q[:, 1, 0, 0], q[:, 0, 1, 0], q[:, 1, 1, 0] = a, b, g, d
        q[..., 1] = 1 - q[..., 0]
        return ChannelKernel(q, 1)

    def is_time_invariant(self):
        return all(np.ndim(p) == 0 for p in (self.alpha, self.beta, self.gamma, self.delta))


@dataclass(frozen=True)
class BeumcoParams:
    alpha: object
    gamma: object
    beta: object

    def stages(self, n):
        return _stages(n, self.alpha, self.gamma, self.beta)

    def kernel(self, n) -> ChannelKernel:
        a, g, b = self.stages(n)
        keep = np.stack([a, g, b], axis=1)          # by previous output 0, e, 1
        q = np.zeros((n + 1, 3, 2, 3))
        q[:, :, 0, 0] = keep
        q[:, :, 1, 2] = keep
        q[:, :, :, 1] = (1 - keep)[:, :, None]
        return ChannelKernel(q, 1, FiniteAlphabet.binary(), FiniteAlphabet((0, "e", 1)))


@dataclass(frozen=True)
class BstmcoParams:
    alpha: object
    beta: object
    gamma: object
    delta: object

    def stages(self, n):
        a, b, g, d = _stages(n, self.alpha, self.beta, self.gamma, self.delta)
        if np.any(a == b) or np.any(g == d):
            raise ConfigurationError("BSTMCO requires alpha != beta and gamma != delta")
        return a, b, g, d

    def kernel(self, n) -> ChannelKernel:
        a, b, g, d = _stages(n, self.alpha, self.beta, self.gamma, self.delta)
        q = np.empty((n + 1, 4, 2, 2))
        # (y_{t-1}, y_{t-2}) -> q(0 | ., x=0), q(0 | ., x=1)
        table = {(0, 0): (a, b), (0, 1): (g, d), (1, 0): (1 - d, 1 - g), (1, 1): (1 - b, 1 - a)}
        for (y1, y2), (q0, q1) in table.items():
            w = bstmco_word(y1, y2)
            q[:, w, 0, 0], q[:, w, 1, 0] = q0, q1
        q[..., 1] = 1 - q[..., 0]
        return ChannelKernel(q, 2)


def bstmco_word(y1: int, y2: int) -> int:
    """Stored index of the word with ``y_{t-1} = y1`` and ``y_{t-2} = y2``."""
    return word_index((y2, y1), 2)


def bumco(alpha, beta, gamma, delta, n: int) -> ChannelKernel:
    return BumcoParams(alpha, beta, gamma, delta).kernel(n)


def beumco(alpha, gamma, beta, n: int) -> ChannelKernel:
    return BeumcoParams(alpha, gamma, beta).kernel(n)


def bstmco(alpha, beta, gamma, delta, n: int) -> ChannelKernel:
    return BstmcoParams(alpha, beta, gamma, delta).kernel(n)


def post_params(alpha, beta) -> BumcoParams:
    return BumcoParams(alpha, 1 - beta, beta, 1 - alpha)


def bssc_params(alpha, beta) -> BumcoParams:
    return BumcoParams(alpha, beta, 1 - beta, 1 - alpha)


def bsc_params(p) -> BumcoParams:
    """Memoryless binary symmetric channel with crossover ``p``."""
    return BumcoParams(1 - p, 1 - p, p, p)


def bec_params(eps) -> BeumcoParams:
    """Memoryless binary erasure channel with erasure probability ``eps``."""
    return BeumcoParams(1 - eps, 1 - eps, 1 - eps)


def post(alpha, beta, n: int) -> ChannelKernel:
    return post_params(alpha, beta).kernel(n)


def bssc(alpha, beta, n: int) -> ChannelKernel:
    return bssc_params(alpha, beta).kernel(n)


def bsc(p, n: int) -> ChannelKernel:
    return bsc_params(p).kernel(n)


def bec(eps, n: int) -> ChannelKernel:
    return bec_params(eps).kernel(n)


def match_cost(n: int) -> CostFunction:
    """Unit cost whenever the input repeats the previous output: ``gamma(x, y') = [x == y']``."""
    return CostFunction.time_invariant(np.eye(2), n, 1, 2)


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------


@dataclass
class SteadyState:
    delta_inf: object               # float, or (delta1, delta2) for BEUMCO
    pi_inf: np.ndarray              # (W, X)
    nu_inf_kernel: np.ndarray       # (W, Y)
    nu_inf_stationary: np.ndarray   # (W,)
    capacity: float
    kappa: float | None = None
    fixed_point_residual: float = 0.0
    forward_gap: float = 0.0
    stationarity_residual: float = 0.0

    def to_dict(self):
        d = self.delta_inf
        out = {"delta_inf": list(d) if isinstance(d, tuple) else d,
               "pi_inf": self.pi_inf.tolist(), "nu_inf_kernel": self.nu_inf_kernel.tolist(),
               "nu_inf_stationary": self.nu_inf_stationary.tolist(), "capacity": self.capacity}
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


@dataclass
class ClosedFormSolution:
    channel: ChannelKernel
    policy: InputPolicy
    output: OutputKernel
    deltas: np.ndarray          # (n+2,) or (n+2, 2); last row is the terminal zero
    values: np.ndarray          # (n+2, W), Lagrangian values when s > 0
    mu: InitialCondition
    s: float = 0.0
    cost: CostFunction | None = None
    delta_orientation: str = ""
    steady: SteadyState | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.policy.n

    @property
    def lagrangian(self) -> float:
        return float(self.values[0] @ self.mu.mu)

    @property
    def achieved_cost(self) -> float | None:
        if self.cost is None:
            return None
        return expected_cost(self.channel, self.policy, self.cost, self.mu)

    @property
    def kappa(self) -> float | None:
        return self.achieved_cost

    @property
    def ftfi_value(self) -> float:
        """``sum_w K_0(w) mu(w) + s (n+1) kappa`` with kappa the achieved cost."""
        if self.cost is None or not self.s:
            return self.lagrangian
        return self.lagrangian + self.s * (self.n + 1) * self.achieved_cost

    @property
    def per_unit(self) -> float:
        return self.ftfi_value / (self.n + 1)

    @property
    def directed_information(self) -> float:
        return directed_information(self.channel, self.policy, self.mu)

    def stage_changes(self) -> np.ndarray:
        """``d[k]`` = sup-norm change of (pi, nu) between stages ``n-k`` and ``n-k+1``, k >= 1."""
        pi, nu = self.policy.pi, self.output.nu
        dp = np.abs(np.diff(pi, axis=0)).reshape(self.n, -1).max(1) if self.n else np.zeros(0)
        dn = np.abs(np.diff(nu, axis=0)).reshape(self.n, -1).max(1) if self.n else np.zeros(0)
        d = np.maximum(dp, dn)[::-1]
        return np.concatenate([[np.inf], d])

    def converged_at_stage(self, tol: float) -> int | None:
        """Stages back from the horizon at which the (pi, nu) change first drops below ``tol``."""
        d = self.stage_changes()
        hit = np.nonzero(d < tol)[0]
        return int(hit[0]) if hit.size else None


def _check_regime(name, p):
    if np.any(p < -REGIME_SLACK) or np.any(p > 1 + REGIME_SLACK):
        t = int(np.argmax((p < -REGIME_SLACK) | (p > 1 + REGIME_SLACK)))
        raise RegimeError(f"{name} = {float(p.flat[t]):.6g} leaves [0, 1]; closed form is not valid"
                          " here, use fbcap.dp.solve_ftfi")
    return np.clip(p, 0.0, 1.0)


def _initial(mu, J, ny):
    if isinstance(mu, InitialCondition):
        return mu
    if isinstance(mu, (int, np.integer, tuple)):
        return InitialCondition.point(mu, J, ny)
    return InitialCondition(mu, J, ny)


# --------------------------------------------------------------------------
# BUMCO
# --------------------------------------------------------------------------


def _bumco_mu(a, b, g, d, s):
    mu0 = (H(g) - H(a) - s) / (g - a)
    mu1 = (H(b) - H(d) - s) / (b - d)
    return mu0, mu1


def _bumco_step(a, b, g, d, s, delta):
    """One backward step: returns (new delta, K(0) - K_next(0), K(1) - K_next(0))."""
    mu0, mu1 = _bumco_mu(a, b, g, d, s)
    k0 = mu0 * (a - 1) + _log1p2(mu0 + delta) - H(a) - s
    k1 = mu1 * (b - 1) + _log1p2(mu1 + delta) - H(b)
    return k1 - k0, k0, k1


def _bumco_backward(p: BumcoParams, n, s, mu, with_cost):
    a, b, g, d = p.stages(n)
    T = n + 1
    delta = np.zeros(T + 1)
    K = np.zeros((T + 1, 2))
    pi = np.empty((T, 2, 2))
    nu = np.empty((T, 2, 2))
    for t in range(n, -1, -1):
        mu0, mu1 = _bumco_mu(a[t], b[t], g[t], d[t], s)
        nu00 = 1.0 / (1.0 + np.exp2(mu0 + delta[t + 1]))
        nu01 = 1.0 / (1.0 + np.exp2(mu1 + delta[t + 1]))
        p00 = _check_regime(f"pi_{t}(0|0)", np.array((nu00 - g[t]) / (a[t] - g[t])))
        p01 = _check_regime(f"pi_{t}(0|1)", np.array((nu01 - d[t]) / (b[t] - d[t])))
        pi[t] = [[p00, 1 - p00], [p01, 1 - p01]]
        nu[t] = [[nu00, 1 - nu00], [nu01, 1 - nu01]]
        delta[t], k0, k1 = _bumco_step(a[t], b[t], g[t], d[t], s, delta[t + 1])
        K[t] = [K[t + 1, 0] + k0, K[t + 1, 0] + k1]
    ch = p.kernel(n)
    cost = match_cost(n) if with_cost else None
    return ClosedFormSolution(
        ch, InputPolicy(pi, 1, 2), OutputKernel(nu, 1), delta, K, _initial(mu, 1, 2), s, cost,
        "K(1)-K(0)" if with_cost else "C(1)-C(0)")


def bumco_solve(p: BumcoParams, n: int, mu=1, steady: bool = False) -> ClosedFormSolution:
    sol = _bumco_backward(p, n, 0.0, mu, False)
    if steady:
        sol.steady = bumco_steady_state(p)
    return sol


def bumco_cost_solve(p: BumcoParams, s: float, n: int, mu=1, steady: bool = False) -> ClosedFormSolution:
    """Lagrangian solution for the cost ``gamma(x, y') = [x == y']`` at multiplier ``s``."""
    if s < 0:
        raise ConfigurationError("Lagrange multiplier s must be nonnegative")
    sol = _bumco_backward(p, n, float(s), mu, True)
    if steady:
        sol.steady = bumco_cost_steady_state(p, s)
    return sol


def _stationary_2(nu_kernel):
    """Invariant law of the output chain with ``P(y | y') = nu_kernel[y', y]``."""
    T = nu_kernel.T
    nu01 = nu_kernel[1, 0]
    nu00 = nu_kernel[0, 0]
    v0 = nu01 / (1 - nu00 + nu01)
    v = np.array([v0, 1 - v0])
    check = stationary_distribution(T)
    gap = float(np.max(np.abs(check - v)))
    if gap > 1e-9:
        raise ConsistencyError(f"invariant output law disagrees with power iteration by {gap:.3e}")
    return v, float(np.max(np.abs(T @ v - v)))


def _bumco_steady(p: BumcoParams, s: float, with_cost: bool) -> SteadyState:
    if not p.is_time_invariant():
        raise ConfigurationError("steady state needs time-invariant parameters")
    (a,), (b,), (g,), (d,) = p.stages(0)
    mu0, mu1 = _bumco_mu(a, b, g, d, s)
    A = mu1 * (b - 1) - mu0 * (a - 1) + H(a) - H(b) + s
    l1, l0 = A + mu1, A + mu0
    e1 = np.exp2(l1)
    delta = float(np.log2((e1 - 1) + np.sqrt((1 - e1) ** 2 + np.exp2(l0 + 2))) - mu0 - 1)

    def f(x):
        return _bumco_step(a, b, g, d, s, x)[0]

    residual = abs(f(delta) - delta)
    x = 0.0
    for _ in range(100_000):
        nx = f(x)
        if abs(nx - x) < 1e-12 * max(1.0, abs(x)):
            x = nx
            break
        x = nx
    gap = abs(x - delta)
    if gap > 1e-9:
        raise ConsistencyError(f"closed-form steady difference {delta:.12g} and forward iteration"
                               f" {x:.12g} disagree by {gap:.3e}")
    nu00 = 1.0 / (1.0 + np.exp2(mu0 + delta))
    nu01 = 1.0 / (1.0 + np.exp2(mu1 + delta))
    p00 = float(_check_regime("pi(0|0)", np.array((nu00 - g) / (a - g))))
    p01 = float(_check_regime("pi(0|1)", np.array((nu01 - d) / (b - d))))
    pi = np.array([[p00, 1 - p00], [p01, 1 - p01]])
    kern = np.array([[nu00, 1 - nu00], [nu01, 1 - nu01]])
    v, stat_res = _stationary_2(kern)
    xi0, xi1 = v[0] * p00, v[1] * p01
    cap = (v[0] * (H(nu00) - H(g)) + v[1] * (H(nu01) - H(d))
           + xi0 * (H(g) - H(a)) + xi1 * (H(d) - H(b)))
    kappa = float(xi0 + v[1] * pi[1, 1]) if with_cost else None
    return SteadyState(delta, pi, kern, v, float(cap), kappa, float(residual), float(gap), stat_res)


def bumco_steady_state(p: BumcoParams) -> SteadyState:
    """Steady-state difference, policy, invariant output law and ergodic capacity."""
    return _bumco_steady(p, 0.0, False)


def bumco_cost_steady_state(p: BumcoParams, s: float) -> SteadyState:
    """As ``bumco_steady_state`` at multiplier ``s``; ``capacity`` is C(kappa) and ``kappa`` the cost."""
    if s < 0:
        raise ConfigurationError("Lagrange multiplier s must be nonnegative")
    return _bumco_steady(p, float(s), True)


# --------------------------------------------------------------------------
# BEUMCO
# --------------------------------------------------------------------------


def beumco_solve(p: BeumcoParams, n: int, mu=0, steady: bool = False) -> ClosedFormSolution:
    """``mu`` indexes the previous output in the order (0, e, 1)."""
    a, g, b = p.stages(n)
    T = n + 1
    d1 = np.zeros(T + 1)
    d2 = np.zeros(T + 1)
    C = np.zeros((T + 1, 3))
    pi = np.empty((T, 3, 2))
    nu = np.empty((T, 3, 3))
    for t in range(n, -1, -1):
        p0 = 1.0 / (1.0 + np.exp2(-d1[t + 1]))
        pi[t] = [p0, 1 - p0]
        keep = np.array([a[t], g[t], b[t]])
        nu[t, :, 0] = p0 * keep
        nu[t, :, 1] = 1 - keep
        nu[t, :, 2] = (1 - p0) * keep
        L = _log1p2(d1[t + 1])
        G = d2[t + 1] + L
        d1[t] = (a[t] - b[t]) * G
        d2[t] = (b[t] - g[t]) * G
        C[t] = keep * (C[t + 1, 2] + L) + (1 - keep) * C[t + 1, 1]
    sol = ClosedFormSolution(
        p.kernel(n), InputPolicy(pi, 1, 3), OutputKernel(nu, 1), np.stack([d1, d2], 1), C,
        _initial(mu, 1, 3), delta_orientation="(C(0)-C(1), C(1)-C(e))")
    if steady:
        sol.steady = beumco_steady_state(p)
    return sol


def beumco_steady_state(p: BeumcoParams) -> SteadyState:
    (a,), (g,), (b,) = p.stages(0)
    den = 1 - (b - g)
    if den <= 0:
        raise RegimeError("BEUMCO steady state undefined when beta - gamma = 1")
    k = (a - b) / den

    def f(x):
        return x - k * _log1p2(x)

    lo, hi = -32.0, 32.0
    if f(lo) * f(hi) > 0:
        raise RegimeError(f"no steady-state root in [{lo}, {hi}] for BEUMCO({a}, {g}, {b})")
    d1 = brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    L = _log1p2(d1)
    d2 = (b - g) * L / den
    residual = abs(f(d1))
    # forward iteration of the coupled recursion as a cross-check
    x1 = x2 = 0.0
    for _ in range(100_000):
        G = x2 + _log1p2(x1)
        n1, n2 = (a - b) * G, (b - g) * G
        done = max(abs(n1 - x1), abs(n2 - x2)) < 1e-13
        x1, x2 = n1, n2
        if done:
            break
    gap = max(abs(x1 - d1), abs(x2 - d2))
    if gap > 1e-9:
        raise ConsistencyError(f"BEUMCO steady root and forward iteration disagree by {gap:.3e}")
    p0 = 1.0 / (1.0 + np.exp2(-d1))
    keep = np.array([a, g, b])
    kern = np.stack([p0 * keep, 1 - keep, (1 - p0) * keep], axis=1)
    Tm = kern.T
    # null vector of (T - I) with the normalization row
    A = np.vstack([Tm - np.eye(3), np.ones(3)])
    v = np.linalg.lstsq(A, np.array([0, 0, 0, 1.0]), rcond=None)[0]
    check = stationary_distribution(Tm)
    if np.max(np.abs(check - v)) > 1e-9:
        raise ConsistencyError("BEUMCO invariant law disagrees with power iteration")
    cap = (1 - v[1]) * L - v[0] * d1
    pi = np.array([[p0, 1 - p0]] * 3)
    return SteadyState((float(d1), float(d2)), pi, kern, v, float(cap), None, float(residual),
                       float(gap), float(np.max(np.abs(Tm @ v - v))))


# --------------------------------------------------------------------------
# BSTMCO
# --------------------------------------------------------------------------


def bstmco_solve(p: BstmcoParams, n: int, mu=None) -> ClosedFormSolution:
    """``mu`` is a distribution over stored two-symbol words, or a stored word index."""
    a, b, g, d = p.stages(n)
    T = n + 1
    w00, w01, w10, w11 = (bstmco_word(*yy) for yy in ((0, 0), (0, 1), (1, 0), (1, 1)))
    delta = np.zeros(T + 1)
    C = np.zeros((T + 1, 4))
    pi = np.empty((T, 4, 2))
    nu = np.empty((T, 4, 2))
    for t in range(n, -1, -1):
        mu0 = (H(b[t]) - H(a[t])) / (b[t] - a[t])
        mu1 = (H(d[t]) - H(g[t])) / (d[t] - g[t])
        x0, x1 = mu0 + delta[t + 1], mu1 + delta[t + 1]
        n00 = 1.0 / (1.0 + np.exp2(x0))
        n01 = 1.0 / (1.0 + np.exp2(x1))
        p00 = float(_check_regime(f"pi_{t}(0|0,0)", np.array((n00 - b[t]) / (a[t] - b[t]))))
        p01 = float(_check_regime(f"pi_{t}(0|0,1)", np.array((n01 - d[t]) / (g[t] - d[t]))))
        pi[t, w00] = [p00, 1 - p00]
        pi[t, w11] = [1 - p00, p00]
        pi[t, w01] = [p01, 1 - p01]
        pi[t, w10] = [1 - p01, p01]
        nu[t, w00] = [n00, 1 - n00]
        nu[t, w11] = [1 - n00, n00]
        nu[t, w01] = [n01, 1 - n01]
        nu[t, w10] = [1 - n01, n01]
        c00 = mu0 * (a[t] - 1) + C[t + 1, w00] + _log1p2(x0) - H(a[t])
        c01 = mu1 * (g[t] - 1) + C[t + 1, w00] + _log1p2(x1) - H(g[t])
        C[t, [w00, w11]] = c00
        C[t, [w01, w10]] = c01
        delta[t] = c01 - c00
    if mu is None:
        mu = InitialCondition.uniform(2, 2)
    return ClosedFormSolution(p.kernel(n), InputPolicy(pi, 2, 2), OutputKernel(nu, 2), delta, C,
                              _initial(mu, 2, 2), delta_orientation="C(0,1)-C(0,0)")
