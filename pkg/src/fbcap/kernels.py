"""Finite-alphabet kernels, memory words and directed-information evaluation.

Conventions used throughout the package:

* Logarithms are base 2; every information quantity is in bits.
* A memory word of length ``L`` over an output alphabet of size ``B`` is
  stored most-recent-last, ``(y_{t-L}, ..., y_{t-1})``, and indexed
  lexicographically, so the length-``M`` suffix of a length-``J`` word is
  ``index % B**M`` and appending an output ``y`` maps ``w`` to
  ``(w % B**(L-1)) * B + y``.
* Time-indexed tensors carry the stage as their first axis,
  ``t = 0, ..., n``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import AbsoluteContinuityError, ConfigurationError, DomainError

NORM_TOL = 1e-12


# --------------------------------------------------------------------------
# Alphabets and memory words
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteAlphabet:
    """Ordered set of distinct symbol labels."""

    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ConfigurationError("alphabet must contain at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise ConfigurationError(f"alphabet labels are not unique: {symbols!r}")
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def binary(cls) -> "FiniteAlphabet":
        return cls((0, 1))

    @classmethod
    def of_size(cls, k: int) -> "FiniteAlphabet":
        return cls(tuple(range(k)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, label: Hashable) -> int:
        try:
            return self.symbols.index(label)
        except ValueError:
            raise ConfigurationError(f"{label!r} is not in alphabet {self.symbols!r}") from None

    def label(self, i: int):
        return self.symbols[i]

    def __len__(self):
        return self.size


def num_words(base: int, length: int) -> int:
    return base**length


def word_index(entries: Sequence[int], base: int) -> int:
    idx = 0
    for e in entries:
        if not 0 <= e < base:
            raise ConfigurationError(f"word entry {e} outside alphabet of size {base}")
        idx = idx * base + int(e)
    return idx


def word_entries(index: int, base: int, length: int) -> tuple:
    if not 0 <= index < base**length:
        raise ConfigurationError(f"word index {index} out of range for length {length}")
    out = []
    for _ in range(length):
        index, r = divmod(index, base)
        out.append(r)
    return tuple(reversed(out))


def all_words(base: int, length: int) -> list:
    return [tuple(w) for w in itertools.product(range(base), repeat=length)]


def successor_table(base: int, length: int) -> np.ndarray:
    """``table[w, y]`` is the index of the word obtained by appending ``y`` to ``w``."""
    W = base**length
    if length == 0:
        return np.zeros((1, base), dtype=np.intp)
    w = np.arange(W)[:, None]
    y = np.arange(base)[None, :]
    return (w % base ** (length - 1)) * base + y


def suffix_index(base: int, length: int, sub: int) -> np.ndarray:
    """Map every length-``length`` word index to the index of its last ``sub`` entries."""
    if sub > length:
        raise ConfigurationError(f"suffix length {sub} exceeds word length {length}")
    return np.arange(base**length) % base**sub


@dataclass(frozen=True)
class MemoryWord:
    """Fixed-length tuple of output-symbol indices, most recent last."""

    entries: tuple
    base: int

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        for e in entries:
            if not 0 <= e < self.base:
                raise ConfigurationError(f"word entry {e} outside alphabet of size {self.base}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_index(cls, index: int, base: int, length: int) -> "MemoryWord":
        return cls(word_entries(index, base, length), base)

    @property
    def length(self) -> int:
        return len(self.entries)

    @property
    def index(self) -> int:
        return word_index(self.entries, self.base)

    def suffix(self, m: int) -> "MemoryWord":
        if m > self.length:
            raise ConfigurationError(f"suffix length {m} exceeds word length {self.length}")
        return MemoryWord(self.entries[self.length - m:] if m else (), self.base)

    def shift(self, y: int) -> "MemoryWord":
        if self.length == 0:
            return self
        return MemoryWord(self.entries[1:] + (y,), self.base)


# --------------------------------------------------------------------------
# Probability containers
# --------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


def _check_stochastic(arr: np.ndarray, axis: int, what: str, normalize: bool) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{what} contains non-finite entries")
    if np.any(arr < -NORM_TOL) or np.any(arr > 1 + NORM_TOL):
        raise ConfigurationError(f"{what} has entries outside [0, 1]")
    sums = arr.sum(axis=axis, keepdims=True)
    if normalize:
        if np.any(sums <= 0):
            raise ConfigurationError(f"{what} has an all-zero column; cannot normalize")
        return np.clip(arr, 0.0, None) / sums
    err = np.max(np.abs(sums - 1.0)) if arr.size else 0.0
    if err > NORM_TOL:
        raise ConfigurationError(f"{what} columns do not sum to 1 (max deviation {err:.3e})")
    return np.clip(arr, 0.0, 1.0)


class ChannelKernel:
    """Time-varying class-A channel ``q_t(y | y_{t-M}^{t-1}, x)``.

    ``q`` has shape ``(n+1, |Y|**M, |X|, |Y|)``.
    """

    def __init__(self, q, memory_order: int, input_alphabet=None, output_alphabet=None,
                 normalize: bool = False):
        q = np.asarray(q, dtype=float)
        if q.ndim != 4:
            raise ConfigurationError(f"channel tensor must be 4-D [t][w][x][y], got shape {q.shape}")
        if memory_order < 0:
            raise ConfigurationError("memory order must be nonnegative")
        T, W, X, Y = q.shape
        if T < 1:
            raise ConfigurationError("channel needs at least one stage")
        self.input_alphabet = input_alphabet or FiniteAlphabet.of_size(X)
        self.output_alphabet = output_alphabet or FiniteAlphabet.of_size(Y)
        if self.input_alphabet.size != X or self.output_alphabet.size != Y:
            raise ConfigurationError("alphabet sizes do not match the channel tensor")
        if W != Y**memory_order:
            raise ConfigurationError(
                f"channel has {W} memory words but |Y|**M = {Y ** memory_order}")
        self.M = memory_order
        self.q = _frozen(_check_stochastic(q, -1, "channel kernel", normalize))

    @classmethod
    def time_invariant(cls, q_stage, n: int, memory_order: int, **kw) -> "ChannelKernel":
        q_stage = np.asarray(q_stage, dtype=float)
        return cls(np.broadcast_to(q_stage, (n + 1,) + q_stage.shape), memory_order, **kw)

    @property
    def n(self) -> int:
        return self.q.shape[0] - 1

    @property
    def horizon(self) -> int:
        return self.q.shape[0]

    @property
    def nx(self) -> int:
        return self.q.shape[2]

    @property
    def ny(self) -> int:
        return self.q.shape[3]

    def expanded(self, J: int) -> np.ndarray:
        """Channel re-indexed by length-``J`` words, shape ``(n+1, |Y|**J, |X|, |Y|)``."""
        if J < self.M:
            raise ConfigurationError(f"policy memory J={J} is shorter than channel memory M={self.M}")
        return self.q[:, suffix_index(self.ny, J, self.M)]

    def truncated(self, n: int) -> "ChannelKernel":
        """The first ``n+1`` stages of this channel."""
        if not 0 <= n <= self.n:
            raise ConfigurationError(f"cannot truncate horizon {self.n} to {n}")
        return ChannelKernel(self.q[: n + 1], self.M, self.input_alphabet, self.output_alphabet)

    def relabel_inputs(self, perm) -> "ChannelKernel":
        """Channel seen through the input relabeling ``new x = perm[old x]``."""
        inv = np.argsort(perm)
        return ChannelKernel(self.q[:, :, inv, :], self.M)

    def __repr__(self):
        return f"ChannelKernel(n={self.n}, M={self.M}, |X|={self.nx}, |Y|={self.ny})"


class InputPolicy:
    """Channel input kernel ``pi_t(x | y_{t-J}^{t-1})``, shape ``(n+1, |Y|**J, |X|)``."""

    def __init__(self, pi, memory_order: int, ny: int, normalize: bool = False):
        pi = np.asarray(pi, dtype=float)
        if pi.ndim != 3:
            raise ConfigurationError(f"policy tensor must be 3-D [t][w][x], got shape {pi.shape}")
        if pi.shape[1] != ny**memory_order:
            raise ConfigurationError(
                f"policy has {pi.shape[1]} memory words but |Y|**J = {ny ** memory_order}")
        self.J = memory_order
        self.ny = ny
        self.pi = _frozen(_check_stochastic(pi, -1, "input policy", normalize))

    @classmethod
    def uniform(cls, n: int, memory_order: int, nx: int, ny: int) -> "InputPolicy":
        return cls(np.full((n + 1, ny**memory_order, nx), 1.0 / nx), memory_order, ny)

    @property
    def n(self) -> int:
        return self.pi.shape[0] - 1

    @property
    def nx(self) -> int:
        return self.pi.shape[2]

    def __repr__(self):
        return f"InputPolicy(n={self.n}, J={self.J}, |X|={self.nx})"


class OutputKernel:
    """Induced output kernel ``nu_t(y | y_{t-J}^{t-1})``, shape ``(n+1, |Y|**J, |Y|)``."""

    def __init__(self, nu, memory_order: int, normalize: bool = False):
        nu = np.asarray(nu, dtype=float)
        if nu.ndim != 3 or nu.shape[1] != nu.shape[2] ** memory_order:
            raise ConfigurationError(f"output kernel shape {nu.shape} inconsistent with J={memory_order}")
        self.J = memory_order
        self.nu = _frozen(_check_stochastic(nu, -1, "output kernel", normalize))

    @property
    def n(self) -> int:
        return self.nu.shape[0] - 1

    def __repr__(self):
        return f"OutputKernel(n={self.n}, J={self.J}, |Y|={self.nu.shape[2]})"


class CostFunction:
    """Nonnegative per-letter cost ``gamma_t(x, y_{t-N}^{t-1})``, shape ``(n+1, |Y|**N, |X|)``."""

    def __init__(self, gamma, memory_order: int, ny: int):
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim != 3 or gamma.shape[1] != ny**memory_order:
            raise ConfigurationError(f"cost tensor shape {gamma.shape} inconsistent with N={memory_order}")
        if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
            raise ConfigurationError("cost entries must be finite and nonnegative")
        self.N = memory_order
        self.ny = ny
        self.gamma = _frozen(gamma)

    @classmethod
    def constant(cls, value: float, n: int, nx: int, ny: int) -> "CostFunction":
        return cls(np.full((n + 1, 1, nx), float(value)), 0, ny)

    @classmethod
    def time_invariant(cls, gamma_stage, n: int, memory_order: int, ny: int) -> "CostFunction":
        g = np.asarray(gamma_stage, dtype=float)
        return cls(np.broadcast_to(g, (n + 1,) + g.shape), memory_order, ny)

    @property
    def n(self) -> int:
        return self.gamma.shape[0] - 1

    def expanded(self, J: int) -> np.ndarray:
        if J < self.N:
            raise ConfigurationError(f"policy memory J={J} is shorter than cost memory N={self.N}")
        return self.gamma[:, suffix_index(self.ny, J, self.N)]

    def relabel_inputs(self, perm) -> "CostFunction":
        inv = np.argsort(perm)
        return CostFunction(self.gamma[:, :, inv], self.N, self.ny)


class InitialCondition:
    """Distribution of the length-``J`` output word at time -1."""

    def __init__(self, mu, memory_order: int, ny: int, normalize: bool = False):
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.size != ny**memory_order:
            raise ConfigurationError(
                f"initial distribution has {mu.size} entries, expected |Y|**J = {ny ** memory_order}")
        self.J = memory_order
        self.ny = ny
        self.mu = _frozen(_check_stochastic(mu, 0, "initial distribution", normalize))

    @classmethod
    def point(cls, word, memory_order: int, ny: int) -> "InitialCondition":
        """Point mass on ``word`` (an index or a tuple of output indices)."""
        idx = word if isinstance(word, (int, np.integer)) else word_index(word, ny)
        mu = np.zeros(ny**memory_order)
        mu[idx] = 1.0
        return cls(mu, memory_order, ny)

    @classmethod
    def uniform(cls, memory_order: int, ny: int) -> "InitialCondition":
        W = ny**memory_order
        return cls(np.full(W, 1.0 / W), memory_order, ny)

    def __repr__(self):
        return f"InitialCondition(J={self.J}, mu={self.mu.tolist()})"


# --------------------------------------------------------------------------
# Information measures
# --------------------------------------------------------------------------


def binary_entropy(p):
    """Binary entropy in bits, with ``H(0) = H(1) = 0``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"binary entropy argument outside [0, 1]: {p!r}")
    out = np.zeros_like(arr)
    inner = (arr > 0) & (arr < 1)
    a = arr[inner]
    out[inner] = -a * np.log2(a) - (1 - a) * np.log2(1 - a)
    return float(out) if out.ndim == 0 else out


def xlog2y(x, y):
    """Elementwise ``x * log2(y)`` with the convention ``0 * log(anything) = 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pos, x * np.log2(np.where(pos, y, 1.0)), 0.0)


def _check_pair(q: ChannelKernel, pi: InputPolicy):
    if q.horizon != pi.pi.shape[0]:
        raise ConfigurationError(f"horizon mismatch: channel {q.horizon} stages, policy {pi.pi.shape[0]}")
    if q.nx != pi.nx or q.ny != pi.ny:
        raise ConfigurationError("channel and policy alphabets differ")
    if pi.J < q.M:
        raise ConfigurationError(f"policy memory J={pi.J} is shorter than channel memory M={q.M}")


def induce_output_kernel(q: ChannelKernel, pi: InputPolicy) -> OutputKernel:
    """``nu_t(y|w) = sum_x q_t(y | suffix_M(w), x) pi_t(x|w)``."""
    _check_pair(q, pi)
    qJ = q.expanded(pi.J)
    nu = np.einsum("twx,twxy->twy", pi.pi, qJ)
    nu /= nu.sum(axis=-1, keepdims=True)
    return OutputKernel(nu, pi.J)


def word_distributions(q: ChannelKernel, pi: InputPolicy, mu: InitialCondition,
                       nu: OutputKernel | None = None) -> np.ndarray:
    """Marginal law of the length-``J`` output word entering each stage.

    Row ``t`` is the distribution of ``(Y_{t-J}, ..., Y_{t-1})``; row ``n+1``
    is the law after the last stage.
    """
    _check_pair(q, pi)
    if mu.J != pi.J:
        raise ConfigurationError(f"initial distribution is over length-{mu.J} words, policy uses J={pi.J}")
    if nu is None:
        nu = induce_output_kernel(q, pi)
    succ = successor_table(q.ny, pi.J)
    T, W = pi.pi.shape[:2]
    p = np.empty((T + 1, W))
    p[0] = mu.mu
    for t in range(T):
        nxt = np.zeros(W)
        np.add.at(nxt, succ.ravel(), (p[t][:, None] * nu.nu[t]).ravel())
        p[t + 1] = nxt
    return p


def directed_information_terms(q: ChannelKernel, pi: InputPolicy, mu: InitialCondition,
                               nu: OutputKernel | None = None) -> np.ndarray:
    """Per-stage terms ``E log2 q_t / nu_t`` whose sum is the directed information."""
    _check_pair(q, pi)
    induced = induce_output_kernel(q, pi)
    supplied = nu is not None
    nu = nu if supplied else induced
    qJ = q.expanded(pi.J)
    p = word_distributions(q, pi, mu, induced)
    joint = p[:-1, :, None, None] * pi.pi[:, :, :, None] * qJ
    nu_b = np.broadcast_to(nu.nu[:, :, None, :], joint.shape)
    if supplied and np.any((joint > 0) & (nu_b <= 0)):
        t, w, x, y = np.argwhere((joint > 0) & (nu_b <= 0))[0]
        raise AbsoluteContinuityError(
            f"nu_{t}({y}|w={w}) = 0 but the joint law of (w, x={x}, y={y}) is positive")
    ratio = np.divide(qJ, nu_b, out=np.ones_like(joint), where=(joint > 0))
    return xlog2y(joint, ratio).sum(axis=(1, 2, 3))


def directed_information(q: ChannelKernel, pi: InputPolicy, mu: InitialCondition,
                         nu: OutputKernel | None = None) -> float:
    """Directed information ``I(X^n -> Y^n)`` in bits, evaluated exactly.

    The word distribution is propagated forward, so the cost is linear in the
    horizon. A caller-supplied ``nu`` replaces the induced output kernel in the
    log-ratio; it must dominate the joint law.
    """
    return float(directed_information_terms(q, pi, mu, nu).sum())


def expected_cost(q: ChannelKernel, pi: InputPolicy, gamma: CostFunction, mu: InitialCondition) -> float:
    """Average per-stage cost ``(1/(n+1)) sum_t E gamma_t(X_t, Y_{t-N}^{t-1})``."""
    _check_pair(q, pi)
    if gamma.gamma.shape[0] != q.horizon:
        raise ConfigurationError("cost horizon differs from channel horizon")
    if gamma.N > pi.J:
        raise ConfigurationError(f"cost memory N={gamma.N} exceeds policy memory J={pi.J}")
    p = word_distributions(q, pi, mu)
    g = gamma.expanded(pi.J)
    total = np.einsum("tw,twx,twx->", p[:-1], pi.pi, g)
    return float(total / q.horizon)
