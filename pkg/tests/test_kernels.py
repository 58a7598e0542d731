import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbcap.closedform import bsc, bumco
from fbcap.errors import AbsoluteContinuityError, ConfigurationError, DomainError
from fbcap.kernels import (ChannelKernel, CostFunction, FiniteAlphabet, InitialCondition,
                           InputPolicy, MemoryWord, OutputKernel, all_words, binary_entropy,
                           directed_information, expected_cost, induce_output_kernel,
                           successor_table, suffix_index, word_entries, word_index)
from fbcap.oracle import exhaustive_directed_info

from conftest import random_channel_tensor, random_policy_tensor


# --- alphabets and words ----------------------------------------------------

def test_alphabet_bijection():
    a = FiniteAlphabet((0, "e", 1))
    assert a.size == 3
    assert [a.index(s) for s in a.symbols] == [0, 1, 2]
    assert a.label(1) == "e"


def test_alphabet_rejects_duplicates_and_empty():
    with pytest.raises(ConfigurationError):
        FiniteAlphabet((0, 0))
    with pytest.raises(ConfigurationError):
        FiniteAlphabet(())


@given(st.integers(2, 4), st.integers(0, 4), st.data())
def test_word_index_roundtrip(base, length, data):
    idx = data.draw(st.integers(0, base**length - 1))
    ent = word_entries(idx, base, length)
    assert len(ent) == length
    assert word_index(ent, base) == idx


def test_words_are_lexicographic():
    assert all_words(2, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [word_index(w, 2) for w in all_words(2, 2)] == [0, 1, 2, 3]


@given(st.integers(2, 3), st.integers(1, 4), st.data())
def test_shift_and_suffix_agree_with_tables(base, length, data):
    idx = data.draw(st.integers(0, base**length - 1))
    y = data.draw(st.integers(0, base - 1))
    m = data.draw(st.integers(0, length))
    w = MemoryWord.from_index(idx, base, length)
    assert w.shift(y).index == successor_table(base, length)[idx, y]
    assert w.shift(y).entries[-1] == y
    assert w.suffix(m).index == suffix_index(base, length, m)[idx]
    assert w.suffix(m).entries == w.entries[length - m:]


def test_empty_word():
    w = MemoryWord((), 2)
    assert w.length == 0 and w.index == 0
    assert w.shift(1) == w
    assert successor_table(2, 0).tolist() == [[0, 0]]


def test_word_entry_validation():
    with pytest.raises(ConfigurationError):
        MemoryWord((0, 2), 2)


# --- containers -------------------------------------------------------------

def test_channel_normalization_enforced():
    q = np.array([[[[0.5, 0.5], [0.3, 0.7]]]])
    ChannelKernel(q, 0)
    bad = q.copy()
    bad[0, 0, 0, 0] += 1e-9
    with pytest.raises(ConfigurationError):
        ChannelKernel(bad, 0)
    ok = ChannelKernel(bad, 0, normalize=True)
    assert np.allclose(ok.q.sum(-1), 1, atol=1e-15)


def test_channel_shape_checks():
    with pytest.raises(ConfigurationError):
        ChannelKernel(np.full((1, 3, 2, 2), 0.5), 1)
    with pytest.raises(ConfigurationError):
        ChannelKernel(np.full((1, 2, 2), 0.5), 0)


def test_containers_are_read_only():
    q = bsc(0.1, 2)
    with pytest.raises(ValueError):
        q.q[0, 0, 0, 0] = 1.0
    pi = InputPolicy.uniform(2, 1, 2, 2)
    with pytest.raises(ValueError):
        pi.pi[0, 0, 0] = 1.0


def test_cost_must_be_nonnegative():
    with pytest.raises(ConfigurationError):
        CostFunction(-np.ones((1, 1, 2)), 0, 2)


def test_initial_condition_point_and_uniform():
    mu = InitialCondition.point((1, 0), 2, 2)
    assert mu.mu.tolist() == [0, 0, 1, 0]
    assert np.isclose(InitialCondition.uniform(2, 3).mu.sum(), 1)
    with pytest.raises(ConfigurationError):
        InitialCondition([0.5, 0.6], 1, 2)


# --- entropy ----------------------------------------------------------------

def test_binary_entropy_examples():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0) == 0.0 and binary_entropy(1) == 0.0
    # 40-digit reference: 0.72192809488736234787...
    assert abs(binary_entropy(0.2) - 0.7219280948873623478703) < 1e-15


@pytest.mark.parametrize("p", [-1e-12, 1.0000001, math.nan])
def test_binary_entropy_domain(p):
    with pytest.raises(DomainError):
        binary_entropy(p)


def test_binary_entropy_vectorized():
    out = binary_entropy(np.array([0.0, 0.5, 0.2]))
    assert out.shape == (3,)
    assert out[1] == 1.0


# --- output kernel ----------------------------------------------------------

def test_induced_kernel_bumco_terminal_stage():
    a, g = 0.9, 0.2
    mu0 = (binary_entropy(g) - binary_entropy(a)) / (g - a)
    nu00 = 1 / (1 + 2**mu0)
    p00 = (1 - g * (1 + 2**mu0)) / ((a - g) * (1 + 2**mu0))
    q = bumco(0.9, 0.1, 0.2, 0.4, 0)
    pi = InputPolicy([[[p00, 1 - p00], [0.5, 0.5]]], 1, 2)
    nu = induce_output_kernel(q, pi)
    assert abs(nu.nu[0, 0, 0] - nu00) < 1e-14


def test_induced_kernel_identity_channel(rng):
    q = bsc(0.0, 3)
    pi = InputPolicy(random_policy_tensor(rng, 3, 1), 1, 2)
    assert np.allclose(induce_output_kernel(q, pi).nu, pi.pi, atol=1e-15)


def test_induced_kernel_bsc_uniform():
    nu = induce_output_kernel(bsc(0.1, 4), InputPolicy.uniform(4, 1, 2, 2))
    assert np.allclose(nu.nu, 0.5, atol=1e-15)


def test_induced_kernel_requires_long_enough_policy():
    q = ChannelKernel(np.full((1, 4, 2, 2), 0.5), 2)
    with pytest.raises(ConfigurationError):
        induce_output_kernel(q, InputPolicy.uniform(0, 1, 2, 2))


def test_induced_kernel_marginal_consistency(rng):
    qt = random_channel_tensor(rng, 3, 1, nx=3, ny=3)
    q = ChannelKernel(qt, 1)
    pi = InputPolicy(random_policy_tensor(rng, 3, 2, nx=3, ny=3), 2, 3)
    nu = induce_output_kernel(q, pi).nu
    qJ = q.expanded(2)
    direct = np.einsum("twx,twxy->twy", pi.pi, qJ)
    assert np.allclose(nu, direct, atol=1e-15)
    assert np.allclose(nu.sum(-1), 1, atol=1e-12)


# --- directed information ---------------------------------------------------

def test_di_noiseless_one_use():
    q = bsc(0.0, 0)
    pi = InputPolicy.uniform(0, 1, 2, 2)
    assert abs(directed_information(q, pi, InitialCondition.point(0, 1, 2)) - 1.0) < 1e-15


@pytest.mark.parametrize("alpha,n", [(0.1, 0), (0.1, 5), (0.25, 20)])
def test_di_memoryless_bsc_uniform(alpha, n):
    q = bsc(alpha, n)
    pi = InputPolicy.uniform(n, 1, 2, 2)
    di = directed_information(q, pi, InitialCondition.point(1, 1, 2))
    assert abs(di - (n + 1) * (1 - binary_entropy(alpha))) < 1e-12


@given(st.integers(0, 1000), st.integers(0, 3), st.integers(0, 2), st.integers(2, 3))
def test_di_nonnegative(seed, n, M, ny):
    rng = np.random.default_rng(seed)
    q = ChannelKernel(rng.dirichlet(np.ones(ny) * 0.5, size=(n + 1, ny**M, 2)), M)
    pi = InputPolicy(random_policy_tensor(rng, n, M, ny=ny), M, ny)
    mu = InitialCondition(rng.dirichlet(np.ones(ny**M)), M, ny)
    assert directed_information(q, pi, mu) >= -1e-12


def test_di_matches_enumeration(rng):
    for _ in range(100):
        n = int(rng.integers(0, 3))
        M = int(rng.integers(0, 2))
        J = M + int(rng.integers(0, 2))
        q = ChannelKernel(rng.dirichlet(np.ones(2) * 0.7, size=(n + 1, 2**M, 2)), M)
        pi = InputPolicy(random_policy_tensor(rng, n, J), J, 2)
        mu = InitialCondition(rng.dirichlet(np.ones(2**J)), J, 2)
        assert abs(directed_information(q, pi, mu) - exhaustive_directed_info(q, pi, mu)) < 1e-10


def test_di_identity_channel_is_input_entropy(rng):
    # with y = x the directed information is H(Y^n | initial word)
    for n in range(3):
        q = bsc(0.0, n)
        pi = InputPolicy(random_policy_tensor(rng, n, 1), 1, 2)
        mu = InitialCondition(rng.dirichlet([1, 1]), 1, 2)
        h = 0.0
        for w0 in range(2):
            for ys in itertools.product(range(2), repeat=n + 1):
                p, prev = mu.mu[w0], w0
                for t, y in enumerate(ys):
                    p *= pi.pi[t, prev, y]
                    prev = y
                if p > 0:
                    h -= p * math.log2(p / mu.mu[w0])
        assert abs(directed_information(q, pi, mu) - h) < 1e-12


def test_di_zero_mass_terms_vanish():
    # deterministic input: q(y|x=1) irrelevant, including zero entries
    q = ChannelKernel([[[[1.0, 0.0], [0.0, 1.0]]]], 0)
    pi = InputPolicy([[[1.0, 0.0]]], 0, 2)
    assert directed_information(q, pi, InitialCondition([1.0], 0, 2)) == 0.0


def test_di_supplied_output_kernel_must_dominate():
    q = bsc(0.1, 1)
    pi = InputPolicy.uniform(1, 1, 2, 2)
    nu = OutputKernel(np.tile([[1.0, 0.0]], (2, 2, 1)), 1)
    with pytest.raises(AbsoluteContinuityError):
        directed_information(q, pi, InitialCondition.point(0, 1, 2), nu=nu)


def test_di_with_supplied_induced_kernel_unchanged(rng):
    q = ChannelKernel(random_channel_tensor(rng, 4, 1), 1)
    pi = InputPolicy(random_policy_tensor(rng, 4, 1), 1, 2)
    mu = InitialCondition.point(0, 1, 2)
    nu = induce_output_kernel(q, pi)
    assert directed_information(q, pi, mu, nu) == directed_information(q, pi, mu)


# --- cost -------------------------------------------------------------------

def test_expected_cost_constants(rng):
    q = ChannelKernel(random_channel_tensor(rng, 5, 1), 1)
    pi = InputPolicy(random_policy_tensor(rng, 5, 1), 1, 2)
    mu = InitialCondition.point(1, 1, 2)
    assert abs(expected_cost(q, pi, CostFunction.constant(1.0, 5, 2, 2), mu) - 1.0) < 1e-14
    assert expected_cost(q, pi, CostFunction.constant(0.0, 5, 2, 2), mu) == 0.0


def test_expected_cost_memory_check():
    q = bsc(0.1, 1)
    pi = InputPolicy.uniform(1, 1, 2, 2)
    gamma = CostFunction(np.ones((2, 4, 2)), 2, 2)
    with pytest.raises(ConfigurationError):
        expected_cost(q, pi, gamma, InitialCondition.point(0, 1, 2))
