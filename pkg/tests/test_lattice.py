import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwdecay.lattice import (
    WeightOverflowError,
    build_box,
    ceil_b,
    exp_weight,
    lambda_weight,
    lambda_weight_truncated,
    shell_projector,
    translation,
)


@pytest.mark.parametrize("d, L, sites, dim", [(2, 5, 25, 100), (1, 3, 3, 6), (3, 3, 27, 162)])
def test_box_sizes(d, L, sites, dim):
    box = build_box(d, L)
    assert box.n_sites == sites
    assert box.dim == dim
    assert box.internal_dim == 2 * d


@pytest.mark.parametrize("L", [4, 1, 2, 0, -3])
def test_box_rejects_even_or_small(L):
    with pytest.raises(ValueError):
        build_box(2, L)


def test_site_index_is_bijection():
    box = build_box(2, 7)
    idx = box.site_index(box.coords)
    assert sorted(idx.tolist()) == list(range(box.n_sites))
    assert box.coords[box.origin].tolist() == [0, 0]


def test_wraparound_preserves_radius():
    box = build_box(2, 9)
    for axis in range(2):
        for step in (1, -1):
            nb = box.neighbor_index(axis, step)
            assert np.max(np.abs(box.radii[nb] - box.radii)) <= 1.0 + 1e-15


def test_shell_projector_origin_only():
    box = build_box(2, 5)
    w = shell_projector(box, 0, 1)
    assert w.values.sum() == 1
    assert w.values[box.origin] == 1


def test_shell_projector_unit_shell_by_enumeration():
    box = build_box(2, 5)
    expected = {(x, y) for x, y in itertools.product(range(-2, 3), repeat=2) if 1 <= math.hypot(x, y) < 2}
    w = shell_projector(box, 1, 2)
    got = {tuple(c) for c in box.coords[w.values == 1]}
    assert got == expected
    # Euclidean norm: the diagonal neighbours (|x| = sqrt 2) sit in the same shell
    assert len(got) == 8


def test_shell_projector_full_range_is_identity():
    box = build_box(2, 5)
    assert np.all(shell_projector(box, 0, math.inf).values == 1)
    assert shell_projector(box, 0, 1).is_projection()


def test_shell_projector_rejects_bad_interval():
    box = build_box(1, 3)
    with pytest.raises(ValueError):
        shell_projector(box, 2, 1)
    with pytest.raises(ValueError):
        shell_projector(box, -1, 1)


@pytest.mark.parametrize("x, b, expected", [(2.3, 1, 3), (2.0, 1, 2), (1.2, 0.5, 1.5), (0.3, 0.1, 0.3), (1e-9, 1, 1)])
def test_ceil_b(x, b, expected):
    assert ceil_b(x, b) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("x, b", [(0, 1), (-1, 1), (1, 0), (1, -2)])
def test_ceil_b_rejects_nonpositive(x, b):
    with pytest.raises(ValueError):
        ceil_b(x, b)


@given(st.floats(1e-6, 1e3), st.floats(1e-3, 10))
def test_ceil_b_properties(x, b):
    c = ceil_b(x, b)
    assert c >= x
    assert c - b < x  # smallest such multiple
    assert ceil_b(c, b) == c


def test_lambda_weight_values():
    box = build_box(2, 5)
    w = lambda_weight(box, 0.3, 1.0)
    assert w.values[box.origin] == pytest.approx(0.3)
    unit = box.site_index([1, 0])
    assert w.values[unit] == pytest.approx(0.6)


def test_truncated_plateau():
    box = build_box(2, 13)
    w = lambda_weight_truncated(box, 0.3, 1.0, 2)
    far = box.site_index([4, 4])  # |x| = 5.66
    assert w.values[far] == pytest.approx(0.6)


def test_truncated_equals_full_when_plateau_unreached():
    box = build_box(2, 9)
    N = math.ceil(box.max_radius / 1.0)
    assert np.array_equal(lambda_weight_truncated(box, 0.2, 1.0, N).values, lambda_weight(box, 0.2, 1.0).values)


def test_truncated_n1_is_constant():
    box = build_box(2, 7)
    assert np.allclose(lambda_weight_truncated(box, 0.4, 1.5, 1).values, 0.4 * 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.sampled_from([3, 5, 7]), st.floats(0.01, 2.0), st.floats(0.2, 3.0))
def test_step_weight_properties(d, L, delta, b):
    box = build_box(d, L)
    r = box.radii
    lam = lambda_weight(box, delta, b).values
    # sandwich: delta r <= Lambda(r) <= delta (r + b)
    assert np.all(lam >= delta * r - 1e-12)
    assert np.all(lam <= delta * (r + b) + 1e-12)
    prev = None
    for N in range(1, 8):
        cur = lambda_weight_truncated(box, delta, b, N).values
        assert np.all(cur <= lam + 1e-15)
        if prev is not None:
            assert np.all(cur >= prev)
        prev = cur
    # shells [(n-1)b, nb) partition the box
    n_max = math.ceil(box.max_radius / b) + 1
    total = sum(shell_projector(box, (n - 1) * b, n * b).values for n in range(1, n_max + 1))
    assert np.array_equal(total, np.ones(box.n_sites))


def test_exp_weight_identity_and_inverse():
    box = build_box(2, 9)
    zero = lambda_weight(box, 0.0, 1.0)
    assert np.all(exp_weight(zero).values == 1.0)
    w = lambda_weight_truncated(box, 0.37, 1.0, 4)
    prod = exp_weight(w, +1) * exp_weight(w, -1)
    assert np.max(np.abs(prod.values - 1.0)) <= 1e-12


def test_exp_weight_overflow_guard():
    box = build_box(1, 3)
    from qwdecay.lattice import DiagonalWeight

    w = DiagonalWeight(box, np.array([0.0, 710.0, 1.0]))
    with pytest.raises(WeightOverflowError):
        exp_weight(w)


def test_diagonal_weight_broadcasts_over_internal_space():
    box = build_box(2, 3)
    w = shell_projector(box, 1, 2)
    full = w.full()
    assert full.shape == (box.dim,)
    assert np.array_equal(full.reshape(box.n_sites, 4), np.repeat(w.values[:, None], 4, axis=1))


def test_translation_matches_definition():
    box = build_box(1, 5)
    T = translation(box, 0, 1)
    f = np.arange(box.dim, dtype=np.complex128)
    g = T @ f
    # (T f)(x) = f(x + 1), per component
    for i, x in enumerate(box.coords[:, 0]):
        j = box.site_index([x + 1])
        assert np.array_equal(g[2 * i:2 * i + 2], f[2 * j:2 * j + 2])
