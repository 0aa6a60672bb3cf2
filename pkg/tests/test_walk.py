import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import OMEGA, PHI, scan_params
from qwdecay.certify import propagation_bound
from qwdecay.lattice import build_box, shell_projector
from qwdecay.walk import (
    ALGEBRA_TOL,
    CoinSpec,
    ValidationError,
    bloch_symbol,
    build_coin,
    build_shift,
    build_walk,
    reflection,
    unitarity_defect,
    validate_coin_spec,
    validate_shift_params,
)


def random_unit(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_params(rng, d):
    theta = rng.uniform(0, 2 * np.pi, d)
    phase = rng.uniform(0, 2 * np.pi, d)
    return validate_shift_params(np.cos(theta), np.sin(theta) * np.exp(1j * phase))


def test_shift_params_valid_not_in_any_D_l():
    params = validate_shift_params([1, 1], [0, 0])
    assert params.D_l_memberships() == []


def test_shift_params_in_D_1_only():
    params = validate_shift_params([0.8, 1], [0.6, 0])
    assert params.D_l_memberships() == [0]


def test_shift_params_violation_names_leg():
    with pytest.raises(ValidationError, match="j=1"):
        validate_shift_params([0.5, 0], [0.5, 1])


def test_coin_spec_canonical_values():
    report = validate_coin_spec(CoinSpec(PHI, OMEGA), [1, 1])
    assert report.passed
    # a(p) = sum_j p_j (|v_j1|^2 - |v_j2|^2)
    assert report.a_Phi == pytest.approx(0.0, abs=1e-15)
    assert report.a_Omega == pytest.approx((0.7 - 0.1) + (0.1 - 0.1), abs=1e-15)
    assert report.valid_l == [0, 1]
    assert report.sigma1_overlaps[0] == pytest.approx(0.5 * math.sqrt(0.1) + 0.5 * math.sqrt(0.7))


def test_coin_spec_equal_vectors_fail_asymmetry():
    with pytest.raises(ValidationError, match="coin-asymmetry"):
        validate_coin_spec(CoinSpec(PHI, PHI), [1, 1])


def test_coin_spec_overlap_fails_at_leg_2():
    with pytest.raises(ValidationError, match="j=2") as info:
        validate_coin_spec(CoinSpec(PHI, [1, 0, 0, 0]), [1, 1])
    # Phi_21 Omega_22 + Phi_22 Omega_21 = 0.5 * 0 + 0.5 * 0
    assert info.value.report.sigma1_overlaps[1] == 0


def test_coin_spec_rejects_d1_and_bad_norm():
    with pytest.raises(ValidationError, match="dimension"):
        validate_coin_spec(CoinSpec([1, 0], [0, 1]), [1])
    with pytest.raises(ValidationError, match="normalization"):
        CoinSpec([1, 1, 0, 0], PHI)


def test_shift_q0_is_diagonal_pm1():
    box = build_box(2, 5)
    S = build_shift(box, validate_shift_params([1, -1], [0, 0])).matrix
    assert np.array_equal(S, np.diag(np.diag(S)))
    assert np.array_equal(np.diag(S).real, np.tile([1, -1, -1, 1], box.n_sites))


def test_shift_d1_L3_hand_enumeration():
    box = build_box(1, 3)
    S = build_shift(box, validate_shift_params([0], [1])).matrix
    # sites x = -1, 0, 1 -> 0, 1, 2; (S f)_1(x) = f_2(x + 1), (S f)_2(x) = f_1(x - 1)
    expected = np.zeros((6, 6))
    for row, col in [(0, 3), (1, 4), (2, 5), (3, 0), (4, 1), (5, 2)]:
        expected[row, col] = 1
    assert np.array_equal(S, expected)
    assert np.array_equal(S @ S, np.eye(6))


@pytest.mark.parametrize("seed", range(5))
def test_shift_unitary_and_selfadjoint(seed):
    rng = np.random.default_rng(seed)
    box = build_box(2, 5)
    S = build_shift(box, random_params(rng, 2)).matrix
    assert unitarity_defect(S) <= ALGEBRA_TOL
    assert np.max(np.abs(S - S.conj().T)) <= ALGEBRA_TOL


def test_coin_structure(canonical_coins):
    box = build_box(2, 5)
    C = build_coin(box, canonical_coins).matrix
    assert np.max(np.abs(C - C.conj().T)) <= ALGEBRA_TOL
    assert np.max(np.abs(C @ C - np.eye(box.dim))) <= ALGEBRA_TOL
    for v in (PHI, OMEGA):
        ev = np.sort(np.linalg.eigvalsh(reflection(v)))
        assert np.allclose(ev, [-1, -1, -1, 1], atol=1e-12)
    o = box.origin * 4
    assert np.allclose(C[o:o + 4, o:o + 4], reflection(OMEGA))
    assert np.allclose(C[:4, :4], reflection(PHI))


def test_coin_without_defect_is_translation_invariant():
    box = build_box(2, 5)
    C = build_coin(box, CoinSpec(PHI, PHI)).matrix
    blocks = [C[4 * i:4 * i + 4, 4 * i:4 * i + 4] for i in range(box.n_sites)]
    assert all(np.array_equal(b, blocks[0]) for b in blocks)


def test_q0_walk_spectrum_is_union_of_site_blocks(canonical_coins):
    box = build_box(2, 5)
    params = validate_shift_params([1, 1], [0, 0])
    U = build_walk(box, params, canonical_coins).matrix
    S0 = np.diag([1, -1, 1, -1]).astype(complex)
    oracle = np.concatenate(
        [np.linalg.eigvals(S0 @ reflection(OMEGA if i == box.origin else PHI)) for i in range(box.n_sites)]
    )
    got = np.linalg.eigvals(U)
    assert np.allclose(np.sort_complex(np.round(got, 10)), np.sort_complex(np.round(oracle, 10)), atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 5), (2, 3), (2, 5), (3, 3)]))
def test_walk_unitary_and_propagates_by_one(seed, shape):
    d, L = shape
    rng = np.random.default_rng(seed)
    box = build_box(d, L)
    U = build_walk(box, random_params(rng, d), CoinSpec(random_unit(rng, 2 * d), random_unit(rng, 2 * d)))
    assert unitarity_defect(U) <= ALGEBRA_TOL
    assert propagation_bound(U) <= 1.0 + 1e-12
    assert U.b == 1.0


def test_defect_locality():
    box = build_box(2, 7)
    params = scan_params(0.3)
    bulk = build_walk(box, params, CoinSpec(PHI, PHI)).matrix
    assert np.array_equal(build_walk(box, params, CoinSpec(PHI, PHI)).matrix, bulk)
    defect = build_walk(box, params, CoinSpec(PHI, OMEGA)).matrix
    changed_cols = np.flatnonzero(np.any(defect != bulk, axis=0))
    assert set(changed_cols // 4) == {box.origin}
    rows = np.flatnonzero(np.any(defect != bulk, axis=1)) // 4
    assert np.all(box.radii[rows] <= 1.0)


def test_q0_walk_commutes_with_shell_projectors(canonical_coins):
    box = build_box(2, 7)
    U = build_walk(box, validate_shift_params([1, -1], [0, 0]), canonical_coins).matrix
    assert propagation_bound(U, box) == 0.0
    for R1, R2 in [(0, 1), (1, 2), (1.5, 3), (2, 10)]:
        E = shell_projector(box, R1, R2).full()
        assert np.max(np.abs(U * E[None, :] - E[:, None] * U)) == 0.0


def test_symbol_independent_of_k_when_q0():
    params = validate_shift_params([1, -1], [0, 0])
    a = bloch_symbol(params, PHI, [0.3, -1.2]).matrix
    b = bloch_symbol(params, PHI, [-3.0, 2.0]).matrix
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi - 1e-9), st.floats(-np.pi, np.pi - 1e-9))
def test_symbol_unitary(seed, k1, k2):
    rng = np.random.default_rng(seed)
    M = bloch_symbol(random_params(rng, 2), random_unit(rng, 4), [k1, k2]).matrix
    assert unitarity_defect(M) <= ALGEBRA_TOL


def test_symbol_rejects_out_of_zone_momentum():
    with pytest.raises(ValueError):
        bloch_symbol(validate_shift_params([1, 1], [0, 0]), PHI, [np.pi, 0])


@pytest.mark.parametrize("seed", [0, 1])
def test_symbol_matches_truncated_bulk_at_lattice_momenta(seed):
    rng = np.random.default_rng(seed)
    L = 5
    box = build_box(2, L)
    params = random_params(rng, 2)
    phi = random_unit(rng, 4)
    bulk = np.linalg.eigvals(build_walk(box, params, CoinSpec(phi, phi)).matrix)
    ks = 2 * np.pi * np.arange(L) / L
    ks = (ks + np.pi) % (2 * np.pi) - np.pi
    oracle = np.concatenate([np.linalg.eigvals(bloch_symbol(params, phi, [a, b]).matrix) for a in ks for b in ks])
    # multiset match: greedy nearest pairing
    remaining = list(oracle)
    for lam in bulk:
        j = int(np.argmin(np.abs(np.array(remaining) - lam)))
        assert abs(remaining[j] - lam) <= 1e-8
        remaining.pop(j)
    assert not remaining


def test_order_robustness_of_spectrum(canonical_coins):
    box = build_box(2, 5)
    params = validate_shift_params([0.6, 0.8], [0.8j, 0.6])
    sc = np.linalg.eigvals(build_walk(box, params, canonical_coins, order="SC").matrix)
    cs = np.linalg.eigvals(build_walk(box, params, canonical_coins, order="CS").matrix)
    for lam in sc:
        assert np.min(np.abs(cs - lam)) <= 1e-8
