"""Weighted norms, product inequalities and the block Sylvester solver."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_sylvester

from oracles import random_class_operator
from shrinkgap import (BlockOperator, ClassParams, build_power_basis, certify_gaps,
                       class_norm, commutator_with_H, cp_constant, sh_constant,
                       shur_holmgren_norm, sylvester_solve, zeta)
from shrinkgap.errors import GapConditionViolated, SmallDivisor, ValidationError
from shrinkgap.operator_classes import (bracket, block_norms_of, commutator,
                                        commutator_bound_check, diag_part, index_ratio_check,
                                        lemma_product_check, offdiag_part,
                                        product_bound_check, schur_chain_checks)
from shrinkgap.spectral_basis import SpectralBasis

APERY = 1.2020569031595942


# constants -----------------------------------------------------------------------

def test_bracket():
    assert bracket(0) == 1 and bracket(-3) == 3 and bracket(0.5) == 1
    assert bracket(np.array([-2, 0, 4])).tolist() == [2, 1, 4]


@pytest.mark.parametrize("s, exact", [(2, math.pi ** 2 / 6), (4, math.pi ** 4 / 90),
                                      (3, APERY), (6, math.pi ** 6 / 945)])
def test_zeta_against_closed_forms(s, exact):
    assert zeta(s) == pytest.approx(exact, rel=1e-14)


def test_zeta_domain():
    with pytest.raises(ValidationError):
        zeta(1.0)


def test_product_constant():
    assert cp_constant(3) == pytest.approx(16 * (1 + math.pi ** 2 / 3), rel=1e-14)
    assert cp_constant(4) == pytest.approx(32 * (1 + 2 * APERY), rel=1e-14)
    with pytest.raises(ValidationError):
        cp_constant(2)


def test_shur_holmgren_constant():
    assert sh_constant((3, 0)) == pytest.approx(2.5 + APERY, rel=1e-14)
    assert sh_constant(ClassParams(2, 0.5)) == pytest.approx(2.5 + APERY, rel=1e-14)
    with pytest.raises(ValidationError):
        sh_constant((math.inf, 0.25))
    with pytest.raises(ValidationError):
        sh_constant(ClassParams.weights_only(1, 0))


def test_class_params_validation():
    with pytest.raises(ValidationError):
        ClassParams(1, 0)
    with pytest.raises(ValidationError):
        ClassParams(0.5, 1)
    with pytest.raises(ValidationError):
        ClassParams(3, -0.1)
    assert ClassParams.weights_only(1, 0).p == 1.0


def test_index_ratio_is_tight():
    chk = index_ratio_check(200)
    assert chk.passed and chk.measured == pytest.approx(1.0)


# norms ------------------------------------------------------------------------------

def test_single_entry_norm():
    b = build_power_basis(0.5, 5)
    A = BlockOperator.from_blocks(b, {(1, 3): 1.0})
    assert class_norm(A, (2, 0.25)) == pytest.approx(4 * math.sqrt(3))
    assert class_norm(A, ClassParams.weights_only(1, 0)) == pytest.approx(2.0)


def test_infinite_p_needs_diagonal():
    b = build_power_basis(0.5, 4)
    D = BlockOperator(b, np.diag([1.0, -2.0, 0.5, 0.25]))
    assert class_norm(D, (math.inf, 0.25)) == pytest.approx(2 * 2 ** 0.5)
    with pytest.raises(ValidationError):
        class_norm(BlockOperator.from_blocks(b, {(1, 2): 1.0}), (math.inf, 0.25))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 31))
def test_two_by_two_block_norms_match_svd(N, seed):
    b = build_power_basis(0.5, N, "howland")
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(b.dim, b.dim)) + 1j * rng.normal(size=(b.dim, b.dim))
    fast = block_norms_of(b, M)
    for m in range(1, N + 1):
        for n in range(1, N + 1):
            ref = np.linalg.norm(M[b.block_slice(m), b.block_slice(n)], 2)
            assert fast[m - 1, n - 1] == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_operator_flags_and_algebra():
    b = build_power_basis(0.5, 3, "howland")
    H = BlockOperator.energy(b)
    assert H.hermitian and H.diagonal
    X = BlockOperator.from_blocks(b, {(1, 2): [[1.0, 2.0]], (2, 1): [[1.0], [2.0]]})
    assert X.hermitian and not X.diagonal
    assert (diag_part(X + H).matrix == H.matrix).all()
    assert (offdiag_part(X + H).matrix == X.matrix).all()
    np.testing.assert_allclose((2 * X - X).matrix, X.matrix)
    np.testing.assert_allclose((X @ H).matrix, X.matrix @ H.matrix)
    with pytest.raises(ValidationError):
        BlockOperator(b, np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        BlockOperator(b, X.matrix, diagonal=True)
    with pytest.raises(ValidationError):
        BlockOperator(b, np.triu(np.ones((b.dim, b.dim))), hermitian=True)
    with pytest.raises(ValueError):
        X.matrix[0, 0] = 3.0


def test_basis_mismatch_rejected():
    A = BlockOperator.zeros(build_power_basis(0.5, 3))
    B = BlockOperator.zeros(build_power_basis(0.5, 4))
    with pytest.raises(ValidationError):
        A + B


def test_serialization_round_trip():
    b = build_power_basis(2 / 3, 6, "howland")
    rng = np.random.default_rng(3)
    A = BlockOperator(b, random_class_operator(rng, b, ClassParams(3, 0.1), density=0.5))
    B = BlockOperator.from_dict(A.to_dict(), b)
    np.testing.assert_array_equal(A.matrix, B.matrix)
    with pytest.raises(ValidationError):
        BlockOperator.from_dict(A.to_dict(), build_power_basis(0.5, 6, "howland"))


def test_commutator_with_H_matches_dense():
    b = build_power_basis(0.5, 7, "howland")
    rng = np.random.default_rng(0)
    A = BlockOperator(b, rng.normal(size=(b.dim, b.dim)))
    H = BlockOperator.energy(b)
    np.testing.assert_allclose(commutator_with_H(A).matrix, commutator(A, H).matrix,
                               atol=1e-13)


# inequalities on random class members -------------------------------------------

CLASS_CASES = st.tuples(st.sampled_from([3.0, 3.5, 4.0, 5.0]), st.sampled_from([1, 2]),
                        st.sampled_from([0.5, 2 / 3]), st.sampled_from(["simple", "howland"]),
                        st.floats(0.2, 1.0), st.integers(0, 2 ** 31))


def _pair(case, N=20):
    p, i, alpha, rule, density, seed = case
    b = build_power_basis(alpha, N, rule)
    return b, p, i, np.random.default_rng(seed), density


@settings(max_examples=40, deadline=None)
@given(CLASS_CASES)
def test_commutator_and_schur_chain(case):
    b, p, i, rng, density = _pair(case)
    params = ClassParams(p, i * b.gamma)
    A = BlockOperator(b, random_class_operator(rng, b, params, density))
    assert commutator_bound_check(A, params).passed
    assert all(c.passed for c in schur_chain_checks(A, params))


@settings(max_examples=40, deadline=None)
@given(CLASS_CASES, st.sampled_from([1, 2, 3]), st.booleans())
def test_product_inequalities(case, kind, reverse):
    from shrinkgap.operator_classes import product_classes
    b, p, i, rng, density = _pair(case)
    pa, pb, _, _ = product_classes(kind, p, i, b.gamma)
    A = BlockOperator(b, random_class_operator(rng, b, pa, density))
    B = BlockOperator(b, random_class_operator(rng, b, pb, density))
    assert product_bound_check(A, B, kind, p, i, reverse).passed


@settings(max_examples=30, deadline=None)
@given(st.floats(1.5, 4.0), st.floats(0.0, 0.4), st.floats(0.0, 0.25), st.integers(0, 2 ** 31))
def test_general_product_lemma(p, d1, extra, seed):
    # admissible by construction: delta = d2 >= d1 and p + 2 d2 <= p + 0.5 + 2 d1
    b = build_power_basis(0.5, 16)
    rng = np.random.default_rng(seed)
    d2 = d1 + extra
    pa, pb = ClassParams(p + 0.5, d1), ClassParams(p, d2)
    pab = ClassParams(p, d2)
    A = BlockOperator(b, random_class_operator(rng, b, pa))
    B = BlockOperator(b, random_class_operator(rng, b, pb))
    assert lemma_product_check(A, B, pa, pb, pab).passed


def test_general_product_lemma_domain():
    b = build_power_basis(0.5, 4)
    Z = BlockOperator.zeros(b)
    with pytest.raises(ValidationError):
        lemma_product_check(Z, Z, (3, 0), (3, 0), (4, 0))


def test_sh_norm_of_identity():
    b = build_power_basis(0.5, 5)
    assert shur_holmgren_norm(BlockOperator.identity(b)) == 1.0


# Sylvester ------------------------------------------------------------------------

@pytest.mark.parametrize("rule", ["simple", "howland"])
def test_sylvester_matches_scipy(rule):
    b = build_power_basis(0.5, 10, rule)
    rng = np.random.default_rng(1)
    cert = certify_gaps(b)
    g = rng.normal(size=b.dim) * cert.c_H / 40
    G = np.diag(g).astype(complex)
    if rule == "howland":
        for n in range(2, b.N + 1):
            s = b.block_slice(n)
            G[s.start, s.start + 1] = G[s.start + 1, s.start] = 0.01 * cert.c_H
    G = BlockOperator(b, G)
    V = BlockOperator(b, np.where(b.same_block, 0, rng.normal(size=(b.dim, b.dim))))
    W, info = sylvester_solve(G, V, full_output=True)
    K = np.diag(b.energies) + G.matrix
    # the block-diagonal part of the scipy solution is the kernel; drop it
    ref = solve_sylvester(K, -K, V.matrix)
    np.testing.assert_allclose(W.matrix, np.where(b.same_block, 0, ref), atol=1e-9)
    assert info.residual < 1e-12
    assert info.guard.passed and info.br_check.passed and info.gap_check.passed
    assert info.divisor_check.passed


def test_sylvester_howland_block_example():
    # two 2x2 blocks, the solution computed by hand
    b = SpectralBasis([1.0, 2.0], [2, 2], 0.5)
    G = BlockOperator.zeros(b)
    V = BlockOperator.from_blocks(b, {(1, 2): np.eye(2), (2, 1): np.eye(2)})
    W = sylvester_solve(G, V)
    np.testing.assert_allclose(W.block(1, 2), -np.eye(2))
    np.testing.assert_allclose(W.block(2, 1), np.eye(2))


def test_sylvester_errors():
    b = build_power_basis(0.5, 4)
    V = BlockOperator.from_blocks(b, {(1, 2): 1.0, (2, 1): 1.0})
    big = BlockOperator(b, np.diag([0.0, 0.0, 0.0, 5.0]))
    with pytest.raises(GapConditionViolated):
        sylvester_solve(big, V)
    e = b.eigenvalues
    clash = BlockOperator(b, np.diag([e[1] - e[0], 0.0, 0.0, 0.0]))
    with pytest.raises(SmallDivisor):
        sylvester_solve(clash, V, strict=False)
    with pytest.raises(ValidationError):
        sylvester_solve(BlockOperator.zeros(b), BlockOperator.identity(b))


def test_documented_norm_values():
    b = build_power_basis(0.5, 16)
    I = BlockOperator.identity(b)
    assert class_norm(I, (3, 0)) == 1.0
    assert class_norm(I, (math.inf, 0.25)) == pytest.approx(4.0)
    assert shur_holmgren_norm(I) == 1.0
    T = BlockOperator(b, np.eye(16) + np.eye(16, k=1) + np.eye(16, k=-1))
    assert shur_holmgren_norm(T) == 3.0


def test_documented_block_operations():
    b = SpectralBasis([1.0, 2 ** 0.5, 3 ** 0.5], None, 0.5)
    D = BlockOperator(b, np.diag([1.0, 2.0, 3.0]))
    assert diag_part(D).matrix.tolist() == D.matrix.tolist()
    assert not offdiag_part(D).matrix.any()
    assert not commutator_with_H(D).matrix.any()
    A = BlockOperator.from_blocks(b, {(1, 2): 1.0})
    assert commutator_with_H(A).block(1, 2)[0, 0] == pytest.approx(2 ** 0.5 - 1)
    B = BlockOperator.from_blocks(b, {(2, 3): 1.0})
    AB = (A @ B).matrix
    assert AB[0, 2] == 1 and np.count_nonzero(AB) == 1


@pytest.mark.parametrize("g, expected", [((0.0, 0.0), -1.0), ((0.1, -0.1), -1.25)])
def test_documented_sylvester_scalars(g, expected):
    b = SpectralBasis([1.0, 2.0], None, 0.5)
    G = BlockOperator(b, np.diag(g))
    V = BlockOperator.from_blocks(b, {(1, 2): 1.0, (2, 1): 1.0})
    W = sylvester_solve(G, V, strict=False)
    assert W.block(1, 2)[0, 0] == pytest.approx(expected)
    assert W.block(2, 1)[0, 0] == pytest.approx(-expected)
