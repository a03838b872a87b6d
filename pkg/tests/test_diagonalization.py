"""Progressive diagonalization, the composed reduction and its threshold."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import admissible_pair, random_class_operator
from shrinkgap import (BlockOperator, ClassParams, SpectralBasis, TimePeriodicOperator,
                       build_power_basis, certify_gaps, class_norm, cp_constant, epsilon_threshold,
                       family_class_norm, phi, progressive_diagonalize, reduce_floquet)
from shrinkgap.diagonalization import (composed_bounds, conjugate_family, default_q,
                                       unitarity_defect, unitary_exp)
from shrinkgap.errors import SmallnessViolated, ValidationError


def test_phi_values():
    assert phi(0) == 0 and phi(1) == pytest.approx(1.0, rel=1e-15)
    assert phi(0.5) == pytest.approx(math.exp(0.5) - 2 * (math.exp(0.5) - 1), rel=1e-14)
    for x in (1e-8, 1e-5, 1e-4, 2e-4, 0.3, 0.9):
        assert 0 < phi(x) < x
        series = math.fsum(k * x ** k / math.factorial(k + 1) for k in range(1, 40))
        assert phi(x) == pytest.approx(series, rel=1e-12)
    with pytest.raises(ValidationError):
        phi(-1)


def test_unitary_exp():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    W = X - X.conj().T
    from scipy.linalg import expm
    np.testing.assert_allclose(unitary_exp(W), expm(W), atol=1e-12)
    assert unitarity_defect(unitary_exp(W)) < 1e-13


def test_diagonal_input_needs_no_rotation():
    b = build_power_basis(0.5, 6)
    Y = BlockOperator(b, np.diag(np.linspace(0, 1e-5, 6)))
    Z = BlockOperator(b, np.diag(np.full(6, 2e-5)))
    U, A, state = progressive_diagonalize(Y, Z, 3.5, 1)
    assert state.s == 0
    np.testing.assert_allclose(U.matrix, np.eye(6))
    np.testing.assert_allclose(A.matrix, (Y + Z).matrix)


def test_two_level_example_in_permissive_mode():
    b = SpectralBasis([1.0, 2.0], None, 0.5)
    Z = BlockOperator(b, [[0, 0.1], [0.1, 0]])
    # far above the certified smallness bound: strict mode refuses
    with pytest.raises(SmallnessViolated):
        progressive_diagonalize(BlockOperator.zeros(b), Z, 3.5, 1)
    U, A, state = progressive_diagonalize(BlockOperator.zeros(b), Z, 3.5, 1, strict=False)
    ev = np.sort(np.diag(A.matrix).real + b.energies)
    np.testing.assert_allclose(ev, [(3 - 1.04 ** 0.5) / 2, (3 + 1.04 ** 0.5) / 2], atol=1e-10)
    assert state.smallness.status == "warn"


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([0.5, 2 / 3]),
       st.sampled_from(["simple", "howland"]), st.sampled_from([(3.5, 1), (4.0, 2)]))
def test_matches_dense_eigensolver(seed, alpha, rule, ri):
    r, i = ri
    b, Y, Z = admissible_pair(seed, alpha=alpha, rule=rule, r=r, i=i)
    U, A, state = progressive_diagonalize(Y, Z, r, i, debug=True)
    dense = np.linalg.eigvalsh(np.diag(b.energies) + Y.matrix + Z.matrix)
    ours = np.linalg.eigvalsh(np.diag(b.energies) + A.matrix)
    np.testing.assert_allclose(ours, dense, atol=1e-9)
    xs = state.x_history
    assert all(xs[k + 1] <= xs[k] ** 2 for k in range(len(xs) - 1))
    assert all(c.status == "pass" for c in state.checks)
    names = {c.name for c in state.checks}
    assert {"a_norm", "offdiag_residual", "unitarity", "gap_guard", "w_norm"} <= names


def test_state_serializes():
    b, Y, Z = admissible_pair(1)
    _, _, state = progressive_diagonalize(Y, Z, 3.5, 1)
    d = state.to_dict()
    assert d["s"] == len(d["steps"]) and d["s"] >= 1
    assert set(d["steps"][0]) >= {"s", "x_s", "norm_G", "norm_V", "norm_W", "bound_checks"}


def test_validation():
    b, Y, Z = admissible_pair(2)
    with pytest.raises(ValidationError):
        progressive_diagonalize(Z, Z, 3.5, 1)
    with pytest.raises(ValidationError):
        progressive_diagonalize(Y, BlockOperator(b, np.triu(np.ones((12, 12)))), 3.5, 1)


def test_conjugation_by_identity():
    b = build_power_basis(0.5, 5)
    X = TimePeriodicOperator.cosine(BlockOperator.from_blocks(b, {(1, 2): 1.0, (2, 1): 1.0}), 1.0)
    out, chk = conjugate_family(BlockOperator.identity(b), X, 3.5, 1)
    np.testing.assert_allclose(out.coefficients, X.coefficients)
    assert chk.passed


# threshold -------------------------------------------------------------------------

@pytest.mark.parametrize("p", [2.5, 3.0, 3.5, 5.0])
def test_single_step_threshold_closed_form(p):
    b = build_power_basis(0.5, 32)
    cert = certify_gaps(b)
    thr = epsilon_threshold(p, 1, 2 * math.pi, cert.c_H, cert.C_H)
    assert thr == pytest.approx(cert.c_H / (4 * math.pi * cp_constant(p + 1)), rel=1e-12)


def test_threshold_is_tight_preimage():
    args = dict(T=2 * math.pi, c_H=0.5, C_H=1.0)
    p, q = 4.5, 3
    thr = epsilon_threshold(p, q, **args)
    assert thr > 0
    vals, _ = composed_bounds(thr, p, q, **args)
    targets = [0.5 / (4 * math.pi * cp_constant(p - i + 2)) for i in range(1, q + 1)]
    assert all(v <= t * (1 + 1e-12) for v, t in zip(vals, targets))
    above, _ = composed_bounds(thr * (1 + 1e-9), p, q, **args)
    assert any(v > t for v, t in zip(above, targets))
    # more steps never allow a larger perturbation
    assert thr <= epsilon_threshold(p, 1, **args)


def test_default_q_and_validation():
    assert default_q(3.5) == 2 and default_q(2.5) == 1 and default_q(5) == 3
    with pytest.raises(ValidationError):
        epsilon_threshold(3.5, 3, 1.0, 0.5, 1.0)
    with pytest.raises(ValidationError):
        epsilon_threshold(2.0, 1, 1.0, 0.5, 1.0)
    with pytest.raises(ValidationError):
        epsilon_threshold(3.5, 1, 1.0, 1.0, 0.5)


# composed reduction ----------------------------------------------------------------

def scaled_drive(N, p, fraction, q, seed=0, K=1):
    b = build_power_basis(0.5, N)
    rng = np.random.default_rng(seed)
    harm = {}
    for k in range(1, K + 1):
        X = random_class_operator(rng, b, ClassParams(p, b.gamma))
        harm[k], harm[-k] = X, X.conj().T
    V = TimePeriodicOperator.from_harmonics(b, 2 * math.pi, harm, hermitian_family=True)
    cert = certify_gaps(b)
    thr = epsilon_threshold(p, q, V.period, cert.c_H, cert.C_H)
    return b, V * (fraction * thr / family_class_norm(V, (p, b.gamma)))


def test_zero_drive():
    b = build_power_basis(0.5, 6)
    V = TimePeriodicOperator.from_harmonics(b, 1.0, {0: np.zeros((6, 6))})
    res = reduce_floquet(V, 3.5)
    assert res.q == 2 and not res.A.matrix.any() and res.B.is_zero()
    np.testing.assert_allclose(res.J.evaluate(0.3), np.eye(6), atol=1e-15)


def test_reduction_gauge_identity():
    b, V = scaled_drive(10, 3.5, 0.9, 2, K=2)
    res = reduce_floquet(V, 3.5)
    assert all(c.status == "pass" for c in res.checks)
    H = np.diag(b.energies)
    h = 1e-3
    for t in (0.2, 1.3, 4.0):
        J = res.J.evaluate(t)
        dJ = (-res.J.evaluate(t + 2 * h) + 8 * res.J.evaluate(t + h)
              - 8 * res.J.evaluate(t - h) + res.J.evaluate(t - 2 * h)) / (12 * h)
        rhs = J @ (H + res.A.matrix + res.B.evaluate_matrix(t)) @ J.conj().T \
            + 1j * dJ @ J.conj().T
        np.testing.assert_allclose(rhs, H + V.evaluate_matrix(t), atol=1e-9)


def test_strict_refusal_and_permissive_warning():
    b, V = scaled_drive(8, 3.5, 1.5, 2)
    with pytest.raises(SmallnessViolated) as info:
        reduce_floquet(V, 3.5)
    assert "threshold" in str(info.value)
    res = reduce_floquet(V, 3.5, strict=False)
    statuses = {c.name: c.status for c in res.checks}
    assert statuses["epsilon_threshold"] == "warn"


def test_result_serializes():
    b, V = scaled_drive(8, 3.5, 0.5, 1)
    d = reduce_floquet(V, 3.5, q=1).to_dict()
    assert d["q"] == 1 and len(d["per_step"]) == 1
    assert d["out_params"] == {"p": 2.5, "delta": pytest.approx(0.5)}
