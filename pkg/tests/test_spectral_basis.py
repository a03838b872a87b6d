"""Block layout, serialization and the gap certificate."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkgap import SpectralBasis, build_power_basis, certify_gaps
from shrinkgap.errors import ValidationError
from shrinkgap.spectral_basis import gap_constants, gap_ratios


def brute_gap_constants(e, gamma):
    """Pairwise loop, deliberately naive."""
    lo, hi = math.inf, 0.0
    for m in range(1, len(e) + 1):
        for n in range(1, m):
            r = abs(e[m - 1] - e[n - 1]) * max(m, n) ** (2 * gamma) / (m - n)
            lo, hi = min(lo, r), max(hi, r)
    return lo, hi


def test_block_layout():
    b = SpectralBasis([1.0, 2.0, 3.5], [1, 2, 3], 0.5)
    assert b.dim == 6
    assert b.block_offsets.tolist() == [0, 1, 3, 6]
    assert b.block_of.tolist() == [0, 1, 1, 2, 2, 2]
    assert b.slot_of.tolist() == [0, 0, 1, 0, 1, 2]
    assert b.energies.tolist() == [1.0, 2.0, 2.0, 3.5, 3.5, 3.5]
    assert b.block_slice(2) == slice(1, 3)
    with pytest.raises(IndexError):
        b.block_slice(4)
    assert b.gamma == 0.25


@pytest.mark.parametrize("kwargs", [
    dict(eigenvalues=[1.0, 1.0], alpha=0.5),
    dict(eigenvalues=[2.0, 1.0], alpha=0.5),
    dict(eigenvalues=[0.0, 1.0], alpha=0.5),
    dict(eigenvalues=[1.0, 2.0], alpha=1.2),
    dict(eigenvalues=[1.0, 2.0], multiplicities=[1, 0], alpha=0.5),
    dict(eigenvalues=[1.0, np.inf], alpha=0.5),
])
def test_invalid_bases_rejected(kwargs):
    with pytest.raises(ValidationError):
        SpectralBasis(**kwargs)


def test_zero_eigenvalue_allowed_when_relaxed():
    b = SpectralBasis([0.0, 1.0], None, 0.5, require_positive=False)
    assert b.eigenvalues[0] == 0.0


def test_immutability():
    b = build_power_basis(0.5, 8)
    with pytest.raises(ValueError):
        b.eigenvalues[0] = 5.0
    with pytest.raises(Exception):
        b.alpha = 0.3


def test_round_trip():
    b = build_power_basis(2 / 3, 10, "howland")
    d = b.to_dict()
    assert set(d) == {"alpha", "gamma", "eigenvalues", "multiplicities"}
    c = SpectralBasis.from_dict(d)
    assert c.compatible(b) and c.ref == b.ref
    d["gamma"] = 0.3
    with pytest.raises(ValidationError):
        SpectralBasis.from_dict(d)


def test_power_basis_rules():
    assert build_power_basis(0.5, 5).multiplicities.tolist() == [1] * 5
    assert build_power_basis(0.5, 5, "howland").multiplicities.tolist() == [1, 2, 2, 2, 2]
    with pytest.raises(ValidationError):
        build_power_basis(0.5, 5, "other")
    with pytest.raises(ValidationError):
        build_power_basis(1.0, 5)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 2 / 3, 0.9])
def test_certificate_matches_brute_force(alpha):
    b = build_power_basis(alpha, 40)
    cert = certify_gaps(b)
    lo, hi = brute_gap_constants(b.eigenvalues, b.gamma)
    assert cert.c_H == pytest.approx(lo, rel=1e-14)
    assert cert.C_H == pytest.approx(hi, rel=1e-14)
    assert cert.verified_up_to == 40
    assert certify_gaps(b) is cert


def test_power_law_constants_bracket_mean_value_theorem():
    # n^alpha: the ratio lies between alpha * (min/max)^(1-alpha) and 1
    for alpha in (0.3, 0.5, 0.8):
        c, C = gap_constants(np.arange(1, 200.0) ** alpha, (1 - alpha) / 2)
        assert 0 < c <= C <= 1 + 1e-12
        assert c >= alpha * 2 ** (alpha - 1) - 1e-12


def test_gap_ratios_diagonal_is_nan():
    r = gap_ratios([1.0, 2.0, 4.0], 0.25)
    assert np.all(np.isnan(np.diag(r)))
    assert r[0, 1] == pytest.approx(2 ** 0.5)


def test_certificate_with_foreign_gamma_not_cached():
    b = build_power_basis(0.5, 20)
    other = certify_gaps(b, gamma=0.1)
    assert certify_gaps(b).c_H != other.c_H


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 5.0), min_size=2, max_size=25),
       st.floats(0.05, 0.95))
def test_certificate_is_tight_for_increasing_sequences(steps, alpha):
    e = 1.0 + np.cumsum(steps)
    b = SpectralBasis(e, None, alpha)
    cert = certify_gaps(b)
    r = gap_ratios(b.eigenvalues, b.gamma)
    off = r[~np.eye(b.N, dtype=bool)]
    assert np.all(off >= cert.c_H * (1 - 1e-14))
    assert np.all(off <= cert.C_H * (1 + 1e-14))
    assert off.min() == cert.c_H and off.max() == cert.C_H


def test_square_root_eigenvalues():
    b = build_power_basis(0.5, 4)
    np.testing.assert_allclose(b.eigenvalues, [1, 1.41421356, 1.73205081, 2], atol=5e-9)
    two = build_power_basis(0.3, 2)
    assert two.eigenvalues[0] == 1 and two.eigenvalues[1] == 2 ** 0.3


def test_square_root_certificate_exhaustive():
    # max^(1/2) / (sqrt m + sqrt n) lies in [1/2, 1]
    cert = certify_gaps(build_power_basis(0.5, 1000))
    assert 0.5 <= cert.c_H < 0.5 + 1e-3
    assert cert.C_H <= 1.0


def test_single_pair_and_equal_spacing():
    c, C = gap_constants([1.0, 2.0], 0.25)
    assert c == C == pytest.approx(2 ** 0.5)
    assert gap_constants(np.arange(1, 50.0), 0.0) == (1.0, 1.0)


def test_two_thirds_certificate():
    b = build_power_basis(2 / 3, 500)
    cert = certify_gaps(b)
    lo, hi = brute_gap_constants(b.eigenvalues, b.gamma)
    assert (cert.c_H, cert.C_H) == pytest.approx((lo, hi), rel=1e-13)
    assert cert.c_H >= 2 / 3 * 2 ** (-1 / 3) and cert.C_H <= 1


def test_refinement_brackets_constants():
    prev = certify_gaps(build_power_basis(0.5, 10))
    for N in range(11, 40):
        cert = certify_gaps(build_power_basis(0.5, N))
        assert cert.c_H <= prev.c_H and cert.C_H >= prev.C_H
        prev = cert
