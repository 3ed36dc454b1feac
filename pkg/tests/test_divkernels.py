import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxdiv.divkernels import (KL_PSI, SQRT_PSI, DivergenceSpec, cressie_read_phi, cressie_read_phi_prime,
                                cressie_read_phi_sharp, default_psi, default_psi_prime)
from proxdiv.errors import DomainError


def brute_phi(g, t):
    # the generic Cressie-Read formula, valid away from gamma in {0, 1}
    return (t**g - g * t + g - 1.0) / (g * (g - 1.0))


def test_phi_examples():
    assert cressie_read_phi(2.0, 1.0) == 0.0
    assert cressie_read_phi(2.0, 3.0) == pytest.approx(2.0)
    assert cressie_read_phi(0.5, 4.0) == pytest.approx((4**0.5 - 0.5 * 4 - 0.5) / (-0.25))
    assert cressie_read_phi(0.5, 4.0) == pytest.approx(2.0)


def test_phi_log_limits():
    t = np.array([0.5, 2.0, 5.0])
    np.testing.assert_allclose(cressie_read_phi(1.0, t), t * np.log(t) - t + 1)
    np.testing.assert_allclose(cressie_read_phi(0.0, t), -np.log(t) + t - 1)
    assert cressie_read_phi(1.0, 0.0) == 1.0


@pytest.mark.parametrize("g0", [0.0, 1.0])
def test_phi_continuous_in_gamma(g0):
    t = np.array([0.5, 2.0, 5.0])
    for g in (g0 - 1e-6, g0 + 1e-6):
        assert np.max(np.abs(brute_phi(g, t) - cressie_read_phi(g0, t))) <= 1e-4


@pytest.mark.parametrize("g", [0.0, -1.0, -0.5])
def test_phi_infinite_at_zero(g):
    with pytest.raises(DomainError):
        cressie_read_phi(g, 0.0)


def test_phi_prime_examples():
    assert cressie_read_phi_prime(2.0, 1.0) == 0.0
    assert cressie_read_phi_prime(0.0, 2.0) == pytest.approx(0.5)
    assert cressie_read_phi_prime(1.0, np.e) == pytest.approx(1.0)


@pytest.mark.parametrize("g", [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
@pytest.mark.parametrize("t", [0.3, 1.0 + 1e-3, 2.0, 7.0])
def test_phi_prime_matches_finite_difference(g, t):
    h = 1e-6
    fd = (cressie_read_phi(g, t + h) - cressie_read_phi(g, t - h)) / (2 * h)
    assert cressie_read_phi_prime(g, t) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_phi_sharp_examples():
    assert cressie_read_phi_sharp(2.0, 1.0) == 0.0
    assert cressie_read_phi_sharp(2.0, 3.0) == pytest.approx(4.0)


@pytest.mark.parametrize("g", [-1.0, 0.0, 0.5, 1.0, 2.0])
def test_phi_sharp_is_t_phiprime_minus_phi(g):
    t = np.linspace(0.1, 6, 40)
    expect = t * cressie_read_phi_prime(g, t) - cressie_read_phi(g, t)
    np.testing.assert_allclose(cressie_read_phi_sharp(g, t), expect, rtol=1e-12, atol=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.floats(-2.0, 3.0), st.floats(1e-6, 10.0))
def test_phi_nonnegative(g, t):
    v = cressie_read_phi(g, t)
    assert v >= -1e-12
    if abs(t - 1.0) > 1e-3:
        assert v > 0


def test_default_psi_examples():
    assert default_psi(1.0) == 0.0
    assert default_psi(4.0) == pytest.approx(0.5)
    assert default_psi(0.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        default_psi_prime(0.0)


@pytest.mark.parametrize("spec", [SQRT_PSI, KL_PSI])
def test_proximal_spec_contract(spec):
    t = np.linspace(0.0, 100.0, 10001)[1:]
    t = np.union1d(t, [1.0])
    v = spec.psi(t)
    d = spec.psi_prime(t)
    assert np.all(v >= 0)
    off = np.abs(t - 1.0) > 1e-9
    assert np.all(v[off] > 0) and np.all(d[off] != 0)
    assert spec.psi(1.0) == 0.0 and spec.psi_prime(1.0) == 0.0


@pytest.mark.parametrize("spec", [SQRT_PSI, KL_PSI])
@pytest.mark.parametrize("t", [0.2, 0.9, 1.5, 30.0])
def test_psi_prime_matches_finite_difference(spec, t):
    h = 1e-6
    fd = (spec.psi(t + h) - spec.psi(t - h)) / (2 * h)
    assert spec.psi_prime(t) == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_divergence_spec_validation():
    assert DivergenceSpec.cressie_read(0.5).gamma == 0.5
    with pytest.raises(ValueError):
        DivergenceSpec.cressie_read(float("inf"))
    with pytest.raises(ValueError):
        DivergenceSpec.dpd(0.0)
    with pytest.raises(ValueError):
        DivergenceSpec("bregman")
