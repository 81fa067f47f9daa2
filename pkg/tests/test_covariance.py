import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from addtfit.covariance import (
    ErrorStructure,
    block_inverse_apply,
    block_logdet,
    corr_logdet,
    inverse_apply,
    rho_lower_bound,
    whiten,
)
from addtfit.errors import ValidationError


def dense_block(n, rho):
    return (1.0 - rho) * np.eye(n) + rho * np.ones((n, n))


def test_block_inverse_2x2_half():
    out = block_inverse_apply(2, 0.5, np.array([1.0, 0.0]))
    assert np.allclose(out, [4.0 / 3.0, -2.0 / 3.0], rtol=0, atol=1e-14)


def test_block_inverse_rho_zero_identity():
    v = np.array([3.0, -1.0, 2.5])
    assert np.array_equal(block_inverse_apply(3, 0.0, v), v)


def test_block_inverse_ones_eigenvector():
    v = np.ones(3)
    out = block_inverse_apply(3, 0.2, v)
    assert np.allclose(out, v / 1.4, rtol=1e-14)


def test_block_logdet_examples():
    assert block_logdet(2, 0.5) == pytest.approx(np.log(0.75), rel=1e-14)
    assert block_logdet(4, 0.0) == 0.0
    assert block_logdet(1, 0.9) == 0.0


def test_whiten_rho_zero_unchanged():
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(2, 3))
    v = np.arange(5.0)
    assert np.array_equal(whiten(s, v), v)


def test_whiten_quadratic_form_matches_inverse():
    rng = np.random.default_rng(42)
    sizes = (3, 1, 2, 5, 4)
    s = ErrorStructure(sigma=0.7, rho=0.35, block_sizes=sizes)
    for _ in range(50):
        v = rng.normal(size=sum(sizes))
        lhs = float(whiten(s, v) @ whiten(s, v))
        rhs = float(v @ inverse_apply(s, v))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_whiten_ones_block_norm():
    s = ErrorStructure(sigma=1.0, rho=0.5, block_sizes=(2,))
    w = whiten(s, np.ones(2))
    assert float(w @ w) == pytest.approx(4.0 / 3.0, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_closed_forms_match_dense(n):
    lo = rho_lower_bound([n]) + 1e-3
    for rho in np.linspace(max(lo, -0.9), 0.99, 25):
        R = dense_block(n, rho)
        v = np.linspace(-1.0, 1.0, n)
        assert np.allclose(
            block_inverse_apply(n, rho, v), np.linalg.solve(R, v), rtol=1e-9
        )
        sign, ld = np.linalg.slogdet(R)
        assert sign > 0
        assert block_logdet(n, rho) == pytest.approx(ld, rel=1e-9, abs=1e-12)


def test_corr_logdet_sums_blocks():
    s = ErrorStructure(sigma=1.0, rho=0.3, block_sizes=(2, 3, 1))
    expected = block_logdet(2, 0.3) + block_logdet(3, 0.3) + block_logdet(1, 0.3)
    assert corr_logdet(s) == pytest.approx(expected, rel=1e-14)


@given(
    rho=st.floats(min_value=-0.2, max_value=0.95),
    a=st.floats(min_value=-5, max_value=5),
    b=st.floats(min_value=-5, max_value=5),
)
@settings(max_examples=60)
def test_block_inverse_linear_in_v(rho, a, b):
    n = 4
    rng = np.random.default_rng(0)
    v1 = rng.normal(size=n)
    v2 = rng.normal(size=n)
    lhs = block_inverse_apply(n, rho, a * v1 + b * v2)
    rhs = a * block_inverse_apply(n, rho, v1) + b * block_inverse_apply(n, rho, v2)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_singular_rho_rejected():
    with pytest.raises(ValidationError):
        block_inverse_apply(3, 1.0, np.ones(3))
    with pytest.raises(ValidationError):
        block_logdet(3, -0.5)  # 1 + 2*(-0.5) = 0


def test_structure_validation():
    with pytest.raises(ValidationError):
        ErrorStructure(sigma=0.0, rho=0.1, block_sizes=(2,))
    with pytest.raises(ValidationError):
        ErrorStructure(sigma=1.0, rho=1.0, block_sizes=(2,))
    with pytest.raises(ValidationError):
        ErrorStructure(sigma=1.0, rho=-0.6, block_sizes=(3,))
