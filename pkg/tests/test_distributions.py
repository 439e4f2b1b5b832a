import numpy as np
import pytest

from rqslopes.distributions import BUILTIN_MODELS, error_model

GRID = np.linspace(0.001, 0.999, 999)


@pytest.mark.parametrize("name", BUILTIN_MODELS)
def test_cdf_inverts_quantile(name):
    m = error_model(name)
    np.testing.assert_allclose(m.cdf(m.quantile(GRID)), GRID, atol=1e-10)


@pytest.mark.parametrize("name", BUILTIN_MODELS)
def test_density_positive_and_consistent(name):
    m = error_model(name)
    f = m.density_at_quantile(GRID)
    assert np.all(f > 0)
    np.testing.assert_allclose(f, m.density(m.quantile(GRID)), rtol=1e-8)
    # derivative of the quantile function is 1 / f(F^{-1})
    h = 1e-6
    dq = (m.quantile(GRID[1:-1] + h) - m.quantile(GRID[1:-1] - h)) / (2 * h)
    np.testing.assert_allclose(dq, 1 / f[1:-1], rtol=1e-5)


def test_logistic_closed_forms():
    m = error_model("logistic")
    assert m.density_at_quantile(0.5) == pytest.approx(0.25)
    assert m.quantile(0.75) == pytest.approx(np.log(3.0))
    assert m.density_at_quantile(1e-12) == pytest.approx(1e-12, rel=1e-9)


def test_unknown_model():
    with pytest.raises(KeyError):
        error_model("cauchy")
