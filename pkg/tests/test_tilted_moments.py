import math

import numpy as np
import pytest

from calmreg.exceptions import ConditionsUnmetError, DomainError, RangeError, ValidationError
from calmreg.tilted_moments import (ScalarLaw, diamond4_general, iid_delta_bound, iid_tau_scaling,
                                    sample_law, sharp_bound_terms, tau34, tilted_cumulants)


def test_gaussian_has_no_higher_cumulants():
    summary = tau34(ScalarLaw.gaussian(0.5), 3.0)
    assert summary.tau3 == 0.0 and summary.tau4 == 0.0
    assert summary.subg_const == 0.5
    c = tilted_cumulants(ScalarLaw.gaussian(), 2.0)
    assert c.phi == 2.0 and c.d3 == 0.0


def test_rademacher_fourth_cumulant_at_origin():
    assert tilted_cumulants(ScalarLaw.rademacher(), 0.0).d4 == pytest.approx(-2.0, abs=1e-12)
    summary = tau34(ScalarLaw.rademacher(), 1.0)
    assert summary.tau4 == pytest.approx(2.0, abs=1e-6)
    assert summary.subg_const == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("t", [0.0, 0.3, 2.0])
def test_rademacher_matches_logcosh(t):
    c = tilted_cumulants(ScalarLaw.rademacher(), t)
    assert c.phi == pytest.approx(math.log(math.cosh(t)), abs=1e-14)
    assert c.d1 == pytest.approx(math.tanh(t))


def test_tabulated_matches_rademacher():
    table = ScalarLaw.tabulated([-1.0, 1.0], [0.5, 0.5])
    a = tilted_cumulants(table, 0.7)
    b = tilted_cumulants(ScalarLaw.rademacher(), 0.7)
    assert np.allclose(a, b, atol=1e-10)


def test_uniform_variance():
    c = tilted_cumulants(ScalarLaw.centered_uniform(), 1e-3)
    assert c.d2 == pytest.approx(1.0, rel=1e-5)


def test_invalid_laws():
    with pytest.raises(ValidationError):
        ScalarLaw.tabulated([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValidationError):
        ScalarLaw.gaussian(2.0)


def test_overflow_guard():
    with pytest.raises(RangeError):
        tilted_cumulants(ScalarLaw.rademacher(), 1000.0)


def test_iid_scaling():
    assert iid_tau_scaling(2.0, 4.0, 4) == (1.0, 1.0)
    t_n, _ = iid_tau_scaling(0.8, 1.0, 25)
    t_4n, _ = iid_tau_scaling(0.8, 1.0, 100)
    assert t_4n == pytest.approx(0.5 * t_n)
    assert iid_delta_bound(1.0, 4.0, 8) == pytest.approx(1.0)


def test_sharp_bound_conditions():
    with pytest.raises(ConditionsUnmetError) as info:
        sharp_bound_terms(1.0, 4.0, 0.5, 1.0, 1.0, 1.0)
    assert len(info.value.failed) == 3


def test_sharp_bound_terms_small_tilt():
    terms = sharp_bound_terms(1.0, 2.0, 0.1, 6.0, 0.05, 0.05)
    assert terms.omega == pytest.approx(0.15)
    assert terms.x_mu > 0 and 0 < terms.eps_mu < 1
    assert terms.delta_mu >= terms.diamond4


def test_diamond4_domain():
    with pytest.raises(DomainError):
        diamond4_general(1.0, 1.0, 0.1, 0.1, 1.0)


def test_sampling(rng):
    signs = sample_law(ScalarLaw.rademacher(), rng, 1000)
    assert set(np.unique(signs)) == {-1.0, 1.0}
    uniform = sample_law(ScalarLaw.centered_uniform(), rng, 200_000)
    assert np.max(np.abs(uniform)) <= math.sqrt(3.0)
    assert uniform.var() == pytest.approx(1.0, abs=0.02)
