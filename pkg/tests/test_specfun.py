import math

import pytest

from phishscan.specfun import chi2_sf, gammainc_lower, gammainc_upper, norm_cdf, norm_sf, two_sided_p


@pytest.mark.parametrize('z,expected', [
    (0.0, 0.5),
    (1.96, 0.024997895148220435),
    (3.0, 0.0013498980316300946),
])
def test_norm_sf(z, expected):
    assert norm_sf(z) == pytest.approx(expected, rel=1e-12)


def test_norm_cdf():
    assert norm_cdf(-1.0) == pytest.approx(0.15865525393145707, rel=1e-12)
    assert norm_cdf(1.0) + norm_sf(1.0) == pytest.approx(1.0)


def test_two_sided_p():
    assert two_sided_p(-1.96) == pytest.approx(2 * 0.024997895148220435)
    assert two_sided_p(0.0) == 1.0


@pytest.mark.parametrize('x', [0.1, 1.0, 2.5, 7.2, 30.0])
def test_chi2_two_degrees_is_exponential(x):
    assert chi2_sf(x, 2) == pytest.approx(math.exp(-x / 2), rel=1e-10)


def test_chi2_four_degrees():
    assert chi2_sf(10.0, 4) == pytest.approx(6 * math.exp(-5), rel=1e-10)


def test_chi2_non_positive():
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(-1.0, 3) == 1.0


@pytest.mark.parametrize('a,x', [(0.5, 0.2), (1.0, 3.0), (3.0, 2.0), (3.0, 8.0), (12.5, 10.0)])
def test_lower_and_upper_sum_to_one(a, x):
    assert gammainc_lower(a, x) + gammainc_upper(a, x) == pytest.approx(1.0, abs=1e-12)


def test_gammainc_one_is_exponential():
    assert gammainc_lower(1.0, 2.0) == pytest.approx(1 - math.exp(-2.0), rel=1e-12)


def test_gammainc_domain():
    with pytest.raises(ValueError):
        gammainc_lower(0.0, 1.0)
    with pytest.raises(ValueError):
        gammainc_upper(1.0, -1.0)
    assert gammainc_lower(2.0, 0.0) == 0.0
    assert gammainc_upper(2.0, 0.0) == 1.0


@pytest.mark.parametrize('x,df,expected', [
    (360.81, 12, 7.3333504e-70),
    (100.0, 77, 0.040224461),
])
def test_chi2_reference_values(x, df, expected):
    assert chi2_sf(x, df) == pytest.approx(expected, rel=1e-7)


@pytest.mark.parametrize('x', [0.05, 1.0, 3.84, 11.0, 60.0, 300.0])
def test_chi2_one_and_three_degrees(x):
    one = math.erfc(math.sqrt(x / 2))
    assert chi2_sf(x, 1) == pytest.approx(one, rel=1e-9)
    assert chi2_sf(x, 3) == pytest.approx(one + math.sqrt(2 * x / math.pi) * math.exp(-x / 2), rel=1e-9)


@pytest.mark.parametrize('df', [1, 3, 5, 7, 12, 77, 151])
@pytest.mark.parametrize('x', [0.5, 5.0, 40.0, 150.0, 400.0])
def test_chi2_against_scipy(x, df):
    stats = pytest.importorskip('scipy.stats')
    assert chi2_sf(x, df) == pytest.approx(stats.chi2.sf(x, df), rel=1e-8)
