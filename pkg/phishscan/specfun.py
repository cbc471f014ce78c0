"""
Tail probabilities for the rank tests: chi-square through the regularized incomplete
gamma function (series below a + 1, continued fraction above) and the standard normal.
"""
import math

EPS = 1e-16
TINY = 1e-300
MAX_ITER = 10_000


def _prefactor(a: float, x: float) -> float:
    return math.exp(-x + a * math.log(x) - math.lgamma(a))


def _lower_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            break
    return total * _prefactor(a, x)


def _upper_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            break
    return h * _prefactor(a, x)


def gammainc_lower(a: float, x: float) -> float:
    """ Regularized lower incomplete gamma P(a, x) """
    if a <= 0:
        raise ValueError(f'Shape must be positive, got {a}')
    if x < 0:
        raise ValueError(f'x must be non-negative, got {x}')
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _lower_series(a, x)
    return 1.0 - _upper_fraction(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """ Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x) """
    if a <= 0:
        raise ValueError(f'Shape must be positive, got {a}')
    if x < 0:
        raise ValueError(f'x must be non-negative, got {x}')
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_series(a, x)
    return _upper_fraction(a, x)


def chi2_sf(x: float, df: float) -> float:
    if x <= 0:
        return 1.0
    return gammainc_upper(df / 2.0, x / 2.0)


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def two_sided_p(z: float) -> float:
    return min(1.0, 2.0 * norm_sf(abs(z)))
