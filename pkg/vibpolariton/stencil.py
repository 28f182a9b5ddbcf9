import functools

import numpy as np

from .exceptions import ConfigurationError

SUPPORTED_ORDERS = (2, 4, 6, 8)


@functools.lru_cache(maxsize=None)
def _coefficients(order: int) -> tuple:
    half = order // 2
    m = np.arange(1, half + 1, dtype=float)
    # Even moments: sum_m 2 m^(2p) w_m = f''(0) for f = x^(2p), p = 1..half
    powers = 2 * np.arange(1, half + 1)[:, np.newaxis]
    vandermonde = 2.0 * m[np.newaxis, :] ** powers
    rhs = np.zeros(half)
    rhs[0] = 2.0
    weights = np.linalg.solve(vandermonde, rhs)
    w0 = -2.0 * weights.sum()
    return (w0, ) + tuple(weights)


def stencil_coefficients(order: int) -> np.ndarray:
    """
    Central finite-difference coefficients for the second derivative

    The returned weights satisfy, on a unit grid::

        f''(0) ~ w_0 f(0) + sum_m w_m [f(m) + f(-m)]

    Parameters
    ----------
    order : int
        Accuracy order of the stencil, one of 2, 4, 6, 8

    Returns
    -------
    weights : np.ndarray
        ``[w_0, w_1, ..., w_{order/2}]``
    """
    if order not in SUPPORTED_ORDERS:
        raise ConfigurationError(
            'Unsupported stencil order {}; expected one of {}'
            ''.format(order, SUPPORTED_ORDERS), key='stencil_order')
    return np.array(_coefficients(int(order)))


def stencil_symbol(order: int, ka) -> np.ndarray:
    '''
    Fourier symbol of minus the discrete second derivative

    ``sum_m w_m 2 (1 - cos(m k a))``; reduces to ``(ka)^2`` for small ``ka``.
    '''
    weights = stencil_coefficients(order)
    ka = np.asarray(ka, dtype=float)
    symbol = np.zeros_like(ka)
    for m, w_m in enumerate(weights[1:], start=1):
        symbol = symbol + 2.0 * w_m * (1.0 - np.cos(m * ka))
    return symbol
