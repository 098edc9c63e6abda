import numpy as np
import pytest

from bgkuq.quadrature import build_gauss_legendre


@pytest.fixture(scope="session")
def grid40():
    return build_gauss_legendre(40, 5.0)


def romberg(f, a, b, levels=11):
    """Romberg integration oracle: trapezoid refinement + Richardson table.

    Independent of the package quadrature; used to pin bracket values.
    """
    table = []
    h = b - a
    s = 0.5 * (f(a) + f(b)) * h
    table.append([s])
    for k in range(1, levels):
        h *= 0.5
        xs = a + h * (2 * np.arange(2 ** (k - 1)) + 1)
        s = 0.5 * table[-1][0] + h * np.sum(f(xs))
        row = [s]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - table[-1][j - 1]) / (4.0**j - 1.0))
        table.append(row)
    return table[-1][-1]
