"""Gauss quadrature rules and nodal point sets on the reference interval/square."""

import numpy as np

# Gauss-Lobatto point sets used for nodal (Lagrange) DG bases.  Only small
# orders are needed; points include the interval endpoints for n >= 2.
_GAUSS_LOBATTO = {
    1: np.array([0.0]),
    2: np.array([-1.0, 1.0]),
    3: np.array([-1.0, 0.0, 1.0]),
    4: np.array([-1.0, -1.0 / np.sqrt(5.0), 1.0 / np.sqrt(5.0), 1.0]),
}


def gauss_legendre_1d(n):
    """Return (points, weights) of the n-point Gauss-Legendre rule on [-1, 1]."""
    if n < 1:
        raise ValueError("quadrature rule needs at least one point")
    return np.polynomial.legendre.leggauss(n)


def tensor_gauss(n):
    """Tensor-product Gauss rule on [-1, 1]^2: points (n*n, 2), weights (n*n,)."""
    x, w = gauss_legendre_1d(n)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    ww = np.outer(w, w).ravel()
    return pts, ww


def gauss_lobatto_points(n):
    """Gauss-Lobatto nodal points on [-1, 1] (n points)."""
    try:
        return _GAUSS_LOBATTO[n].copy()
    except KeyError:
        raise ValueError(f"Gauss-Lobatto points only tabulated up to n=4, got {n}")


def lagrange_1d(nodes, x):
    """Evaluate the 1D Lagrange basis on `nodes` at points `x`.

    Returns (values, derivatives), each of shape (len(x), len(nodes)).
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    vals = np.ones((len(x), n))
    ders = np.zeros((len(x), n))
    for i in range(n):
        denom = 1.0
        for j in range(n):
            if j != i:
                denom *= nodes[i] - nodes[j]
        # value: product of (x - x_j); derivative by product rule
        prod = np.ones_like(x)
        dsum = np.zeros_like(x)
        for j in range(n):
            if j == i:
                continue
            dterm = np.ones_like(x)
            for m in range(n):
                if m == i or m == j:
                    continue
                dterm *= x - nodes[m]
            dsum += dterm
            prod *= x - nodes[j]
        vals[:, i] = prod / denom
        ders[:, i] = dsum / denom
    return vals, ders


def legendre_val(m, s):
    """Legendre polynomial P_m evaluated at s."""
    coeff = np.zeros(m + 1)
    coeff[m] = 1.0
    return np.polynomial.legendre.legval(np.asarray(s, dtype=float), coeff)
