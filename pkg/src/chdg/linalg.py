"""Sparse iterative kernels: flexible right-preconditioned GMRES, SOR sweeps,
and fixed-cost inner solvers used inside block preconditioners.

All kernels are deterministic: serial modified Gram-Schmidt, fixed reduction
order, and seeded power iteration for spectral estimates.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularOperatorError(RuntimeError):
    """Zero diagonal entry or failed factorization."""


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    residuals: list = field(default_factory=list)


class LinearOperator:
    """Minimal linear operator: a shape and an apply(x) -> y."""

    def __init__(self, shape, apply):
        self.shape = shape
        self._apply = apply

    def apply(self, x):
        return self._apply(x)


def as_operator(A):
    if isinstance(A, LinearOperator):
        return A
    if sp.issparse(A):
        return LinearOperator(A.shape, lambda x, A=A: A @ x)
    if isinstance(A, np.ndarray):
        return LinearOperator(A.shape, lambda x, A=A: A @ x)
    raise TypeError(f"cannot wrap {type(A)} as a linear operator")


def gmres(op, rhs, precon=None, rtol=1e-8, max_iter=1000, restart=200):
    """Flexible right-preconditioned GMRES.

    Solves op x = rhs to a relative residual `rtol` (in the true residual,
    which right preconditioning preserves).  The preconditioner may vary
    between iterations (inexact inner solves), hence the flexible variant
    that stores the preconditioned directions.  Orthogonalization is serial
    reorthogonalized classical Gram-Schmidt.
    """
    op = as_operator(op)
    n = op.shape[0]
    if not 0.0 < rtol < 1.0:
        raise ValueError("rtol must lie in (0, 1)")
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, [0.0])

    x = np.zeros(n)
    total = 0
    residuals = []
    while True:
        r = rhs - op.apply(x)
        beta = np.linalg.norm(r)
        if total == 0:
            residuals.append(beta / bnorm)
        if beta / bnorm <= rtol:
            return x, SolveReport(total, beta / bnorm, True, residuals)
        m = min(restart, max_iter - total)
        if m <= 0:
            return x, SolveReport(total, beta / bnorm, False, residuals)
        cap = min(m, 32)                    # Krylov buffers grow on demand
        V = np.empty((cap + 1, n))
        Z = np.empty((cap, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        k_used = 0
        for k in range(m):
            if k == cap:
                cap = min(m, 2 * cap)
                V = np.vstack([V, np.empty((cap + 1 - len(V), n))])
                Z = np.vstack([Z, np.empty((cap - len(Z), n))])
            z = V[k] if precon is None else precon.apply(V[k])
            Z[k] = z
            w = op.apply(z)
            # classical Gram-Schmidt, reorthogonalizing when cancellation is
            # detected (DGKS test); matches modified Gram-Schmidt stability
            wnorm0 = np.linalg.norm(w)
            hk = V[:k + 1] @ w
            w -= hk @ V[:k + 1]
            if np.linalg.norm(w) < 0.7071 * wnorm0:
                corr = V[:k + 1] @ w
                w -= corr @ V[:k + 1]
                hk += corr
            H[:k + 1, k] = hk
            H[k + 1, k] = np.linalg.norm(w)
            breakdown = H[k + 1, k] == 0.0
            if not breakdown:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):              # apply stored Givens rotations
                h0 = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = h0
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            residuals.append(abs(g[k + 1]) / bnorm)
            if abs(g[k + 1]) / bnorm <= rtol or breakdown:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
        x = x + y @ Z[:k_used]
        r = rhs - op.apply(x)
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            return x, SolveReport(total, res, True, residuals)
        if total >= max_iter:
            return x, SolveReport(total, res, False, residuals)


class SorApplier:
    """Cached forward-SOR sweeps for a fixed sparse matrix.

    One sweep maps x to x + (D/omega + L)^{-1} (b - A x); the triangular
    factor is LU-factorized once (natural ordering) and reused.
    """

    def __init__(self, A, omega=1.0, sweeps=1):
        A = A.tocsr()
        diag = A.diagonal()
        if np.any(diag == 0.0):
            raise SingularOperatorError("zero diagonal entry in SOR")
        self.A = A
        self.sweeps = sweeps
        lower = sp.tril(A, k=-1) + sp.diags(diag / omega)
        self._lu = spla.splu(lower.tocsc(), permc_spec="NATURAL")
        self.shape = A.shape

    def sweep(self, x, b, sweeps=None):
        n = self.sweeps if sweeps is None else sweeps
        x = np.array(x, dtype=float, copy=True)
        for _ in range(n):
            x += self._lu.solve(b - self.A @ x)
        return x

    def apply(self, b):
        """Preconditioner application: sweeps starting from x = 0."""
        return self.sweep(np.zeros(self.shape[0]), b)


def sor_sweep(A, x, b, omega=1.0, sweeps=1):
    """Forward SOR sweeps on A x = b starting from x."""
    if sweeps == 0:
        return np.array(x, dtype=float, copy=True)
    return SorApplier(A, omega).sweep(x, b, sweeps)


class InnerSolver:
    """Fixed-cost approximate application of A^{-1} for preconditioner blocks.

    Methods: 'direct' (sparse LU), 'chebyshev_jacobi' (degree-m Chebyshev
    iteration on the Jacobi-preconditioned operator), 'cg_jacobi' (m CG
    iterations with Jacobi preconditioning; symmetric blocks only).
    """

    def __init__(self, A, method="direct", degree=3):
        self.method = method
        self.degree = degree
        A = A.tocsr()
        self.A = A
        if method == "direct":
            try:
                self._lu = spla.splu(A.tocsc())
            except RuntimeError as exc:
                raise SingularOperatorError(str(exc)) from exc
        elif method in ("chebyshev_jacobi", "cg_jacobi"):
            diag = A.diagonal()
            if np.any(diag == 0.0):
                raise SingularOperatorError("zero diagonal entry")
            self._dinv = 1.0 / diag
            lam_max = self._estimate_lambda_max()
            self._interval = (lam_max / 20.0, 1.1 * lam_max)
        else:
            raise ValueError(f"unknown inner solve method {method!r}")

    def _estimate_lambda_max(self, iters=30):
        x = np.ones(self.A.shape[0])
        x /= np.linalg.norm(x)
        lam = 1.0
        for _ in range(iters):
            y = self._dinv * (self.A @ x)
            lam = np.linalg.norm(y)
            if lam == 0.0:
                return 1.0
            x = y / lam
        return lam

    def solve(self, b):
        if self.method == "direct":
            return self._lu.solve(b)
        if self.method == "cg_jacobi":
            M = spla.LinearOperator(self.A.shape,
                                    matvec=lambda v: self._dinv * v)
            x, _ = spla.cg(self.A, b, rtol=1e-300, atol=0.0,
                           maxiter=self.degree, M=M)
            return x
        return self._chebyshev(b)

    def _chebyshev(self, b):
        # classical Chebyshev iteration on D^-1 A over the fixed interval
        a, c = self._interval
        theta = 0.5 * (c + a)
        delta = 0.5 * (c - a)
        sigma1 = theta / delta
        rho = 1.0 / sigma1
        x = np.zeros_like(b)
        r = self._dinv * b
        d = r / theta
        for i in range(self.degree):
            x = x + d
            r = r - self._dinv * (self.A @ d)
            rho_new = 1.0 / (2.0 * sigma1 - rho)
            d = rho_new * rho * d + (2.0 * rho_new / delta) * r
            rho = rho_new
        return x

    def apply(self, b):
        return self.solve(b)


def block_diag_inner_solve(A, b, method="direct", degree=3):
    """One approximate application of A^{-1} via the configured method."""
    return InnerSolver(A, method, degree).solve(b)
