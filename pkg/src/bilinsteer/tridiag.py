"""Thomas elimination for constant-coefficient tridiagonal systems.

The forward-elimination multipliers depend only on the matrix, so they are
computed once and reused for every right-hand side.
"""

import numpy as np


class TridiagonalSolver:
    """Solve ``A x = d`` for ``A = tridiag(lower, diag, upper)``.

    No pivoting: callers must supply a diagonally dominant matrix (every
    system assembled in this package is symmetric positive definite).
    """

    def __init__(self, lower, diag, upper):
        diag = np.asarray(diag, dtype=float)
        n = diag.size
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n - 1,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n - 1,))
        cp = np.empty(n - 1)
        denom = np.empty(n)
        denom[0] = diag[0]
        for i in range(n - 1):
            cp[i] = upper[i] / denom[i]
            denom[i + 1] = diag[i + 1] - lower[i] * cp[i]
        if np.any(denom == 0.0) or not np.all(np.isfinite(denom)):
            raise ZeroDivisionError("singular tridiagonal system")
        self.n = n
        # plain lists: scalar indexing of lists is much faster than of ndarrays
        self._lower = lower.tolist()
        self._cp = cp.tolist()
        self._inv = (1.0 / denom).tolist()

    def solve(self, d):
        n, a, cp, inv = self.n, self._lower, self._cp, self._inv
        d = np.asarray(d, dtype=float).tolist()
        g = [0.0] * n
        prev = d[0] * inv[0]
        g[0] = prev
        for i in range(1, n):
            prev = (d[i] - a[i - 1] * prev) * inv[i]
            g[i] = prev
        x = g
        for i in range(n - 2, -1, -1):
            x[i] = g[i] - cp[i] * x[i + 1]
        return np.array(x)
