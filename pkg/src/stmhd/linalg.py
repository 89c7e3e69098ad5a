"""Sparse LU, right-preconditioned GMRES, and space-time block vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BreakdownError, SingularMatrixError


@dataclass(frozen=True)
class FieldLayout:
    """Per-slab segment sizes of the four fields (u, p, j, A)."""

    n_u: int
    n_p: int
    n_j: int
    n_a: int

    @property
    def slab_size(self) -> int:
        return self.n_u + self.n_p + self.n_j + self.n_a

    def offsets(self) -> dict:
        o_u = 0
        o_p = o_u + self.n_u
        o_j = o_p + self.n_p
        o_a = o_j + self.n_j
        return {"u": (o_u, o_p), "p": (o_p, o_j), "j": (o_j, o_a), "A": (o_a, self.slab_size)}


class BlockVector:
    """State over n_steps time slabs, each slab holding (u, p, j, A) segments.

    Slab and field accessors are views into one flat array; no copies.
    Steps are indexed 0-based internally.
    """

    def __init__(self, layout: FieldLayout, n_steps: int, data: np.ndarray | None = None):
        self.layout = layout
        self.n_steps = n_steps
        size = n_steps * layout.slab_size
        if data is None:
            data = np.zeros(size)
        if data.shape != (size,):
            raise ValueError(f"data must have shape ({size},), got {data.shape}")
        self.data = data
        self._offsets = layout.offsets()

    def slab(self, step: int) -> np.ndarray:
        s = self.layout.slab_size
        return self.data[step * s : (step + 1) * s]

    def field(self, step: int, name: str) -> np.ndarray:
        lo, hi = self._offsets[name]
        return self.slab(step)[lo:hi]

    def copy(self) -> "BlockVector":
        return BlockVector(self.layout, self.n_steps, self.data.copy())

    def zeros_like(self) -> "BlockVector":
        return BlockVector(self.layout, self.n_steps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


class LUFactor:
    """Sparse LU factorization with partial pivoting (SuperLU backend)."""

    def __init__(self, matrix: sp.spmatrix):
        mat = sp.csc_matrix(matrix)
        try:
            self._lu = spla.splu(mat)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SingularMatrixError(str(exc)) from exc
        self.shape = mat.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("LU solve produced non-finite values")
        return x

    @property
    def factors(self):
        """(perm_r, perm_c, L, U) of the permuted factorization Pr A Pc = L U."""
        lu = self._lu
        return lu.perm_r, lu.perm_c, lu.L, lu.U


def lu_factor(matrix: sp.spmatrix) -> LUFactor:
    return LUFactor(matrix)


@dataclass
class GmresConfig:
    rel_tol: float = 1e-2
    abs_tol: float = 1e-14
    max_iters: int = 200
    restart: int | None = None  # None = full GMRES

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residuals: list[float] = field(default_factory=list)
    converged: bool = True
    true_residual: float = 0.0


def gmres(apply_a, apply_pinv, b: np.ndarray, x0: np.ndarray | None = None,
          config: GmresConfig | None = None) -> GmresResult:
    """Right-preconditioned GMRES with modified Gram-Schmidt and Givens
    rotations.

    Solves ``A @ Pinv @ y = b`` and returns ``x = x0 + Pinv @ (V y)``; with
    right preconditioning the Arnoldi residual equals the true residual of
    ``A x = b``, which is what the stopping test
    ``|r| <= max(rel_tol*|r0|, abs_tol)`` monitors. The returned result also
    carries an explicitly recomputed true residual norm.
    """
    cfg = config or GmresConfig()
    if apply_pinv is None:
        apply_pinv = lambda v: v
    n = len(b)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(b)):
        raise BreakdownError("right-hand side contains non-finite values")

    r = b - apply_a(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    residuals = [beta]
    tol = max(cfg.rel_tol * beta, cfg.abs_tol)
    if beta <= tol:
        return GmresResult(x, 0, residuals, True, beta)

    restart = cfg.restart or cfg.max_iters
    total_iters = 0
    converged = False

    while total_iters < cfg.max_iters and not converged:
        m = min(restart, cfg.max_iters - total_iters)
        v = np.zeros((n, m + 1))
        h = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        v[:, 0] = r / beta
        g[0] = beta

        j_last = -1
        for j in range(m):
            # copy: operator callbacks may return their input by reference
            w = np.array(apply_a(apply_pinv(v[:, j])), dtype=float)
            if not np.all(np.isfinite(w)):
                raise BreakdownError("non-finite vector in Arnoldi process")
            for i in range(j + 1):
                h[i, j] = v[:, i] @ w
                w -= h[i, j] * v[:, i]
            h[j + 1, j] = np.linalg.norm(w)

            for i in range(j):
                t = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = t
            denom = np.hypot(h[j, j], h[j + 1, j])
            cs[j], sn[j] = h[j, j] / denom, h[j + 1, j] / denom
            h[j, j] = denom
            h[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total_iters += 1
            j_last = j
            residuals.append(abs(float(g[j + 1])))
            if residuals[-1] <= tol:
                converged = True
                break
            if h[j + 1, j] == 0.0 and denom == 0.0:
                break  # lucky breakdown, basis exhausted
            if j + 1 < m + 1 and np.linalg.norm(w) > 0:
                v[:, j + 1] = w / np.linalg.norm(w)

        if j_last >= 0:
            y = np.zeros(j_last + 1)
            for i in range(j_last, -1, -1):
                y[i] = (g[i] - h[i, i + 1 : j_last + 1] @ y[i + 1 : j_last + 1]) / h[i, i]
            x = x + apply_pinv(v[:, : j_last + 1] @ y)
        if converged:
            break
        r = b - apply_a(x)
        beta = float(np.linalg.norm(r))
        if beta <= tol:
            converged = True
            break

    true_res = float(np.linalg.norm(b - apply_a(x)))
    return GmresResult(x, total_iters, residuals, converged, true_res)
