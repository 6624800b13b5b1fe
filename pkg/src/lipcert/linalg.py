"""Dense matrix helpers: induced norms, element-wise absolute value, SVD.

Matrices are plain 2-D float64 ``numpy`` arrays, row-major.  All routines
treat their inputs as immutable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NonFinite, ShapeMismatch

L1 = "l1"
LINF = "linf"
L2 = "l2"
NORM_KINDS = (L1, LINF, L2)

# Power iteration on the Gram product for the spectral norm.
POWER_ITER_TOL = 1e-10
POWER_ITER_CAP = 10_000

# One-sided Jacobi sweeps: off-diagonal Gram entries are driven below
# JACOBI_TOL relative to the column norms.
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def abs_matrix(m) -> np.ndarray:
    """Element-wise absolute value, same shape."""
    return np.abs(as_matrix(m))


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def norm(m, p: str) -> float:
    """Induced matrix norm: l1 = max column abs-sum, linf = max row abs-sum,
    l2 = largest singular value (power iteration on the Gram product)."""
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeMismatch("norm of an empty matrix")
    if not np.isfinite(m).all():
        raise NonFinite("matrix contains NaN or Inf")
    if p == L1:
        return float(np.abs(m).sum(axis=0).max())
    if p == LINF:
        return float(np.abs(m).sum(axis=1).max())
    if p == L2:
        return _spectral_norm(m)
    raise ValueError(f"unknown norm kind {p!r}")


def _spectral_norm(m: np.ndarray) -> float:
    # Deterministic start (normalized all-ones) so runs are reproducible.
    n = m.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(POWER_ITER_CAP):
        w = m.T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v is in the kernel of the Gram map; either the matrix is zero
            # or the start vector was unlucky.  Perturb deterministically.
            if not m.any():
                return 0.0
            v = np.zeros(n)
            v[0] = 1.0
            continue
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= POWER_ITER_TOL * max(1.0, abs(lam_new)):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise NoConvergence("power iteration did not converge")


def batched_norm(stack: np.ndarray, p: str) -> np.ndarray:
    """Norms of a stack of matrices, shape (n, r, c) -> (n,).

    Used by corner-enumeration code (K2, brute force) where thousands of
    small matrices are reduced at once.
    """
    if p == L1:
        return np.abs(stack).sum(axis=1).max(axis=1)
    if p == LINF:
        return np.abs(stack).sum(axis=2).max(axis=1)
    if p == L2:
        return _batched_spectral_norm(stack)
    raise ValueError(f"unknown norm kind {p!r}")


def _batched_spectral_norm(stack: np.ndarray) -> np.ndarray:
    n, _, c = stack.shape
    v = np.full((n, c), 1.0 / np.sqrt(c))
    lam = np.zeros(n)
    st = np.swapaxes(stack, 1, 2)
    for _ in range(POWER_ITER_CAP):
        w = np.einsum("nij,nj->ni", st, np.einsum("nij,nj->ni", stack, v))
        nw = np.linalg.norm(w, axis=1)
        dead = nw == 0.0
        if dead.any():
            w[dead, 0] = 1.0
            nw[dead] = 1.0
        lam_new = np.einsum("ni,ni->n", v, w)
        v = w / nw[:, None]
        if np.all(np.abs(lam_new - lam) <= POWER_ITER_TOL * np.maximum(1.0, np.abs(lam_new))):
            lam = lam_new
            break
        lam = lam_new
    else:
        raise NoConvergence("batched power iteration did not converge")
    out = np.sqrt(np.maximum(lam, 0.0))
    # Zero matrices have spectral norm 0 regardless of the perturbation above.
    zero = ~stack.any(axis=(1, 2))
    out[zero] = 0.0
    return out


@dataclass
class SvdFactors:
    """Full factorization W = U @ diag-embed(sigma) @ Vt.

    u is (m, m) orthogonal, vt is (n, n) orthogonal, sigma has length
    min(m, n) sorted descending.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        m, n = self.u.shape[0], self.vt.shape[0]
        s = np.zeros((m, n))
        k = len(self.sigma)
        s[:k, :k] = np.diag(self.sigma)
        return self.u @ s @ self.vt


def svd(m) -> SvdFactors:
    """One-sided Jacobi SVD with full orthogonal factors."""
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeMismatch("svd of an empty matrix")
    if not np.isfinite(m).all():
        raise NonFinite("matrix contains NaN or Inf")
    if m.shape[0] >= m.shape[1]:
        u, s, vt = _jacobi_tall(m)
    else:
        ut, s, vtt = _jacobi_tall(m.T)
        u, vt = vtt.T, ut.T
    return SvdFactors(u=u, sigma=s, vt=vt)


def _jacobi_tall(w: np.ndarray):
    # w is (m, n) with m >= n.  Right rotations orthogonalize the columns.
    m, n = w.shape
    a = w.copy()
    v = np.eye(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        converged = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = a[:, p] @ a[:, p]
                aqq = a[:, q] @ a[:, q]
                apq = a[:, p] @ a[:, q]
                if abs(apq) <= JACOBI_TOL * np.sqrt(app * aqq) or apq == 0.0:
                    continue
                converged = False
                zeta = (aqq - app) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                rot = np.array([[c, s], [-s, c]])
                a[:, [p, q]] = a[:, [p, q]] @ rot
                v[:, [p, q]] = v[:, [p, q]] @ rot
        if converged:
            break
    else:
        raise NoConvergence(f"Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps")

    sig = np.linalg.norm(a, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    a = a[:, order]
    v = v[:, order]

    scale = sig[0] if sig.size and sig[0] > 0.0 else 1.0
    tiny = max(m, n) * np.finfo(float).eps * scale
    u = np.zeros((m, m))
    filled = []
    for j in range(n):
        if sig[j] > tiny:
            u[:, j] = a[:, j] / sig[j]
            filled.append(j)
        else:
            sig[j] = sig[j] if sig[j] > 0 else 0.0
    _complete_basis(u, filled, m)
    return u, sig, v.T


def _complete_basis(u: np.ndarray, filled, m: int) -> None:
    # Fill the remaining columns of u with an orthonormal completion: for each
    # missing column take the standard basis vector with the largest residual
    # after (twice re-orthogonalized) modified Gram-Schmidt.
    have = list(filled)
    need = [j for j in range(m) if j not in have]
    for j in need:
        best_vec, best_norm = None, -1.0
        for cand in range(m):
            vec = np.zeros(m)
            vec[cand] = 1.0
            for _ in range(2):
                for k in have:
                    vec -= (u[:, k] @ vec) * u[:, k]
            nv = np.linalg.norm(vec)
            if nv > best_norm:
                best_vec, best_norm = vec / nv if nv > 0 else vec, nv
        if best_norm <= 0.0:
            raise NoConvergence("failed to complete orthonormal basis")
        u[:, j] = best_vec
        have.append(j)
