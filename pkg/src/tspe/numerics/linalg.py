"""Symmetric eigensolvers and truncated SVD with deterministic signs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import Xoshiro256

DENSE_LIMIT = 2000


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.3e})")


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class SymmetricOperator:
    """Matrix-free n x n symmetric linear map.

    ``apply`` accepts a vector of length n or an ``(n, b)`` block.
    """

    n: int
    apply: Callable[[np.ndarray], np.ndarray]
    dense_fn: Callable[[], np.ndarray] | None = None

    def __matmul__(self, x):
        return self.apply(x)

    def to_dense(self) -> np.ndarray:
        if self.dense_fn is not None:
            return self.dense_fn()
        return self.apply(np.eye(self.n))

    @classmethod
    def from_dense(cls, a) -> "SymmetricOperator":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        return cls(a.shape[0], lambda x: a @ x, lambda: a.copy())


def canonicalize_signs(vectors: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive.

    Entries within ``rtol`` of the column maximum count as tied; the lowest
    index among them decides.
    """
    v = np.array(vectors, dtype=np.float64, copy=True)
    if v.ndim == 1:
        return canonicalize_signs(v[:, None], rtol)[:, 0]
    mags = np.abs(v)
    peak = mags.max(axis=0, initial=0.0)
    for j in range(v.shape[1]):
        if peak[j] == 0.0:
            continue
        lead = int(np.flatnonzero(mags[:, j] >= peak[j] * (1.0 - rtol))[0])
        if v[lead, j] < 0:
            v[:, j] = -v[:, j]
    return v


def _select_nonzero(vals, vecs, k, zero_threshold):
    keep = np.flatnonzero(vals > zero_threshold)
    if keep.size < k:
        raise ValueError(f"requested k={k} eigenpairs but only {keep.size} "
                         f"eigenvalues exceed the zero threshold {zero_threshold:g}")
    keep = keep[:k]
    return vals[keep], vecs[:, keep]


def eigs_dense(op: SymmetricOperator, k: int, zero_threshold: float = 1e-8):
    """k smallest eigenpairs above ``zero_threshold`` from a full ``eigh``."""
    a = op.to_dense()
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    vals, vecs = _select_nonzero(vals, vecs, k, zero_threshold)
    return vals, canonicalize_signs(vecs)


def _lanczos_top(apply, n, locked, want, tol, rng, max_dim):
    """Lanczos with full reorthogonalization on the complement of ``locked``.

    Returns the converged top Ritz pairs (at most ``want``), largest first,
    and the best residual seen.
    """
    basis = np.empty((n, max_dim))
    alphas, betas = [], []
    q = np.array([rng.random() - 0.5 for _ in range(n)])
    if locked.shape[1]:
        q -= locked @ (locked.T @ q)
    q /= np.linalg.norm(q)
    best = np.inf
    m = 0
    beta = 0.0
    while m < max_dim:
        basis[:, m] = q
        w = apply(q)
        if locked.shape[1]:
            w -= locked @ (locked.T @ w)
        alpha = float(q @ w)
        alphas.append(alpha)
        w -= basis[:, :m + 1] @ (basis[:, :m + 1].T @ w)
        w -= basis[:, :m + 1] @ (basis[:, :m + 1].T @ w)
        if locked.shape[1]:
            w -= locked @ (locked.T @ w)
        beta = float(np.linalg.norm(w))
        m += 1
        invariant = beta < 1e-12
        if m % 10 == 0 or invariant or m == max_dim:
            t = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            theta, s = np.linalg.eigh(t)
            theta, s = theta[::-1], s[:, ::-1]
            resid = np.abs(beta * s[-1, :])
            count = 0
            while count < min(want, m) and resid[count] <= tol * 0.1:
                count += 1
            best = min(best, float(resid[0]))
            if count >= min(want, m) or invariant or m == max_dim:
                vecs = basis[:, :m] @ s[:, :count]
                return theta[:count], vecs, best
        betas.append(beta)
        q = w / beta
    raise AssertionError("unreachable")


def eigs_lanczos(op: SymmetricOperator, k: int, tol: float = 1e-8,
                 zero_threshold: float = 1e-8, seed: int = 0, shift: float = 2.0,
                 max_dim: int | None = None, max_restarts: int | None = None):
    """k smallest eigenpairs above ``zero_threshold`` via the shifted operator.

    Runs Lanczos on ``shift*I - op`` (whose largest eigenvalues are the
    smallest of ``op`` when its spectrum lies in [0, shift]), locking
    converged Ritz vectors and restarting on the deflated complement so
    repeated eigenvalues are recovered.  A final deflated run confirms no
    larger shifted eigenvalue was missed.
    """
    n = op.n
    rng = Xoshiro256(seed)
    if max_dim is None:
        max_dim = max(200, 4 * k + 40)
    max_dim = min(max_dim, n)
    if max_restarts is None:
        max_restarts = 4 * (k + 8)

    def shifted(x):
        return shift * x - op.apply(x)

    locked = np.empty((n, 0))
    values: list[float] = []
    best = np.inf
    for _ in range(max_restarts):
        nonzero = sum(shift - v > zero_threshold for v in values)
        room = n - locked.shape[1]
        if room <= 0:
            break
        need = max(k - nonzero, 0)
        want = need if need else 1
        theta, vecs, resid = _lanczos_top(shifted, n, locked, want, tol, rng,
                                          min(max_dim, room))
        best = min(best, resid)
        if theta.size == 0:
            raise ConvergenceError("Lanczos made no progress", best)
        if need == 0:
            # verification run: is anything above the k-th kept value?
            kept = _kept(values, k, zero_threshold, shift)
            if theta[0] <= kept[-1] + tol:
                break
        values.extend(float(t) for t in theta)
        vecs, _ = np.linalg.qr(np.hstack([locked, vecs]))
        locked = vecs
    else:
        raise ConvergenceError(f"eigensolver did not converge within {max_restarts} restarts",
                               best)

    # Rayleigh-Ritz on the locked space gives clean pairs
    h = locked.T @ shifted(locked)
    theta, s = np.linalg.eigh((h + h.T) / 2.0)
    vecs = locked @ s[:, ::-1]
    vals = shift - theta[::-1]
    vals, vecs = _select_nonzero(vals, vecs, k, zero_threshold)
    resid = np.linalg.norm(op.apply(vecs) - vecs * vals, axis=0)
    if resid.size and resid.max() > tol:
        raise ConvergenceError("residual above tolerance", float(resid.max()))
    return vals, canonicalize_signs(vecs)


def _kept(values, k, zero_threshold, shift):
    ordered = sorted(values, reverse=True)
    return [v for v in ordered if shift - v > zero_threshold][:k]


def sym_eigs_smallest(op: SymmetricOperator, k: int, tol: float = 1e-8,
                      zero_threshold: float = 1e-8, seed: int = 0, method: str = "auto"):
    """Eigenvalues (ascending) and n x k eigenvectors of the k smallest
    eigenvalues strictly above ``zero_threshold``.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    ``DENSE_LIMIT`` rows).  Columns are sign-canonicalized.  Within a
    repeated eigenvalue only the spanned subspace is determined.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if k > op.n:
        raise ValueError(f"k={k} exceeds operator size {op.n}")
    if method == "auto":
        method = "dense" if op.n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        return eigs_dense(op, k, zero_threshold)
    if method == "lanczos":
        return eigs_lanczos(op, k, tol, zero_threshold, seed)
    raise ValueError(f"unknown method {method!r}")


def thin_svd(z, d: int):
    """Rank-d truncated SVD ``(U_d, sigma_d, V_d)`` with canonical U signs."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not 1 <= d <= min(z.shape):
        raise ValueError(f"d={d} must lie in [1, {min(z.shape)}]")
    u, sigma, vt = np.linalg.svd(z, full_matrices=False)
    u, sigma, v = u[:, :d], sigma[:d], vt[:d].T
    flipped = canonicalize_signs(u)
    signs = np.where(np.sum(flipped * u, axis=0) < 0, -1.0, 1.0)
    return flipped, sigma.copy(), v * signs
