"""Shift-invert Lanczos for the guided window of A u = lambda B u."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class EigenSolveError(RuntimeError):
    """Factorization at the shift failed repeatedly."""


@dataclass(frozen=True)
class EigenRequest:
    shift: float
    count: int
    interval: tuple[float, float]
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.interval
        if not lo < self.shift <= hi:
            raise ValueError(f"shift {self.shift} not in ({lo}, {hi}]")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0 < self.tolerance <= 1e-4:
            raise ValueError("tolerance must lie in (0, 1e-4]")


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float


@dataclass
class EigenResult:
    """Eigenpairs sorted by value descending; ``complete`` is False when fewer than requested were found."""

    pairs: list = field(default_factory=list)
    complete: bool = True
    iterations: int = 0
    shift_used: float = 0.0

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])


def relative_residual(A, B, value, vector) -> float:
    Bu = B @ vector
    return float(np.linalg.norm(A @ vector - value * Bu) / np.linalg.norm(Bu))


def _factorize(A, B, sigma):
    op = (A - sigma * B).tocsc()
    lu = spla.splu(op)
    if np.any(np.abs(lu.U.diagonal()) < 1e-13 * max(1.0, abs(sigma))):
        raise RuntimeError("singular shifted operator")
    return lu


def _parity_key(vector, parity_of):
    if parity_of is None:
        return 0
    return 0 if parity_of(vector) == "even" else 1


def _b_orthonormalize(B, values, vectors):
    """Re-orthonormalize clustered eigenvectors with respect to B."""
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    out = vectors.copy()
    scale = np.max(np.abs(values)) if len(values) else 1.0
    i = 0
    while i < len(values):
        j = i + 1
        while j < len(values) and abs(values[j] - values[i]) < 1e-9 * scale:
            j += 1
        block = out[:, i:j]
        G = block.T @ (B @ block)
        L = np.linalg.cholesky(G)
        out[:, i:j] = np.linalg.solve(L, block.T).T
        i = j
    for k in range(out.shape[1]):
        out[:, k] /= np.sqrt(out[:, k] @ (B @ out[:, k]))
    return values, out


def solve(A, B, request: EigenRequest, parity_of=None, max_count: int | None = None) -> EigenResult:
    """Eigenpairs of A u = lambda B u inside ``request.interval`` closest below the shift.

    The requested count is a starting block size; it grows until the lowest
    returned eigenvalue drops below the interval (so every eigenvalue in the
    interval is captured) or ``max_count`` is reached. Pass ``count`` and
    ``max_count`` equal to take exactly ``count`` pairs.
    """
    lo, hi = request.interval
    n = A.shape[0]
    rng = np.random.default_rng(request.seed)
    v0 = rng.standard_normal(n)
    sigma = request.shift
    scale = max(abs(lo), abs(hi), 1.0)
    lu = None
    for attempt in range(4):
        try:
            lu = _factorize(A, B, sigma)
            break
        except RuntimeError as err:
            if attempt == 3:
                raise EigenSolveError(f"factorization failed at shift {sigma}: {err}") from err
            sigma = sigma + (attempt + 1) * 1e-7 * scale
            log.warning("retrying shift-invert with perturbed shift %.12g", sigma)
    opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)

    cap = n - 2 if max_count is None else min(max_count, n - 2)
    k = min(request.count, cap)
    t0 = time.perf_counter()
    iterations = 0
    while True:
        iterations += 1
        vals, vecs = spla.eigsh(A, k=k, M=B, sigma=sigma, which="LM", OPinv=opinv, v0=v0,
                                tol=request.tolerance * 1e-3)
        below = np.any(vals < lo)
        if below or k >= cap:
            break
        k = min(cap, max(k + 4, int(1.5 * k)))
    vals, vecs = _b_orthonormalize(B, vals, vecs)
    keep = (vals > lo) & (vals <= hi)
    pairs = []
    for val, vec in zip(vals[keep], vecs[:, keep].T):
        res = relative_residual(A, B, val, vec)
        if res > request.tolerance:
            log.warning("eigenpair %.10g residual %.3e above tolerance", val, res)
        pairs.append(EigenPair(float(val), vec, res))
    # stable labelling: value descending, even before odd on exact ties
    pairs.sort(key=lambda p: (-round(p.value / scale, 12), _parity_key(p.vector, parity_of)))
    complete = len(pairs) >= request.count
    log.info("eigensolve n=%d shift=%.8g found=%d iterations=%d time=%.2fs", n, sigma, len(pairs),
             iterations, time.perf_counter() - t0)
    return EigenResult(pairs=pairs, complete=complete, iterations=iterations, shift_used=float(sigma))


def dense_eigenvalues(A, B) -> np.ndarray:
    """Dense generalized eigenvalues (descending) used as a reference on small problems."""
    from scipy.linalg import eigh

    Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
    return eigh(Ad, Bd, eigvals_only=True)[::-1]
