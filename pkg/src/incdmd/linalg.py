"""Dense SVD kernels: reduced/broken-arrow decompositions, orthonormality
repair, and the singular-value truncation policy.

All routines are pure functions on ndarrays and are safe to call
concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DriftTooLarge, InvalidInput

# Default tolerances for factor validation; callers may tighten or relax.
ORTH_TOL = 1e-10
RECON_TOL = 1e-10

# Singular values below EPS_RANK * sigma_max are treated as exact zeros when
# inverting the spectrum (every operator formula divides by sigma).
EPS_RANK = 1e-14


@dataclass(frozen=True)
class Factorization:
    """A reduced SVD ``U @ diag(S) @ V.T`` with descending singular values.

    ``V`` may be ``None`` for states that deliberately drop the right factors
    (memory-bounded discounted streaming).
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray | None

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def matrix(self) -> np.ndarray:
        if self.V is None:
            raise InvalidInput("cannot assemble a factorization without V")
        return (self.U * self.S) @ self.V.T

    def orth_defect(self) -> float:
        """Frobenius distance of U'U (and V'V when present) from identity."""
        r = self.rank
        d = np.linalg.norm(self.U.T @ self.U - np.eye(r))
        if self.V is not None:
            d = max(d, np.linalg.norm(self.V.T @ self.V - np.eye(r)))
        return float(d)

    def validate(self, orth_tol: float = ORTH_TOL) -> None:
        if self.orth_defect() > orth_tol:
            raise DriftTooLarge(f"orthogonality defect {self.orth_defect():.3e}")
        if np.any(np.diff(self.S) > 0) or np.any(self.S < 0):
            raise InvalidInput("singular values must be descending and nonnegative")


@dataclass(frozen=True)
class TruncationPolicy:
    """Rule selecting which leading singular triplets are kept.

    kind is one of ``absolute`` (sigma > value), ``relative``
    (sigma > value * sigma_max), ``fixed_rank`` (keep ``value`` triplets) or
    ``none``. The largest singular value is never dropped.
    """

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("absolute", "relative", "fixed_rank", "none"):
            raise InvalidInput(f"unknown truncation kind {self.kind!r}")
        if self.kind in ("absolute", "relative") and not self.value > 0:
            raise InvalidInput("threshold must be positive")
        if self.kind == "fixed_rank" and (int(self.value) != self.value or self.value < 1):
            raise InvalidInput("rank must be an integer >= 1")

    @classmethod
    def absolute(cls, sigma_thr: float) -> "TruncationPolicy":
        return cls("absolute", sigma_thr)

    @classmethod
    def relative(cls, fraction: float) -> "TruncationPolicy":
        return cls("relative", fraction)

    @classmethod
    def fixed_rank(cls, rank: int) -> "TruncationPolicy":
        return cls("fixed_rank", rank)

    @classmethod
    def none(cls) -> "TruncationPolicy":
        return cls("none")

    def count(self, S: np.ndarray) -> int:
        """Number of leading triplets the policy keeps (always >= 1)."""
        if self.kind == "none":
            return S.shape[0]
        if self.kind == "fixed_rank":
            return max(1, min(int(self.value), S.shape[0]))
        thr = self.value if self.kind == "absolute" else self.value * (S[0] if S.size else 0.0)
        return max(1, int(np.sum(S > thr)))


def _check_finite(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{what} contains non-finite entries")
    return M


def reduced_svd(M: np.ndarray) -> Factorization:
    """Reduced SVD with a deterministic sign convention.

    In every column of U the entry of largest magnitude is made nonnegative
    (the matching V column is flipped in tandem), so identical inputs yield
    bit-identical factors.
    """
    M = _check_finite(M)
    if M.ndim != 2:
        raise InvalidInput("expected a 2-D array")
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    V = Vt.T
    U, V = _fix_signs(U, V)
    return Factorization(U, S, V)


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    if np.any(flip):
        U = U.copy()
        V = V.copy()
        U[:, flip] *= -1.0
        V[:, flip] *= -1.0
    return U, V


def broken_arrow_svd(sigma: np.ndarray, b: np.ndarray) -> Factorization:
    """SVD of the broken-arrow matrix ``[diag(sigma) | b]`` (r x (r+1)).

    Assembles the dense matrix and calls the general kernel; a
    structure-exploiting solver would change the cost, not the contract.
    """
    sigma = _check_finite(np.atleast_1d(sigma), "sigma")
    b = _check_finite(np.atleast_1d(b), "b")
    if sigma.ndim != 1 or b.ndim != 1 or sigma.shape != b.shape:
        raise InvalidInput("sigma and b must be 1-D with equal length")
    if np.any(np.diff(sigma) > 0) or np.any(sigma < 0):
        raise InvalidInput("sigma must be descending and nonnegative")
    r = sigma.shape[0]
    M = np.zeros((r, r + 1))
    M[np.arange(r), np.arange(r)] = sigma
    M[:, r] = b
    return reduced_svd(M)


def reorthonormalize(F: Factorization) -> Factorization:
    """Restore exact orthonormality of drifted singular vectors.

    Refactors ``U diag(S) V.T`` through thin QR plus a small SVD, so the
    represented matrix is preserved up to the pre-existing drift. Output
    columns are sign-aligned with the input, which makes the repair a fixed
    point on already-orthonormal factors.
    """
    defect = F.orth_defect()
    if defect > 0.1:
        raise DriftTooLarge(f"orthogonality defect {defect:.3e} exceeds 0.1")
    Qu, Ru = np.linalg.qr(F.U)
    if F.V is None:
        M = Ru * F.S
        Um, S, Vm_t = np.linalg.svd(M)
        U = Qu @ Um
        U, _ = _align_columns(U, F.U, None)
        return Factorization(U, S, None)
    Qv, Rv = np.linalg.qr(F.V)
    M = (Ru * F.S) @ Rv.T
    Um, S, Vm_t = np.linalg.svd(M)
    U = Qu @ Um
    V = Qv @ Vm_t.T
    U, V = _align_columns(U, F.U, V)
    return Factorization(U, S, V)


def _align_columns(U, U_ref, V):
    flip = np.einsum("ij,ij->j", U, U_ref) < 0
    if np.any(flip):
        U = U.copy()
        U[:, flip] *= -1.0
        if V is not None:
            V = V.copy()
            V[:, flip] *= -1.0
    return U, V


def truncate(F: Factorization, policy: TruncationPolicy) -> Factorization:
    """Keep the leading triplets selected by the policy (never zero of them)."""
    r = policy.count(F.S)
    if r == F.rank:
        return F
    return Factorization(F.U[:, :r], F.S[:r], None if F.V is None else F.V[:, :r])


def inv_singular(S: np.ndarray) -> np.ndarray:
    """Elementwise 1/sigma with near-zero values (relative to sigma_max)
    treated as exact zeros, guarding every operator formula's inversion."""
    S = np.asarray(S, dtype=float)
    out = np.zeros_like(S)
    if S.size == 0:
        return out
    keep = S > EPS_RANK * S[0]
    out[keep] = 1.0 / S[keep]
    return out
