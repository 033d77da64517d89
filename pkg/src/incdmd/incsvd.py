"""Incrementally maintained SVD of a discounted or sliding-window data matrix.

A state tracks ``U diag(S) V.T`` for either

* the discounted matrix ``[rho^(m-1) x_1, ..., rho x_{m-1}, x_m]`` updated one
  column at a time, or
* the sliding window ``[x_{k-w+1}, ..., x_k]`` updated by removing the oldest
  column and appending the newest.

Every update reduces to a small dense SVD: appending a column yields a
broken-arrow matrix ``[diag(S) | U'x]`` (plus one extra row when the new
column leaves the current subspace), removing one subtracts a rank-one term
from ``diag(S)``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    BufferOverflow,
    BufferUnderflow,
    ConditioningError,
    InvalidInput,
    MissingRightFactors,
    ModeError,
    ShapeError,
    WindowSizeMismatch,
)
from .linalg import (
    Factorization,
    TruncationPolicy,
    _check_finite,
    reduced_svd,
    reorthonormalize,
)

# Discounts below this make rho^-1 * x overwhelm the retained spectrum.
MIN_RHO = 0.05

# New-direction residuals below this (relative to the data scale) are noise.
GROW_RTOL = 1e-13

# Orthogonality drift triggering a repair of the big factors.
ORTH_WATCHDOG = 1e-11

# A forced spurious singular value after a downdate must be this small
# relative to sigma_max, else the state is too damaged to continue.
SPURIOUS_RTOL = 1e-8

WEIGHTED = "weighted"
WINDOWED = "windowed"


@dataclass
class UpdateResult:
    """Outcome of a column update.

    ``v_last_row`` is the last row of the small-SVD right factor (the new
    column's coordinates in the updated right basis); its norm is at most 1.
    ``left_rotation`` maps the previous left basis (extended by the residual
    direction when ``grew``) onto the new one.
    """

    state: "SvdState"
    v_last_row: np.ndarray
    left_rotation: np.ndarray
    grew: bool


@dataclass
class SvdState:
    """Mutable SVD of the current discounted or windowed data matrix.

    Single-writer: one caller mutates a state at a time; distinct states are
    independent. ``store_v=False`` (discounted mode only) drops the right
    factors so storage stays independent of the stream length.
    """

    factors: Factorization
    mode: str
    rho: float = 1.0
    w: int | None = None
    store_v: bool = True
    ncols: int = 0
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy.none)
    window: deque | None = None
    last_downdate_check: float | None = None

    # -- construction --------------------------------------------------

    @classmethod
    def from_batch(
        cls,
        X: np.ndarray,
        mode: str,
        rho: float = 1.0,
        w: int | None = None,
        store_v: bool | None = None,
        truncation: TruncationPolicy | None = None,
        allow_unit_rho: bool = False,
    ) -> "SvdState":
        """Initialize from a batch of columns.

        Discounted mode scales column j of an m0-column batch by
        ``rho^(m0-1-j)`` before decomposing, so the state represents the same
        matrix a column-by-column stream would have produced. Windowed mode
        requires exactly ``w`` columns and fills the ring buffer with them.
        """
        X = _check_finite(X)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidInput("need a 2-D batch with at least one column")
        truncation = truncation or TruncationPolicy.none()
        m0 = X.shape[1]
        if mode == WEIGHTED:
            if not 0.0 < rho <= 1.0:
                raise InvalidInput("rho must lie in (0, 1]")
            if rho == 1.0 and not allow_unit_rho:
                raise InvalidInput("rho=1 in discounted mode requires explicit opt-in")
            if rho < MIN_RHO:
                raise ConditioningError(f"rho={rho} below the stable minimum {MIN_RHO}")
            weights = rho ** np.arange(m0 - 1, -1, -1)
            F = reduced_svd(X * weights)
            store = bool(store_v)
            F = _truncate_fact(F, truncation, store)
            return cls(F, WEIGHTED, rho=rho, store_v=store, ncols=m0, truncation=truncation)
        if mode == WINDOWED:
            if w is None or w < 2:
                raise InvalidInput("windowed mode needs a window width w >= 2")
            if m0 != w:
                raise WindowSizeMismatch(f"got {m0} columns for a window of {w}")
            if rho != 1.0:
                raise InvalidInput("windowed mode uses rho = 1")
            F = _truncate_fact(reduced_svd(X), truncation, store_v=True)
            buf = deque(np.array(X[:, j]) for j in range(m0))
            return cls(F, WINDOWED, rho=1.0, w=w, store_v=True, ncols=m0,
                       truncation=truncation, window=buf)
        raise InvalidInput(f"unknown mode {mode!r}")

    def copy(self) -> "SvdState":
        F = self.factors
        return SvdState(
            Factorization(F.U.copy(), F.S.copy(), None if F.V is None else F.V.copy()),
            self.mode,
            rho=self.rho,
            w=self.w,
            store_v=self.store_v,
            ncols=self.ncols,
            truncation=self.truncation,
            window=None if self.window is None else deque(c.copy() for c in self.window),
            last_downdate_check=self.last_downdate_check,
        )

    @property
    def rank(self) -> int:
        return self.factors.rank

    def matrix(self) -> np.ndarray:
        return self.factors.matrix()

    # -- updates -------------------------------------------------------

    def weighted_update(self, x: np.ndarray) -> UpdateResult:
        """Append a column to the discounted stream: X <- [rho X, x]."""
        if self.mode != WEIGHTED:
            raise ModeError("weighted_update requires a discounted-mode state")
        res = self._append(x, self.rho)
        self.ncols += 1
        return res

    def append_column(self, x: np.ndarray) -> UpdateResult:
        """Append a column with weight one (no discounting of the past)."""
        if self.mode == WINDOWED:
            if len(self.window) >= self.w:
                raise BufferOverflow("window already holds w columns; downdate first")
            x = _check_finite(np.asarray(x, dtype=float).ravel(), "column")
            res = self._append(x, 1.0)
            self.window.append(x.copy())
            self.ncols += 1
            return res
        res = self._append(x, 1.0)
        self.ncols += 1
        return res

    def downdate_oldest(self) -> "SvdState":
        """Remove the oldest window column's contribution from the factors.

        Subtracting the departing column leaves the padded matrix
        ``[0 | x_2 ... x_w]``; its factors follow from the small dense SVD of
        ``diag(S) - (U'x_old)(first row of the completed right basis)``. When
        the retained rank exceeds what w-1 columns can support, the padding
        creates one spurious near-zero singular value, which is dropped after
        checking it really is negligible.
        """
        if self.mode != WINDOWED:
            raise ModeError("downdate_oldest requires a windowed state")
        if self.window is None or len(self.window) < self.w:
            raise BufferUnderflow("window buffer is not full")
        U, S, V = self.factors.U, self.factors.S, self.factors.V
        n, r = U.shape
        w = self.w
        x_old = self.window[0]
        d = U.T @ x_old
        v1 = V[0, :].copy()

        # Component of the first-column selector e1 outside range(V); a second
        # orthogonalization pass keeps k1 orthonormal even when beta is tiny.
        k1 = -(V @ v1)
        k1[0] += 1.0
        k1 -= V @ (V.T @ k1)
        beta = float(np.linalg.norm(k1))
        if beta > 1e-13:
            k1 /= beta
            small = np.diag(S) - np.outer(d, v1)
            small = np.hstack([small, (-k1[0]) * d[:, None]])
            row1 = np.concatenate([v1, [k1[0]]])
            v_basis = np.hstack([V, k1[:, None]])
        else:
            small = np.diag(S) - np.outer(d, v1)
            row1 = v1
            v_basis = V
        Fs = reduced_svd(small)

        keep = r
        if r > min(n, w - 1):
            spurious = Fs.S[-1]
            if spurious > SPURIOUS_RTOL * max(Fs.S[0], np.finfo(float).tiny):
                raise ConditioningError(
                    f"downdate left a non-negligible trailing value {spurious:.3e}"
                )
            keep = r - 1
        Vs = Fs.V[:, :keep]
        self.last_downdate_check = float(np.abs(row1 @ Vs).max()) if keep else 0.0
        U_new = U @ Fs.U[:, :keep]
        V_new = (v_basis @ Vs)[1:, :]
        self.factors = self._watchdog(Factorization(U_new, Fs.S[:keep], V_new))
        self.window.popleft()
        self.ncols -= 1
        return self

    def window_update(self, x: np.ndarray) -> UpdateResult:
        """Slide the window one column: drop the oldest, append ``x``."""
        self.downdate_oldest()
        return self.append_column(x)

    def augment_rows(self, Gamma: np.ndarray) -> Factorization:
        """SVD of the represented matrix with ``Gamma`` stacked underneath.

        Works from the stored factors alone: the small matrix
        ``[diag(S); Gamma V]`` (extended by the part of Gamma's rows outside
        the row space) is decomposed and its factors lifted.
        """
        U, S, V = self.factors.U, self.factors.S, self.factors.V
        if V is None:
            raise MissingRightFactors("this state does not store right factors")
        Gamma = _check_finite(np.atleast_2d(np.asarray(Gamma, dtype=float)), "Gamma")
        m = V.shape[0]
        if Gamma.shape[1] != m:
            raise ShapeError(f"Gamma has {Gamma.shape[1]} columns, state has {m}")
        el = Gamma.shape[0]
        r = S.shape[0]
        if el == 0:
            return Factorization(U.copy(), S.copy(), V.copy())
        C = Gamma @ V
        G_perp = Gamma.T - V @ C.T
        Q = scipy.linalg.orth(G_perp) if np.linalg.norm(G_perp) > 0 else np.zeros((m, 0))
        lp = Q.shape[1]
        if lp:
            D = Q.T @ G_perp
            K = np.block([[np.diag(S), np.zeros((r, lp))], [C, D.T]])
            v_basis = np.hstack([V, Q])
        else:
            K = np.vstack([np.diag(S), C])
            v_basis = V
        Fk = reduced_svd(K)
        n = U.shape[0]
        U_c = np.vstack([U @ Fk.U[:r, :], Fk.U[r:, :]])
        return Factorization(U_c, Fk.S, v_basis @ Fk.V)

    # -- internals -----------------------------------------------------

    def _append(self, x: np.ndarray, rho: float) -> UpdateResult:
        x = _check_finite(np.asarray(x, dtype=float).ravel(), "column")
        U, S, V = self.factors.U, self.factors.S, self.factors.V
        n, r = U.shape
        if x.shape[0] != n:
            raise ShapeError(f"column has length {x.shape[0]}, state is {n}-dimensional")
        if rho < MIN_RHO:
            raise ConditioningError(f"rho={rho} below the stable minimum {MIN_RHO}")

        m = U.T @ x
        p = x - U @ m
        pn = float(np.linalg.norm(p))
        scale = max(float(S[0]) if S.size else 0.0, float(np.linalg.norm(x)))
        grew = pn > GROW_RTOL * scale and r < n

        if grew:
            small = np.zeros((r + 1, r + 1))
            small[:r, :r] = np.diag(S)
            small[:r, r] = m / rho
            small[r, r] = pn / rho
            F = reduced_svd(small)
            U_ext = np.hstack([U, (p / pn)[:, None]])
        else:
            small = np.hstack([np.diag(S), (m / rho)[:, None]])
            F = reduced_svd(small)
            U_ext = U

        S_new = rho * F.S
        keep = self.truncation.count(S_new)
        rot = F.U[:, :keep]
        v_row = F.V[-1, :keep].copy()
        U_new = U_ext @ rot
        V_new = None
        if V is not None:
            V_new = np.empty((V.shape[0] + 1, keep))
            V_new[:-1, :] = V @ F.V[:-1, :keep]
            V_new[-1, :] = v_row
        fact = self._watchdog(Factorization(U_new, S_new[:keep], V_new))
        if fact.V is not None:
            v_row = fact.V[-1, :].copy()
        self.factors = fact
        return UpdateResult(self, v_row, rot, grew)

    def _watchdog(self, F: Factorization) -> Factorization:
        if F.orth_defect() <= ORTH_WATCHDOG:
            return F
        try:
            return reorthonormalize(F)
        except Exception as exc:  # drift beyond repair: caller must rebatch
            raise ConditioningError(f"orthogonality repair failed: {exc}") from exc


def init_from_batch(
    X: np.ndarray,
    mode: str,
    rho: float = 1.0,
    w: int | None = None,
    store_v: bool | None = None,
    truncation: TruncationPolicy | None = None,
    allow_unit_rho: bool = False,
) -> SvdState:
    """Functional alias for :meth:`SvdState.from_batch`."""
    return SvdState.from_batch(
        X, mode, rho=rho, w=w, store_v=store_v,
        truncation=truncation, allow_unit_rho=allow_unit_rho,
    )


def _truncate_fact(F: Factorization, policy: TruncationPolicy, store_v: bool) -> Factorization:
    keep = policy.count(F.S)
    V = F.V[:, :keep] if store_v else None
    return Factorization(F.U[:, :keep], F.S[:keep], V)
