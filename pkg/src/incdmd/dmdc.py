"""Time-varying DMD with exogenous input.

Tracks the operator pair (A, B) minimizing the discounted or windowed cost
``sum ||y_j - A x_j - B g_j||^2`` by keeping two incremental SVDs in
lockstep: one of the state matrix X (supplying the reduced-order basis) and
one of the input-augmented matrix [X; Gamma] (supplying the least-squares
geometry). Each new triplet applies the shared-residual rank-one correction
to both operators.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateData,
    InvalidInput,
    ModeError,
    ShapeError,
    WindowSizeMismatch,
)
from .dmd import FULL_OPERATOR_MAX_N, Spectrum, StreamConfig, _spectrum
from .incsvd import WEIGHTED, WINDOWED, SvdState
from .linalg import Factorization, TruncationPolicy, _check_finite, inv_singular, reduced_svd


@dataclass
class DmdcModel:
    """Current (A, B) pair in full and reduced form.

    ``svd_aug`` tracks the augmented matrix [X; Gamma]; ``svd_state`` tracks
    X alone and its left factors are the projection basis. Both advance one
    column per step. Single-writer, transferable between threads.
    """

    config: StreamConfig | None
    svd_aug: SvdState
    svd_state: SvdState
    A_full: np.ndarray | None
    B_full: np.ndarray | None
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    l: int
    step: int = 0
    y_window: deque | None = None
    last_rebuild: bool = False

    @property
    def n(self) -> int:
        return self.svd_state.factors.U.shape[0]

    @property
    def rank(self) -> int:
        return self.svd_state.rank

    @property
    def basis(self) -> np.ndarray:
        return self.svd_state.factors.U

    def operator_pair(self) -> tuple[np.ndarray, np.ndarray]:
        if self.A_full is not None:
            return self.A_full, self.B_full
        U = self.basis
        return U @ self.A_tilde @ U.T, U @ self.B_tilde

    def apply(self, x: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        if self.A_full is not None:
            return self.A_full @ x + self.B_full @ gamma
        U = self.basis
        return U @ (self.A_tilde @ (U.T @ x) + self.B_tilde @ gamma)

    def copy(self) -> "DmdcModel":
        return DmdcModel(
            self.config,
            self.svd_aug.copy(),
            self.svd_state.copy(),
            None if self.A_full is None else self.A_full.copy(),
            None if self.B_full is None else self.B_full.copy(),
            self.A_tilde.copy(),
            self.B_tilde.copy(),
            self.l,
            step=self.step,
            y_window=None if self.y_window is None else deque(c.copy() for c in self.y_window),
            last_rebuild=self.last_rebuild,
        )

    # -- streaming -----------------------------------------------------

    def weighted_step(self, x, y, gamma) -> "DmdcModel":
        """Fold one (x, y, input) triplet into the discounted operators."""
        self._require_mode(WEIGHTED)
        x, y, gamma = self._check_triplet(x, y, gamma)
        self.last_rebuild = False
        res = y - self.apply(x, gamma)
        upd_aug = self.svd_aug.weighted_update(np.concatenate([x, gamma]))
        upd_state = self.svd_state.weighted_update(x)
        self._correct(res, upd_aug, upd_state)
        self.step += 1
        return self

    def windowed_step(self, x, y, gamma) -> "DmdcModel":
        """Slide both window SVDs one triplet forward; conditioning failures
        trigger a transparent rebuild from the ring buffers."""
        self._require_mode(WINDOWED)
        x, y, gamma = self._check_triplet(x, y, gamma)
        self.last_rebuild = False
        xc = np.concatenate([x, gamma])
        xc_cols = list(self.svd_aug.window)
        res = y - self.apply(x, gamma)
        try:
            upd_aug = self.svd_aug.window_update(xc)
            upd_state = self.svd_state.window_update(x)
        except ConditioningError:
            self._rebuild(xc_cols, xc, y)
            return self
        self.y_window.popleft()
        self.y_window.append(y.copy())
        self._correct(res, upd_aug, upd_state)
        self.step += 1
        return self

    def step_triplet(self, x, y, gamma) -> "DmdcModel":
        if self.config is None:
            raise ModeError("batch-only model: build with a StreamConfig to stream")
        if self.config.mode == WEIGHTED:
            return self.weighted_step(x, y, gamma)
        return self.windowed_step(x, y, gamma)

    # -- analysis ------------------------------------------------------

    def predict_with_input(self, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Freeze the operators and roll them over the given input sequence
        (reduced coordinates internally, lifted on output)."""
        x0 = np.asarray(x0, dtype=float).ravel()
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if x0.shape[0] != self.n:
            raise ShapeError("x0 has the wrong dimension")
        if inputs.shape[0] != self.l:
            raise ShapeError(f"inputs must have {self.l} rows")
        h = inputs.shape[1]
        U = self.basis
        z = U.T @ x0
        out = np.empty((self.n, h))
        for j in range(h):
            z = self.A_tilde @ z + self.B_tilde @ inputs[:, j]
            out[:, j] = U @ z
        return out

    def spectrum(self, kind: str = "projected", dt: float | None = None) -> Spectrum:
        full = None
        if kind == "exact":
            full = self.operator_pair()[0]
        return _spectrum(self.A_tilde, self.basis, full, kind,
                         dt if dt is not None else (self.config.dt if self.config else 1.0))

    # -- internals -------------------------------------------------------

    def _require_mode(self, mode: str) -> None:
        if self.config is None or self.config.mode != mode:
            raise ModeError(f"model is not configured for {mode} streaming")

    def _check_triplet(self, x, y, gamma):
        x = _check_finite(np.asarray(x, dtype=float).ravel(), "x")
        y = _check_finite(np.asarray(y, dtype=float).ravel(), "y")
        gamma = np.asarray(gamma, dtype=float).ravel() if gamma is not None else np.zeros(0)
        gamma = _check_finite(gamma, "gamma")
        if x.shape[0] != self.n or y.shape[0] != self.n:
            raise ShapeError("snapshot pair has the wrong dimension")
        if gamma.shape[0] != self.l:
            raise ShapeError(f"input has length {gamma.shape[0]}, expected {self.l}")
        return x, y, gamma

    def _correct(self, res, upd_aug, upd_state) -> None:
        n = self.n
        Uc = self.svd_aug.factors.U
        sc_inv = inv_singular(self.svd_aug.factors.S)
        g = (upd_aug.v_last_row * sc_inv) @ Uc.T
        Us = self.svd_state.factors.U
        if self.A_full is not None:
            self.A_full += np.outer(res, g[:n])
            self.B_full += np.outer(res, g[n:])
            self.A_tilde = Us.T @ self.A_full @ Us
            self.B_tilde = Us.T @ self.B_full
        else:
            rot = upd_state.left_rotation
            r_old = rot.shape[0] - (1 if upd_state.grew else 0)
            B_rot = rot[:r_old, :]
            res_r = Us.T @ res
            self.A_tilde = B_rot.T @ self.A_tilde @ B_rot + np.outer(res_r, g[:n] @ Us)
            self.B_tilde = B_rot.T @ self.B_tilde + np.outer(res_r, g[n:])

    def _rebuild(self, xc_cols: list, xc: np.ndarray, y: np.ndarray) -> None:
        n = self.n
        XC = np.column_stack(xc_cols[1:] + [xc])
        Y = np.column_stack(list(self.y_window)[1:] + [y.copy()])
        fresh = batch_dmdc(XC[:n, :], Y, XC[n:, :],
                           trunc_aug=self.svd_aug.truncation,
                           trunc_state=self.svd_state.truncation,
                           config=self.config)
        self.svd_aug = fresh.svd_aug
        self.svd_state = fresh.svd_state
        self.A_full = fresh.A_full
        self.B_full = fresh.B_full
        self.A_tilde = fresh.A_tilde
        self.B_tilde = fresh.B_tilde
        self.y_window = fresh.y_window
        self.last_rebuild = True
        self.step += 1


def batch_dmdc(
    X: np.ndarray,
    Y: np.ndarray,
    Gamma: np.ndarray | None,
    trunc_aug: TruncationPolicy | None = None,
    trunc_state: TruncationPolicy | None = None,
    config: StreamConfig | None = None,
) -> DmdcModel:
    """Block least-squares fit of ``[A B]`` against the stacked regressor
    [X; Gamma] (minimum-norm under rank deficiency), with the reduced pair
    projected onto the leading left singular vectors of X.

    ``trunc_aug`` caps the augmented rank p; ``trunc_state`` caps the basis
    rank r. Fixed-rank policies must satisfy r <= p.
    """
    X = _check_finite(np.atleast_2d(np.asarray(X, dtype=float)))
    Y = _check_finite(np.atleast_2d(np.asarray(Y, dtype=float)))
    n, m = X.shape
    if Gamma is None:
        Gamma = np.zeros((0, m))
    Gamma = _check_finite(np.atleast_2d(np.asarray(Gamma, dtype=float)), "Gamma")
    if X.shape != Y.shape:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} differ")
    if Gamma.shape[1] != m:
        raise ShapeError(f"Gamma has {Gamma.shape[1]} columns, X has {m}")
    el = Gamma.shape[0]

    trunc_aug = (config.truncation if config is not None and trunc_aug is None else trunc_aug) \
        or TruncationPolicy.none()
    trunc_state = (config.truncation if config is not None and trunc_state is None else trunc_state) \
        or TruncationPolicy.none()
    if trunc_aug.kind == "fixed_rank" and trunc_state.kind == "fixed_rank" \
            and trunc_state.value > trunc_aug.value:
        raise InvalidInput("basis rank r must not exceed augmented rank p")

    mode = config.mode if config is not None else WEIGHTED
    rho = config.rho if (config is not None and mode == WEIGHTED) else 1.0
    weights = rho ** np.arange(m - 1, -1, -1) if rho != 1.0 else np.ones(m)
    Xw = X * weights if rho != 1.0 else X
    Yw = Y * weights if rho != 1.0 else Y
    Gw = Gamma * weights if rho != 1.0 else Gamma
    XCw = np.vstack([Xw, Gw])

    Fc = reduced_svd(XCw)
    if Fc.S[0] <= 0:
        raise DegenerateData("augmented regressor matrix is zero")
    p = trunc_aug.count(Fc.S)
    Uc, Sc, Vc = Fc.U[:, :p], Fc.S[:p], Fc.V[:, :p]
    Fs = reduced_svd(Xw)
    r = trunc_state.count(Fs.S)
    Us, Ss, Vs = Fs.U[:, :r], Fs.S[:r], Fs.V[:, :r]

    left = Yw @ (Vc * inv_singular(Sc))
    A_full = left @ Uc[:n, :].T
    B_full = left @ Uc[n:, :].T
    A_tilde = Us.T @ A_full @ Us
    B_tilde = Us.T @ B_full

    maintain_full = config.resolve_full(n) if config is not None else n <= FULL_OPERATOR_MAX_N
    y_window = None
    if mode == WINDOWED:
        if config.w != m:
            raise WindowSizeMismatch(f"windowed init needs exactly w={config.w} pairs, got {m}")
        svd_aug = SvdState(
            Factorization(Uc, Sc, Vc), WINDOWED, rho=1.0, w=m, store_v=True, ncols=m,
            truncation=trunc_aug,
            window=deque(np.concatenate([X[:, j], Gamma[:, j]]) for j in range(m)),
        )
        svd_state = SvdState(
            Factorization(Us, Ss, Vs), WINDOWED, rho=1.0, w=m, store_v=True, ncols=m,
            truncation=trunc_state, window=deque(np.array(X[:, j]) for j in range(m)),
        )
        y_window = deque(np.array(Y[:, j]) for j in range(m))
    else:
        store_v = config is None
        svd_aug = SvdState(Factorization(Uc, Sc, Vc if store_v else None), WEIGHTED,
                           rho=rho, store_v=store_v, ncols=m, truncation=trunc_aug)
        svd_state = SvdState(Factorization(Us, Ss, Vs if store_v else None), WEIGHTED,
                             rho=rho, store_v=store_v, ncols=m, truncation=trunc_state)
    return DmdcModel(
        config, svd_aug, svd_state,
        A_full if maintain_full else None, B_full if maintain_full else None,
        A_tilde, B_tilde, el, step=m, y_window=y_window,
    )
