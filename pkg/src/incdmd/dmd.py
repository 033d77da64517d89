"""Time-varying DMD operator tracking.

A model holds the least-squares operator fitted to a discounted or sliding
window of snapshot pairs, kept in sync with an incrementally updated SVD of
the regressor matrix. Each new pair (x, y) costs one small SVD plus a
rank-one operator correction

    A <- A + (y - A x) v_row diag(1/S) U.T

where (U, S) are the updated left factors and v_row is the new column's
coordinate row in the updated right basis.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateData,
    InvalidInput,
    MissingState,
    ModeError,
    NumericalError,
    ShapeError,
)
from .incsvd import WEIGHTED, WINDOWED, SvdState, UpdateResult
from .linalg import Factorization, TruncationPolicy, _check_finite, inv_singular, reduced_svd

# Operators up to this state dimension keep the dense n x n form by default.
FULL_OPERATOR_MAX_N = 512


@dataclass(frozen=True)
class StreamConfig:
    """Streaming setup shared by the DMD and DMDc trackers.

    Discounted mode needs ``rho`` strictly inside (0, 1); windowed mode pins
    ``rho`` to 1 and slides a width-``w`` window. ``maintain_full=None``
    resolves to True for state dimensions up to 512.
    """

    mode: str = WEIGHTED
    rho: float = 0.9
    w: int | None = None
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy.none)
    dt: float = 1.0
    maintain_full: bool | None = None

    def __post_init__(self):
        if self.mode == WEIGHTED:
            if not 0.0 < self.rho < 1.0:
                raise InvalidInput("discounted streaming needs rho in (0, 1)")
        elif self.mode == WINDOWED:
            if self.rho != 1.0:
                raise InvalidInput("windowed streaming uses rho = 1")
            if self.w is None or self.w < 2:
                raise InvalidInput("windowed streaming needs a window width w >= 2")
        else:
            raise InvalidInput(f"unknown mode {self.mode!r}")
        if not self.dt > 0:
            raise InvalidInput("dt must be positive")

    def resolve_full(self, n: int) -> bool:
        if self.maintain_full is None:
            return n <= FULL_OPERATOR_MAX_N
        return self.maintain_full


@dataclass(frozen=True)
class Spectrum:
    """Eigen-decomposition of the reduced operator, sorted by descending
    eigenvalue magnitude (ties: descending real part, then imaginary)."""

    eigenvalues: np.ndarray
    eigvecs: np.ndarray
    modes: np.ndarray
    cont_eigenvalues: np.ndarray
    kind: str


@dataclass
class DmdModel:
    """Current DMD operator in full and reduced form.

    ``A_full`` is the n x n operator (None when only the reduced recursion is
    kept); ``A_tilde`` is its projection onto the current left singular basis.
    Single-writer: one caller steps a model at a time.
    """

    config: StreamConfig | None
    svd: SvdState
    A_full: np.ndarray | None
    A_tilde: np.ndarray
    step: int = 0
    y_window: deque | None = None
    last_rebuild: bool = False

    @property
    def n(self) -> int:
        return self.svd.factors.U.shape[0]

    @property
    def rank(self) -> int:
        return self.svd.rank

    @property
    def basis(self) -> np.ndarray:
        return self.svd.factors.U

    def operator(self) -> np.ndarray:
        """The full operator, materialized from the reduced form if needed."""
        if self.A_full is not None:
            return self.A_full
        U = self.basis
        return U @ self.A_tilde @ U.T

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.A_full is not None:
            return self.A_full @ x
        U = self.basis
        return U @ (self.A_tilde @ (U.T @ x))

    def copy(self) -> "DmdModel":
        return DmdModel(
            self.config,
            self.svd.copy(),
            None if self.A_full is None else self.A_full.copy(),
            self.A_tilde.copy(),
            step=self.step,
            y_window=None if self.y_window is None else deque(c.copy() for c in self.y_window),
            last_rebuild=self.last_rebuild,
        )

    # -- streaming -----------------------------------------------------

    def weighted_step(self, x: np.ndarray, y: np.ndarray) -> "DmdModel":
        """Fold one snapshot pair into the discounted operator."""
        self._require_mode(WEIGHTED)
        x, y = self._check_pair(x, y)
        self.last_rebuild = False
        res = y - self.apply(x)
        upd = self.svd.weighted_update(x)
        self._correct(res, upd)
        self.step += 1
        return self

    def windowed_step(self, x: np.ndarray, y: np.ndarray) -> "DmdModel":
        """Slide the window one pair forward; rebuilds from the ring buffers
        when the incremental update hits a conditioning failure."""
        self._require_mode(WINDOWED)
        x, y = self._check_pair(x, y)
        self.last_rebuild = False
        x_cols = list(self.svd.window)
        res = y - self.apply(x)
        try:
            upd = self.svd.window_update(x)
        except ConditioningError:
            self._rebuild(x_cols, x, y)
            return self
        self.y_window.popleft()
        self.y_window.append(y.copy())
        self._correct(res, upd)
        self.step += 1
        return self

    def step_pair(self, x: np.ndarray, y: np.ndarray) -> "DmdModel":
        if self.config is None:
            raise ModeError("batch-only model: build with a StreamConfig to stream")
        if self.config.mode == WEIGHTED:
            return self.weighted_step(x, y)
        return self.windowed_step(x, y)

    # -- analysis ------------------------------------------------------

    def spectrum(self, kind: str = "projected", dt: float | None = None) -> Spectrum:
        """Eigenvalues and (projected or exact) modes of the tracked dynamics."""
        return _spectrum(self.A_tilde, self.basis, self.operator() if kind == "exact" else None,
                         kind, dt if dt is not None else (self.config.dt if self.config else 1.0))

    def predict(self, x0: np.ndarray, h: int) -> np.ndarray:
        """Freeze the operator and roll it ``h`` steps from ``x0`` in reduced
        coordinates; returns the n x h matrix of lifted predictions."""
        if h < 1:
            raise InvalidInput("horizon must be at least 1")
        x0 = np.asarray(x0, dtype=float).ravel()
        if x0.shape[0] != self.n:
            raise ShapeError("x0 has the wrong dimension")
        U = self.basis
        z = U.T @ x0
        out = np.empty((self.n, h))
        for j in range(h):
            z = self.A_tilde @ z
            out[:, j] = U @ z
        return out

    # -- internals -------------------------------------------------------

    def _require_mode(self, mode: str) -> None:
        if self.config is None or self.config.mode != mode:
            raise ModeError(f"model is not configured for {mode} streaming")

    def _check_pair(self, x, y):
        x = _check_finite(np.asarray(x, dtype=float).ravel(), "x")
        y = _check_finite(np.asarray(y, dtype=float).ravel(), "y")
        if x.shape[0] != self.n or y.shape[0] != self.n:
            raise ShapeError("snapshot pair has the wrong dimension")
        return x, y

    def _correct(self, res: np.ndarray, upd: UpdateResult) -> None:
        U1 = self.svd.factors.U
        s_inv = inv_singular(self.svd.factors.S)
        if self.A_full is not None:
            g = (upd.v_last_row * s_inv) @ U1.T
            self.A_full += np.outer(res, g)
            self.A_tilde = U1.T @ self.A_full @ U1
        else:
            rot = upd.left_rotation
            r_old = rot.shape[0] - (1 if upd.grew else 0)
            B = rot[:r_old, :]
            self.A_tilde = B.T @ self.A_tilde @ B \
                + np.outer(U1.T @ res, upd.v_last_row * s_inv)

    def _rebuild(self, x_cols: list, x: np.ndarray, y: np.ndarray) -> None:
        X = np.column_stack(x_cols[1:] + [x])
        Y = np.column_stack(list(self.y_window)[1:] + [y.copy()])
        fresh = batch_dmd(X, Y, config=self.config)
        self.svd = fresh.svd
        self.A_full = fresh.A_full
        self.A_tilde = fresh.A_tilde
        self.y_window = fresh.y_window
        self.last_rebuild = True
        self.step += 1


def batch_dmd(
    X: np.ndarray,
    Y: np.ndarray,
    truncation: TruncationPolicy | None = None,
    config: StreamConfig | None = None,
) -> DmdModel:
    """Block least-squares fit ``min ||Y - A X||_F`` via the (truncated) SVD
    of X; under rank deficiency this is the minimum-norm minimizer.

    With a :class:`StreamConfig` the snapshot columns are weighted per the
    configured mode and the returned model is ready to stream; without one
    the fit is unweighted and the model is analysis-only.
    """
    X = _check_finite(np.atleast_2d(np.asarray(X, dtype=float)))
    Y = _check_finite(np.atleast_2d(np.asarray(Y, dtype=float)))
    if X.shape != Y.shape:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} differ")
    n, m = X.shape
    if config is not None:
        truncation = config.truncation
    trunc = truncation or TruncationPolicy.none()

    mode = config.mode if config is not None else WEIGHTED
    rho = config.rho if (config is not None and mode == WEIGHTED) else 1.0
    weights = rho ** np.arange(m - 1, -1, -1) if rho != 1.0 else np.ones(m)
    Xw = X * weights if rho != 1.0 else X
    Yw = Y * weights if rho != 1.0 else Y

    F = reduced_svd(Xw)
    if F.S[0] <= 0:
        raise DegenerateData("regressor matrix is zero")
    if trunc.kind == "absolute" and F.S[0] <= trunc.value:
        raise DegenerateData("every singular value sits below the threshold")
    keep = trunc.count(F.S)
    U, S, V = F.U[:, :keep], F.S[:keep], F.V[:, :keep]

    maintain_full = config.resolve_full(n) if config is not None else n <= FULL_OPERATOR_MAX_N
    A_full = (Yw @ (V * inv_singular(S))) @ U.T
    A_tilde = U.T @ A_full @ U

    y_window = None
    if mode == WINDOWED:
        if config.w != m:
            from .errors import WindowSizeMismatch

            raise WindowSizeMismatch(f"windowed init needs exactly w={config.w} pairs, got {m}")
        svd = SvdState(
            Factorization(U, S, V), WINDOWED, rho=1.0, w=m, store_v=True,
            ncols=m, truncation=trunc, window=deque(np.array(X[:, j]) for j in range(m)),
        )
        y_window = deque(np.array(Y[:, j]) for j in range(m))
    else:
        store_v = config is None
        svd = SvdState(
            Factorization(U, S, V if store_v else None), WEIGHTED, rho=rho,
            store_v=store_v, ncols=m, truncation=trunc,
        )
    return DmdModel(config, svd, A_full if maintain_full else None, A_tilde,
                    step=m, y_window=y_window)


def free_run_reconstruct(models, x0: np.ndarray, steps: int) -> np.ndarray:
    """Roll the time-varying dynamics forward with the operator recorded at
    each step: column j+1 is models[j] applied to column j.

    ``models`` is a sequence of :class:`DmdModel` snapshots or plain operator
    matrices; entry j must exist for j < steps - 1. Column 0 is ``x0``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if steps < 1:
        raise InvalidInput("steps must be at least 1")
    out = np.empty((x0.shape[0], steps))
    out[:, 0] = x0
    for j in range(steps - 1):
        if j >= len(models) or models[j] is None:
            raise MissingState(f"no model snapshot recorded for step {j}")
        op = models[j]
        if isinstance(op, DmdModel):
            out[:, j + 1] = op.apply(out[:, j])
        else:
            out[:, j + 1] = np.asarray(op) @ out[:, j]
    return out


def _spectrum(A_tilde, basis, full_op, kind, dt) -> Spectrum:
    if kind not in ("projected", "exact"):
        raise InvalidInput(f"unknown mode kind {kind!r}")
    try:
        lam, W = np.linalg.eig(A_tilde)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.lexsort((-lam.imag, -lam.real, -np.abs(lam)))
    lam = lam[order]
    W = W[:, order]
    projected = basis @ W
    modes = projected if kind == "projected" else full_op @ projected
    cont = np.empty(lam.shape[0], dtype=complex)
    zero = lam == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cont[~zero] = np.log(lam[~zero]) / dt
    cont[zero] = complex(-np.inf, 0.0)
    return Spectrum(lam, W, modes, cont, kind)
