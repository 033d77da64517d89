"""Recursive least-squares baseline (Sherman-Morrison updates).

Reference tracker for benchmark comparisons: maintains the operator together
with the inverse Gramian P = (Z Z.T)^-1 of the (discount-weighted or
windowed) regressor columns, updating both by rank-one identities instead of
an SVD. Matches the incremental trackers exactly on full-rank streams; on
rank-deficient data it falls back to the heuristic P = alpha * I seed and is
measured, not trusted.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, InvalidInput, ShapeError
from .incsvd import WEIGHTED, WINDOWED
from .linalg import _check_finite

DEFAULT_ALPHA = 1e6

# Rank-one denominators below this abort the update.
DENOM_TOL = 1e-12


@dataclass
class OnlineState:
    """Operator G = [A B] plus the inverse-Gramian surrogate P.

    P stays symmetric (re-symmetrized after every update) and must remain
    positive definite for updates to be meaningful. Windowed mode keeps ring
    buffers of the regressor/target columns for the departing-column
    downdate. Single-writer.
    """

    G: np.ndarray
    P: np.ndarray
    rho: float
    mode: str
    n: int
    l: int
    z_window: deque | None = None
    y_window: deque | None = None
    w: int | None = None
    step: int = 0

    @property
    def A(self) -> np.ndarray:
        return self.G[:, : self.n]

    @property
    def B(self) -> np.ndarray:
        return self.G[:, self.n:]

    def predict(self, x0: np.ndarray, h: int, inputs: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x0, dtype=float).ravel()
        if inputs is None:
            inputs = np.zeros((self.l, h))
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        out = np.empty((self.n, h))
        for j in range(h):
            x = self.A @ x + self.B @ inputs[:, j]
            out[:, j] = x
        return out

    def copy(self) -> "OnlineState":
        return OnlineState(
            self.G.copy(), self.P.copy(), self.rho, self.mode, self.n, self.l,
            z_window=None if self.z_window is None else deque(c.copy() for c in self.z_window),
            y_window=None if self.y_window is None else deque(c.copy() for c in self.y_window),
            w=self.w, step=self.step,
        )


def online_init(
    n: int,
    l: int = 0,
    A0: np.ndarray | None = None,
    alpha: float = DEFAULT_ALPHA,
    rho: float = 1.0,
    mode: str = WEIGHTED,
    w: int | None = None,
) -> OnlineState:
    """Heuristic initialization: zero operator (or ``A0``) and P = alpha * I."""
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    if mode not in (WEIGHTED, WINDOWED):
        raise InvalidInput(f"unknown mode {mode!r}")
    if mode == WINDOWED and (w is None or w < 1):
        raise InvalidInput("windowed mode needs a window width")
    d = n + l
    if A0 is None:
        G = np.zeros((n, d))
    else:
        A0 = _check_finite(np.atleast_2d(np.asarray(A0, dtype=float)), "A0")
        if A0.shape == (n, n) and l > 0:
            G = np.hstack([A0, np.zeros((n, l))])
        elif A0.shape == (n, d):
            G = A0.copy()
        else:
            raise ShapeError(f"A0 must be ({n},{n}) or ({n},{d})")
    P = alpha * np.eye(d)
    buffers = (deque(), deque()) if mode == WINDOWED else (None, None)
    return OnlineState(G, P, rho, mode, n, l, z_window=buffers[0], y_window=buffers[1], w=w)


def online_init_from_batch(
    X: np.ndarray,
    Y: np.ndarray,
    Gamma: np.ndarray | None = None,
    rho: float = 1.0,
    mode: str = WEIGHTED,
    w: int | None = None,
    alpha: float = DEFAULT_ALPHA,
) -> OnlineState:
    """Exact seed from a batch window: G = Y Z.T (Z Z.T)^-1, P = (Z Z.T)^-1.

    Falls back to the heuristic zero/alpha-I seed when the weighted Gramian
    is numerically singular (the regime the baseline is known to mishandle).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, m = X.shape
    if Gamma is None:
        Gamma = np.zeros((0, m))
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    el = Gamma.shape[0]
    weights = rho ** np.arange(m - 1, -1, -1) if (mode == WEIGHTED and rho != 1.0) else np.ones(m)
    Z = np.vstack([X, Gamma]) * weights
    Yw = Y * weights
    gram = Z @ Z.T
    d = n + el
    state = online_init(n, el, rho=rho, mode=mode, w=w, alpha=alpha)
    if np.linalg.cond(gram) < 1e12:
        P = np.linalg.inv(gram)
        state.P = (P + P.T) / 2.0
        state.G = Yw @ Z.T @ state.P
    if mode == WINDOWED:
        if w != m:
            raise InvalidInput(f"windowed init needs exactly w={w} columns, got {m}")
        for j in range(m):
            state.z_window.append(np.concatenate([X[:, j], Gamma[:, j]]))
            state.y_window.append(np.array(Y[:, j]))
    state.step = m
    return state


def online_step(
    state: OnlineState,
    x: np.ndarray,
    y: np.ndarray,
    gamma: np.ndarray | None = None,
) -> OnlineState:
    """Advance the recursion one sample.

    Discounted mode: with z = [x; gamma], g = P z / (rho^2 + z'P z),
    G <- G + (y - G z) g', P <- (P - P z g') / rho^2. Windowed mode first
    removes the departing column by the matching rank-one downdate.
    """
    x = _check_finite(np.asarray(x, dtype=float).ravel(), "x")
    y = _check_finite(np.asarray(y, dtype=float).ravel(), "y")
    if gamma is None:
        gamma = np.zeros(state.l)
    gamma = _check_finite(np.asarray(gamma, dtype=float).ravel(), "gamma")
    if x.shape[0] != state.n or y.shape[0] != state.n or gamma.shape[0] != state.l:
        raise ShapeError("sample dimensions do not match the state")
    z = np.concatenate([x, gamma])

    if state.mode == WINDOWED and len(state.z_window) >= state.w:
        z_old = state.z_window.popleft()
        y_old = state.y_window.popleft()
        Pz = state.P @ z_old
        denom = 1.0 - z_old @ Pz
        if abs(denom) < DENOM_TOL:
            raise ConditioningError("window downdate denominator underflow")
        P = state.P + np.outer(Pz, Pz) / denom
        state.P = (P + P.T) / 2.0
        state.G = state.G - np.outer(y_old - state.G @ z_old, Pz) / denom

    rho2 = state.rho * state.rho
    Pz = state.P @ z
    denom = rho2 + z @ Pz
    if denom < DENOM_TOL:
        raise ConditioningError("update denominator underflow")
    g = Pz / denom
    state.G = state.G + np.outer(y - state.G @ z, g)
    P = (state.P - np.outer(Pz, g)) / rho2
    state.P = (P + P.T) / 2.0
    if state.mode == WINDOWED:
        state.z_window.append(z.copy())
        state.y_window.append(y.copy())
    state.step += 1
    return state
