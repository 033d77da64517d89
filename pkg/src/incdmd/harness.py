"""Experiment harness: synthetic time-varying systems, snapshot-stream
ingestion, per-step streaming of any tracker, prediction metrics, and
report emission.

Report file layouts are documented field-by-field in docs/format.md.
"""
from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dmd import DmdModel, StreamConfig, batch_dmd
from .dmdc import DmdcModel, batch_dmdc
from .errors import DegenerateRange, InvalidInput, ParseError, ShapeError
from .incsvd import WEIGHTED, WINDOWED
from .online import OnlineState, online_init_from_batch, online_step

MODEL_KINDS = ("dmd", "dmdc", "online", "onlinec")


@dataclass(frozen=True)
class LtvSpec:
    """Recipe for a random linear time-varying simulation.

    The base pair (A, B) is drawn once, rescaled to the requested spectral
    radius, then modulated as A_k = (1 + epsilon sin(omega k)) A (and B
    alike) while driven by i.i.d. standard normal inputs.
    """

    n: int
    l: int
    m: int
    epsilon: float
    omega: float
    seed: int
    stability_margin: float = 0.95

    def __post_init__(self):
        if self.n < 1 or self.l < 0:
            raise InvalidInput("need n >= 1 and l >= 0")
        if self.m <= self.n:
            raise InvalidInput("trajectory length m must exceed n")
        if self.epsilon < 0:
            raise InvalidInput("epsilon must be nonnegative")
        if not np.isfinite(self.omega):
            raise InvalidInput("omega must be finite")
        if not self.stability_margin > 0:
            raise InvalidInput("stability margin must be positive")


@dataclass(frozen=True)
class LtvTruth:
    """Ground-truth access to the modulated system matrices."""

    A0: np.ndarray
    B0: np.ndarray
    epsilon: float
    omega: float

    def factor(self, k: int) -> float:
        return 1.0 + self.epsilon * np.sin(self.omega * k)

    def a_at(self, k: int) -> np.ndarray:
        return self.factor(k) * self.A0

    def b_at(self, k: int) -> np.ndarray:
        return self.factor(k) * self.B0


@dataclass
class Dataset:
    """Aligned snapshot pairs (and optionally inputs): Y[:, j] follows
    X[:, j] one sample later; Gamma[:, j] acted during that transition."""

    X: np.ndarray
    Y: np.ndarray
    Gamma: np.ndarray | None = None
    truth: LtvTruth | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def npairs(self) -> int:
        return self.X.shape[1]

    @property
    def l(self) -> int:
        return 0 if self.Gamma is None else self.Gamma.shape[0]


def gen_ltv(spec: LtvSpec) -> Dataset:
    """Simulate the randomly generated time-varying system; deterministic
    for a given spec (one RNG seeds the system, the start state and the
    input sequence)."""
    rng = np.random.default_rng(spec.seed)
    A_raw = rng.standard_normal((spec.n, spec.n))
    radius = float(np.max(np.abs(np.linalg.eigvals(A_raw))))
    A0 = A_raw * (spec.stability_margin / radius) if radius > 0 else A_raw
    B0 = rng.standard_normal((spec.n, spec.l)) if spec.l else np.zeros((spec.n, 0))
    x0 = rng.standard_normal(spec.n)
    Gamma = rng.standard_normal((spec.l, spec.m - 1)) if spec.l else np.zeros((0, spec.m - 1))

    states = np.empty((spec.n, spec.m))
    states[:, 0] = x0
    for k in range(spec.m - 1):
        f = 1.0 + spec.epsilon * np.sin(spec.omega * k)
        states[:, k + 1] = f * (A0 @ states[:, k]) + f * (B0 @ Gamma[:, k])
    truth = LtvTruth(A0, B0, spec.epsilon, spec.omega)
    return Dataset(states[:, :-1].copy(), states[:, 1:].copy(), Gamma, truth)


def nrmse(predicted: np.ndarray, actual: np.ndarray, channel: int = 0) -> float:
    """Root-mean-square error of one channel over the horizon, normalized by
    the actual signal's min-max range across that horizon."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if predicted.shape != actual.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {actual.shape}")
    if predicted.shape[1] < 1:
        raise InvalidInput("need at least one sample in the horizon")
    p = predicted[channel]
    a = actual[channel]
    spread = float(a.max() - a.min())
    if spread <= 0:
        raise DegenerateRange("actual channel is constant over the horizon")
    return float(np.sqrt(np.mean((p - a) ** 2)) / spread)


def frob_pred_error(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Frobenius norm of the stacked prediction error over the horizon."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if predicted.shape != actual.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {actual.shape}")
    return float(np.linalg.norm(predicted - actual))


@dataclass
class StepRecord:
    """One streamed step: spectrum snapshot plus horizon scores.

    Scores are None when no future sample remained to score against.
    """

    k: int
    rank: int
    singular_values: list
    eigenvalues: list
    nrmse: float | None
    frob_pred_error: float | None
    rebuild: bool


@dataclass
class StreamReport:
    """Per-step records plus run metadata.

    ``wall_clock_s`` is measured but excluded from serialization and
    equality so identical runs emit byte-identical files.
    """

    meta: dict
    records: list
    wall_clock_s: float | None = field(default=None, compare=False)
    operators: list | None = field(default=None, compare=False)


def run_stream(
    data: Dataset,
    config: StreamConfig,
    model_kind: str,
    m0: int,
    horizon: int,
    channel: int = 0,
    seed: int | None = None,
    keep_operators: bool = False,
) -> StreamReport:
    """Initialize a tracker by batch over the first ``m0`` pairs, then per
    remaining pair: step the tracker, freeze it, predict ``horizon`` samples
    ahead, and score against the recorded future.

    Emits one record per streamed pair (``npairs - m0`` records); the last
    ``horizon`` records score against correspondingly shorter futures and the
    final one carries None scores.
    """
    if model_kind not in MODEL_KINDS:
        raise InvalidInput(f"unknown model kind {model_kind!r}")
    npairs = data.npairs
    if npairs <= m0:
        raise InvalidInput("stream length must exceed the init window")
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    needs_inputs = model_kind in ("dmdc", "onlinec")
    if needs_inputs and data.Gamma is None:
        raise InvalidInput(f"model {model_kind} needs an input sequence")

    X0, Y0 = data.X[:, :m0], data.Y[:, :m0]
    G0 = data.Gamma[:, :m0] if needs_inputs else None
    model = _init_model(model_kind, X0, Y0, G0, config)

    records = []
    operators = [] if keep_operators else None
    t_start = time.perf_counter()
    for j in range(m0, npairs):
        x = data.X[:, j]
        y = data.Y[:, j]
        gamma = data.Gamma[:, j] if needs_inputs else None
        rebuild = _step_model(model, model_kind, x, y, gamma)
        if keep_operators:
            operators.append(_frozen_operator(model, model_kind))

        h_av = min(horizon, npairs - 1 - j)
        score_nrmse = score_frob = None
        if h_av >= 1:
            preds = _predict_model(model, model_kind, y,
                                   data.Gamma[:, j + 1: j + 1 + h_av] if needs_inputs else None,
                                   h_av)
            actual = data.Y[:, j + 1: j + 1 + h_av]
            try:
                score_nrmse = nrmse(preds, actual, channel)
            except DegenerateRange:
                score_nrmse = None
            score_frob = frob_pred_error(preds, actual)
        svals, eigs, rank = _model_spectrum(model, model_kind)
        records.append(StepRecord(j, rank, svals, eigs, score_nrmse, score_frob, rebuild))
    wall = time.perf_counter() - t_start

    meta = {
        "model": model_kind,
        "mode": config.mode,
        "rho": config.rho,
        "w": config.w,
        "truncation_kind": config.truncation.kind,
        "truncation_value": config.truncation.value,
        "dt": config.dt,
        "m0": m0,
        "horizon": horizon,
        "channel": channel,
        "seed": seed,
        "n": data.n,
        "l": data.l,
        "npairs": npairs,
    }
    return StreamReport(meta, records, wall_clock_s=wall, operators=operators)


def compare(
    data: Dataset,
    cells: dict,
    m0: int,
    horizon: int,
    channel: int = 0,
    seed: int | None = None,
) -> dict:
    """Run several (name -> (model_kind, config)) cells on one dataset.

    Each cell owns its tracker exclusively; reports are merged into a dict
    in the given order.
    """
    return {
        name: run_stream(data, config, kind, m0, horizon, channel=channel, seed=seed)
        for name, (kind, config) in cells.items()
    }


# -- model plumbing ------------------------------------------------------


def _init_model(kind, X0, Y0, G0, config: StreamConfig):
    if kind == "dmd":
        return batch_dmd(X0, Y0, config=config)
    if kind == "dmdc":
        return batch_dmdc(X0, Y0, G0, config=config)
    return online_init_from_batch(X0, Y0, G0, rho=config.rho,
                                  mode=config.mode, w=config.w)


def _step_model(model, kind, x, y, gamma) -> bool:
    if kind == "dmd":
        model.step_pair(x, y)
        return model.last_rebuild
    if kind == "dmdc":
        model.step_triplet(x, y, gamma)
        return model.last_rebuild
    online_step(model, x, y, gamma if kind == "onlinec" else None)
    return False


def _predict_model(model, kind, x0, inputs, h) -> np.ndarray:
    if kind == "dmd":
        return model.predict(x0, h)
    if kind == "dmdc":
        return model.predict_with_input(x0, inputs)
    return model.predict(x0, h, inputs)


def _frozen_operator(model, kind):
    if kind == "dmd":
        return model.operator().copy()
    if kind == "dmdc":
        A, B = model.operator_pair()
        return A.copy(), B.copy()
    return model.A.copy(), model.B.copy()


_EIG_SORT = lambda lam: lam[np.lexsort((-lam.imag, -lam.real, -np.abs(lam)))]  # noqa: E731


def _model_spectrum(model, kind):
    if kind in ("online", "onlinec"):
        lam = _EIG_SORT(np.linalg.eigvals(model.A))
        return [], [complex(v) for v in lam], model.n
    if kind == "dmdc":
        svals = model.svd_state.factors.S
    else:
        svals = model.svd.factors.S
    lam = _EIG_SORT(np.linalg.eigvals(model.A_tilde))
    return [float(s) for s in svals], [complex(v) for v in lam], int(svals.shape[0])


# -- dataset files -------------------------------------------------------


def ingest_csv(path, layout: str = "rows-are-channels") -> Dataset:
    """Read a rectangular numeric CSV into aligned snapshot pairs.

    A single leading header row is detected (any non-numeric cell) and
    skipped. Ragged or non-numeric data raises ParseError with the offending
    row (and column) number, 1-based.
    """
    if layout not in ("rows-are-channels", "rows-are-samples"):
        raise InvalidInput(f"unknown layout {layout!r}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise ParseError(f"{path}: no data rows")

    start = 0
    if not _all_numeric(rows[0][1]):
        start = 1
        if len(rows) == 1:
            raise ParseError(f"{path}: header only, no data rows")
    width = len(rows[start][1])
    matrix = np.empty((len(rows) - start, width))
    for i, (lineno, cells) in enumerate(rows[start:]):
        if len(cells) != width:
            raise ParseError(f"{path}: row {lineno}: expected {width} fields, got {len(cells)}")
        for j, cell in enumerate(cells):
            try:
                matrix[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {lineno}, column {j + 1}: "
                                 f"non-numeric value {cell!r}") from None
    if layout == "rows-are-samples":
        matrix = matrix.T
    if matrix.shape[1] < 2:
        raise ParseError(f"{path}: need at least two samples to form snapshot pairs")
    return Dataset(matrix[:, :-1].copy(), matrix[:, 1:].copy())


def _all_numeric(cells) -> bool:
    for c in cells:
        try:
            float(c)
        except ValueError:
            return False
    return True


def write_matrix_csv(matrix: np.ndarray, path, header: list | None = None) -> None:
    """Write a dense matrix as CSV (rows-are-channels), full float precision."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


# -- report files --------------------------------------------------------


def emit_report(report: StreamReport, fmt: str, path) -> None:
    """Serialize a report; see docs/format.md for the exact layouts.

    CSV carries the metadata as one ``# meta:`` comment line followed by a
    header row and one row per step (complex eigenvalues split into paired
    re/im columns). JSON nests the full structure. Both round-trip
    losslessly through :func:`load_report`.
    """
    if fmt == "json":
        payload = {
            "meta": report.meta,
            "records": [
                {
                    "k": r.k,
                    "rank": r.rank,
                    "singular_values": r.singular_values,
                    "eigenvalues": [[v.real, v.imag] for v in r.eigenvalues],
                    "nrmse": r.nrmse,
                    "frob_pred_error": r.frob_pred_error,
                    "rebuild": r.rebuild,
                }
                for r in report.records
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    if fmt != "csv":
        raise InvalidInput(f"unknown report format {fmt!r}")

    n_sv = max((len(r.singular_values) for r in report.records), default=0)
    n_eig = max((len(r.eigenvalues) for r in report.records), default=0)
    header = ["k", "rank", "rebuild", "nrmse", "frob_pred_error"]
    header += [f"sv{i + 1}" for i in range(n_sv)]
    for i in range(n_eig):
        header += [f"eig{i + 1}_re", f"eig{i + 1}_im"]
    with open(path, "w", newline="") as fh:
        fh.write("# meta: " + json.dumps(report.meta, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in report.records:
            row = [str(r.k), str(r.rank), str(int(r.rebuild)),
                   _fmt(r.nrmse), _fmt(r.frob_pred_error)]
            row += [_fmt(v) for v in r.singular_values]
            row += [""] * (n_sv - len(r.singular_values))
            for v in r.eigenvalues:
                row += [_fmt(v.real), _fmt(v.imag)]
            row += [""] * (2 * (n_eig - len(r.eigenvalues)))
            writer.writerow(row)


def emit_comparison(reports: dict, fmt: str, path) -> None:
    """Joined report for several named cells: CSV gains a leading ``cell``
    column; JSON nests one report object per cell."""
    if fmt == "json":
        payload = {}
        for name, rep in reports.items():
            payload[name] = {
                "meta": rep.meta,
                "records": [
                    {
                        "k": r.k,
                        "rank": r.rank,
                        "singular_values": r.singular_values,
                        "eigenvalues": [[v.real, v.imag] for v in r.eigenvalues],
                        "nrmse": r.nrmse,
                        "frob_pred_error": r.frob_pred_error,
                        "rebuild": r.rebuild,
                    }
                    for r in rep.records
                ],
            }
        with open(path, "w") as fh:
            json.dump({"cells": payload}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    if fmt != "csv":
        raise InvalidInput(f"unknown report format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write("# meta: " + json.dumps(
            {name: rep.meta for name, rep in reports.items()}, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["cell", "k", "rank", "rebuild", "nrmse", "frob_pred_error"])
        for name, rep in reports.items():
            for r in rep.records:
                writer.writerow([name, str(r.k), str(r.rank), str(int(r.rebuild)),
                                 _fmt(r.nrmse), _fmt(r.frob_pred_error)])


def load_report(path, fmt: str | None = None) -> StreamReport:
    """Inverse of :func:`emit_report`."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    if fmt == "json":
        with open(path) as fh:
            payload = json.load(fh)
        records = [
            StepRecord(
                r["k"], r["rank"], r["singular_values"],
                [complex(re, im) for re, im in r["eigenvalues"]],
                r["nrmse"], r["frob_pred_error"], r["rebuild"],
            )
            for r in payload["records"]
        ]
        return StreamReport(payload["meta"], records)

    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# meta: "):
            raise ParseError(f"{path}: missing meta line")
        meta = json.loads(first[len("# meta: "):])
        reader = csv.reader(fh)
        header = next(reader)
        sv_cols = [i for i, name in enumerate(header) if name.startswith("sv")]
        eig_re = [i for i, name in enumerate(header)
                  if name.startswith("eig") and name.endswith("_re")]
        records = []
        for row in reader:
            svals = [float(row[i]) for i in sv_cols if row[i] != ""]
            eigs = [complex(float(row[i]), float(row[i + 1]))
                    for i in eig_re if row[i] != ""]
            records.append(StepRecord(
                int(row[0]), int(row[1]), svals, eigs,
                None if row[3] == "" else float(row[3]),
                None if row[4] == "" else float(row[4]),
                bool(int(row[2])),
            ))
    return StreamReport(meta, records)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))
