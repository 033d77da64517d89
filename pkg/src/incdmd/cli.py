"""Command-line front end.

Subcommands: ``gen`` (emit a synthetic dataset CSV), ``stream`` (run one
tracker over a dataset), ``compare`` (run several configurations, emit a
joined report), ``spectrum`` (dump eigenvalues/modes at a given step).

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical
failure. No environment variables are consulted; a JSON config file
(--config) may supply any flag's value, with explicit flags taking
precedence.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import harness
from .dmd import StreamConfig
from .errors import (
    ConditioningError,
    DegenerateData,
    DegenerateRange,
    IncdmdError,
    InvalidInput,
    NumericalError,
    ParseError,
    ShapeError,
    WindowSizeMismatch,
)
from .linalg import TruncationPolicy

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3

_NUMERICAL = (ConditioningError, DegenerateData, NumericalError, DegenerateRange)


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(message)


def _add_data_flags(p):
    p.add_argument("--data", help="dataset CSV; omitted = synthetic generation")
    p.add_argument("--inputs", help="input-sequence CSV (same layout) for control models")
    p.add_argument("--layout", choices=["rows-are-channels", "rows-are-samples"],
                   default="rows-are-channels")
    _add_ltv_flags(p)


def _add_ltv_flags(p):
    p.add_argument("--n", type=int, default=20, help="state dimension (synthetic)")
    p.add_argument("--l", type=int, default=2, help="input dimension (synthetic)")
    p.add_argument("--m", type=int, default=200, help="trajectory length (synthetic)")
    p.add_argument("--epsilon", type=float, default=0.001, help="modulation amplitude")
    p.add_argument("--omega", type=float, default=1.0, help="modulation frequency (rad/sample)")
    p.add_argument("--stability-margin", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)


def _add_stream_flags(p):
    p.add_argument("--model", choices=list(harness.MODEL_KINDS), default="dmd")
    p.add_argument("--mode", choices=["weighted", "windowed"], default="weighted")
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--window", type=int, default=None, help="window width w (windowed mode)")
    p.add_argument("--sigma-thr", type=float, default=None,
                   help="absolute singular value threshold")
    p.add_argument("--rank", type=int, default=None, help="fixed truncation rank")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--init-window", type=int, default=40)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="incdmd",
                     description="Streaming time-varying DMD toolkit")
    parser.add_argument("--config", help="JSON file supplying default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="emit a synthetic dataset CSV")
    _add_ltv_flags(p_gen)
    p_gen.add_argument("--out", required=True, help="states CSV path")
    p_gen.add_argument("--inputs-out", help="inputs CSV path (when l > 0)")

    p_stream = sub.add_parser("stream", help="stream one tracker over a dataset")
    _add_data_flags(p_stream)
    _add_stream_flags(p_stream)
    p_stream.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="run several configurations, joined report")
    _add_data_flags(p_cmp)
    _add_stream_flags(p_cmp)
    p_cmp.add_argument("--models", default="dmd,dmdc",
                       help="comma-separated model kinds")
    p_cmp.add_argument("--modes", default="weighted,windowed",
                       help="comma-separated streaming modes")
    p_cmp.add_argument("--out", required=True)

    p_spec = sub.add_parser("spectrum", help="dump eigenvalues/modes at a step")
    _add_data_flags(p_spec)
    _add_stream_flags(p_spec)
    p_spec.add_argument("--at-step", type=int, required=True)
    p_spec.add_argument("--kind", choices=["projected", "exact"], default="projected")
    p_spec.add_argument("--out", help="output path (default: stdout)")
    return parser


def _apply_config_file(parser, argv):
    # Pre-scan for --config so its values become parser defaults; explicit
    # flags still override because defaults lose to provided arguments.
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise _UsageExit("--config needs a path")
    try:
        with open(argv[idx + 1]) as fh:
            values = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise ParseError("config file must hold a JSON object")
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in values.items() if k in known})
    return argv


def _load_dataset(args, needs_inputs: bool) -> harness.Dataset:
    if args.data:
        data = harness.ingest_csv(args.data, layout=args.layout)
        if needs_inputs:
            if not args.inputs:
                raise InvalidInput("control models need --inputs alongside --data")
            inp = harness.ingest_csv(args.inputs, layout=args.layout)
            # ingest pairs samples; the raw input matrix is [X | last column]
            gamma = np.hstack([inp.X, inp.Y[:, -1:]])[:, : data.npairs]
            if gamma.shape[1] < data.npairs:
                raise ShapeError("input sequence shorter than the state sequence")
            data.Gamma = gamma
        return data
    spec = harness.LtvSpec(args.n, args.l, args.m, args.epsilon, args.omega,
                           args.seed, args.stability_margin)
    return harness.gen_ltv(spec)


def _make_config(args) -> StreamConfig:
    if args.sigma_thr is not None and args.rank is not None:
        raise InvalidInput("--sigma-thr and --rank are mutually exclusive")
    if args.sigma_thr is not None:
        trunc = TruncationPolicy.absolute(args.sigma_thr)
    elif args.rank is not None:
        trunc = TruncationPolicy.fixed_rank(args.rank)
    else:
        trunc = TruncationPolicy.none()
    if args.mode == "windowed":
        w = args.window if args.window is not None else args.init_window
        return StreamConfig(mode="windowed", rho=1.0, w=w, truncation=trunc, dt=args.dt)
    return StreamConfig(mode="weighted", rho=args.rho, truncation=trunc, dt=args.dt)


def _cmd_gen(args) -> int:
    spec = harness.LtvSpec(args.n, args.l, args.m, args.epsilon, args.omega,
                           args.seed, args.stability_margin)
    data = harness.gen_ltv(spec)
    states = np.hstack([data.X, data.Y[:, -1:]])
    harness.write_matrix_csv(states, args.out)
    if args.l > 0 and args.inputs_out:
        harness.write_matrix_csv(data.Gamma, args.inputs_out)
    print(f"wrote {states.shape[0]}x{states.shape[1]} states to {args.out}", file=sys.stderr)
    return 0


def _cmd_stream(args) -> int:
    needs_inputs = args.model in ("dmdc", "onlinec")
    data = _load_dataset(args, needs_inputs)
    config = _make_config(args)
    report = harness.run_stream(data, config, args.model, args.init_window,
                                args.horizon, channel=args.channel, seed=args.seed)
    harness.emit_report(report, args.format, args.out)
    print(f"streamed {len(report.records)} steps in {report.wall_clock_s:.3f}s "
          f"-> {args.out}", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    needs_inputs = any(m in ("dmdc", "onlinec") for m in models)
    data = _load_dataset(args, needs_inputs)
    cells = {}
    for model in models:
        if model not in harness.MODEL_KINDS:
            raise InvalidInput(f"unknown model kind {model!r}")
        for mode in modes:
            ns = argparse.Namespace(**vars(args))
            ns.mode = mode
            cells[f"{model}-{mode}"] = (model, _make_config(ns))
    reports = harness.compare(data, cells, args.init_window, args.horizon,
                              channel=args.channel, seed=args.seed)
    harness.emit_comparison(reports, args.format, args.out)
    print(f"compared {len(cells)} cells -> {args.out}", file=sys.stderr)
    return 0


def _cmd_spectrum(args) -> int:
    needs_inputs = args.model in ("dmdc", "onlinec")
    if args.model in ("online", "onlinec"):
        raise InvalidInput("spectrum dump supports the dmd and dmdc trackers")
    data = _load_dataset(args, needs_inputs)
    config = _make_config(args)
    if not args.init_window <= args.at_step < data.npairs:
        raise InvalidInput(f"--at-step must lie in [{args.init_window}, {data.npairs - 1}]")
    X0, Y0 = data.X[:, : args.init_window], data.Y[:, : args.init_window]
    if args.model == "dmd":
        from .dmd import batch_dmd

        model = batch_dmd(X0, Y0, config=config)
        for j in range(args.init_window, args.at_step + 1):
            model.step_pair(data.X[:, j], data.Y[:, j])
    else:
        from .dmdc import batch_dmdc

        model = batch_dmdc(X0, Y0, data.Gamma[:, : args.init_window], config=config)
        for j in range(args.init_window, args.at_step + 1):
            model.step_triplet(data.X[:, j], data.Y[:, j], data.Gamma[:, j])
    spec = model.spectrum(kind=args.kind)

    if args.format == "json":
        payload = {
            "step": args.at_step,
            "kind": args.kind,
            "eigenvalues": [[v.real, v.imag] for v in spec.eigenvalues],
            "cont_eigenvalues": [[v.real, v.imag] for v in spec.cont_eigenvalues],
            "modes": [[[c.real, c.imag] for c in spec.modes[:, i]]
                      for i in range(spec.modes.shape[1])],
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    rows = [["idx", "eig_re", "eig_im", "cont_re", "cont_im"]]
    for i, (lam, cont) in enumerate(zip(spec.eigenvalues, spec.cont_eigenvalues)):
        rows.append([str(i + 1), repr(lam.real), repr(lam.imag),
                     repr(cont.real), repr(cont.imag)])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "stream": _cmd_stream,
    "compare": _cmd_compare,
    "spectrum": _cmd_spectrum,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageExit as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (InvalidInput, ShapeError, WindowSizeMismatch) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except _NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except IncdmdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
