"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(including a failed ``verify``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .. import __version__, topology
from ..engine import ExplanationRequest, explain, verify_properties
from ..errors import DataError, DimensionMismatch, NumericalError, OrderCapExceeded, OrderMismatch
from ..models import fit_glm, fit_gpr, load_model, model_json
from ..tensor import Method, QuadratureConfig, Rule, stack_from_dict, stack_to_dict
from .data import SyntheticConfig, generate_synthetic, load_csv
from .experiments import (
    STRUCTURE_THRESHOLD,
    run_realestate_experiment,
    run_synthetic_experiment,
    write_report,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
OUTPUT_ENV = "HOIG_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "hoig-output"

METHODS = {"hessian": Method.HESSIAN_FORMULA, "compose": Method.OPERATOR_COMPOSITION}
RULES = {"right": Rule.RIGHT_HAND, "trapezoid": Rule.TRAPEZOID}

log = logging.getLogger("hoig")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _add_quadrature(p):
    p.add_argument("--points", type=_positive_int, default=100, help="quadrature points per level (M)")
    p.add_argument("--rule", choices=sorted(RULES), default="right")


def _add_data(p, required=False):
    p.add_argument("--data", required=required, help="CSV file with a header row")
    p.add_argument("--target", default="y", help="target column name (default: y)")
    p.add_argument("--drop", action="append", default=[], help="column to ignore; repeatable")
    p.add_argument("--lenient", action="store_true", help="skip unparsable rows instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hoig", description="Higher-order Integrated Gradients attributions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="sample the synthetic interaction dataset as CSV")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--noise", type=_nonneg_float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("train", help="fit a model and write it as JSON")
    p.add_argument("kind", choices=["gpr", "glm"])
    _add_data(p, required=True)
    p.add_argument("--grid-search", action="store_true", help="GPR: pick hyperparameters by marginal likelihood")
    p.add_argument("--out", help="output model file (default: stdout)")

    p = sub.add_parser("explain", help="attribution tensors of orders 1..L")
    p.add_argument("--model", required=True, help="model JSON file or builtin:synthetic")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="input vector, comma separated or a JSON list")
    group.add_argument("--input-row", type=int, help="0-based data row to explain (needs --data)")
    _add_data(p)
    p.add_argument("--baseline", help="zero, mean (needs --data) or a vector; default mean with --data, else zero")
    p.add_argument("--order", type=_positive_int, default=2)
    p.add_argument("--method", choices=sorted(METHODS), default="compose")
    p.add_argument("--order-cap", type=_positive_int, default=4)
    _add_quadrature(p)
    p.add_argument("--format", choices=["json"], default="json")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("verify", help="check completeness, marginalization and symmetry of a tensor stack")
    p.add_argument("tensors", help="JSON written by explain")
    p.add_argument("--model", help="recompute f(x) - f(baseline) from this model")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("export-graph", help="interaction graph (orders 1-2) or simplicial export (order 3)")
    p.add_argument("tensors", help="JSON written by explain")
    p.add_argument("--threshold", type=_nonneg_float, default=topology.DEFAULT_THRESHOLD)
    p.add_argument("--format", choices=["json", "dot"], default="dot")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("experiment", help="run an end-to-end experiment and write a report directory")
    exp = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    e = exp.add_parser("synthetic", help="interaction recovery on the synthetic polynomial")
    e.add_argument("--n", type=_positive_int, default=500)
    e.add_argument("--noise", type=_nonneg_float, default=0.1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--model-kind", choices=["gpr", "truth"], default="gpr")
    e.add_argument("--method", choices=sorted(METHODS), action="append",
                   help="second-order method(s); default both, hessian first")
    e.add_argument("--threshold", type=_nonneg_float, default=topology.DEFAULT_THRESHOLD)
    e.add_argument("--structure-threshold", type=_nonneg_float, default=STRUCTURE_THRESHOLD)
    e.add_argument("--grid-search", action="store_true")
    _add_quadrature(e)
    e.add_argument("--out", help=f"report directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    e = exp.add_parser("realestate", help="GLM explanations of randomly drawn rows")
    _add_data(e, required=True)
    e.add_argument("--k", type=int, default=3, help="number of rows to explain")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--order", type=int, choices=[2, 3], default=2)
    e.add_argument("--method", choices=sorted(METHODS), default="hessian")
    e.add_argument("--threshold", type=_nonneg_float, default=topology.DEFAULT_THRESHOLD)
    e.add_argument("--structure-threshold", type=_nonneg_float, default=STRUCTURE_THRESHOLD)
    _add_quadrature(e)
    e.add_argument("--out", help=f"report directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    return parser


def _emit(text: str, out=None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _quadrature(args) -> QuadratureConfig:
    return QuadratureConfig(args.points, RULES[args.rule])


def _dataset(args):
    return load_csv(args.data, args.target, strict=not args.lenient, drop_columns=args.drop)


def parse_vector(text: str, dim: int, what: str) -> np.ndarray:
    text = text.strip()
    try:
        values = json.loads(text) if text.startswith("[") else [float(v) for v in text.split(",") if v.strip()]
        vec = np.asarray(values, dtype=float).ravel()
    except (ValueError, TypeError) as exc:
        raise DataError(f"cannot parse {what} {text!r}: {exc}") from exc
    if vec.size != dim:
        raise DataError(f"{what} has {vec.size} entries, model expects {dim}")
    if not np.all(np.isfinite(vec)):
        raise DataError(f"{what} contains non-finite values")
    return vec


def _read_stack(path):
    try:
        return stack_from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path} is not a tensor file: {exc}") from exc


def _output_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR)


def cmd_synth(args):
    data = generate_synthetic(SyntheticConfig(args.n, args.noise, args.seed))
    _emit(data.to_csv(), args.out)


def cmd_train(args):
    data = _dataset(args)
    if args.kind == "gpr":
        model = fit_gpr(data, grid_search=args.grid_search)
    else:
        model = fit_glm(data)
    log.info("training diagnostics: %s", model.diagnostics)
    _emit(model_json(model) + "\n", args.out)


def cmd_explain(args):
    model = load_model(args.model)
    data = _dataset(args) if args.data else None
    if args.input_row is not None:
        if data is None:
            raise UsageError("--input-row needs --data")
        if not 0 <= args.input_row < data.n_samples:
            raise DataError(f"row {args.input_row} out of range for {data.n_samples} rows")
        if data.dim != model.dim:
            raise DimensionMismatch(f"data has {data.dim} features, model expects {model.dim}")
        x = data.X[args.input_row]
    else:
        x = parse_vector(args.input, model.dim, "input")
    choice = args.baseline or ("mean" if data is not None else "zero")
    if choice == "zero":
        baseline = np.zeros(model.dim)
    elif choice == "mean":
        if data is None:
            raise UsageError("--baseline mean needs --data")
        if data.dim != model.dim:
            raise DimensionMismatch(f"data has {data.dim} features, model expects {model.dim}")
        baseline = data.X.mean(axis=0)
    else:
        baseline = parse_vector(choice, model.dim, "baseline")
    req = ExplanationRequest(model, x, baseline, order=args.order, quadrature=_quadrature(args),
                             method=METHODS[args.method], order_cap=args.order_cap)
    stack = explain(req)
    for t in stack:
        t.diagnostics["baseline_choice"] = choice if choice in ("zero", "mean") else "vector"
    _emit(json.dumps(stack_to_dict(stack), allow_nan=False) + "\n", args.out)


def cmd_verify(args):
    stack = _read_stack(args.tensors)
    model = load_model(args.model) if args.model else None
    report = verify_properties(stack, model)
    if args.format == "json":
        _emit(json.dumps(report.to_dict(), indent=2) + "\n")
    else:
        _emit("\n".join(report.lines() + [f"overall\t{'PASS' if report.passed else 'FAIL'}"]) + "\n")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_export_graph(args):
    stack = sorted(_read_stack(args.tensors), key=lambda t: t.order)
    orders = [t.order for t in stack]
    if orders[:2] != [1, 2]:
        raise OrderMismatch(f"export needs tensors of orders 1 and 2, found {orders}")
    if len(stack) >= 3 and orders[2] == 3:
        obj = topology.build_simplicial(stack[0], stack[1], stack[2], args.threshold)
    else:
        obj = topology.build_graph(stack[0], stack[1], args.threshold)
    _emit(topology.to_dot(obj) if args.format == "dot" else topology.to_json(obj), args.out)


def cmd_experiment(args):
    if args.experiment == "synthetic":
        methods = [METHODS[m] for m in args.method] if args.method else list(METHODS.values())
        report = run_synthetic_experiment(
            SyntheticConfig(args.n, args.noise, args.seed), _quadrature(args), methods,
            threshold=args.threshold, model_kind=args.model_kind,
            structure_threshold=args.structure_threshold, grid_search=args.grid_search,
        )
    else:
        report = run_realestate_experiment(
            _dataset(args), args.k, args.seed, _quadrature(args), args.threshold,
            order=args.order, method=METHODS[args.method], structure_threshold=args.structure_threshold,
        )
    out = _output_dir(args)
    write_report(report, out)
    _emit("\n".join(report.summary_lines() + [f"output\t{out}"]) + "\n")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "explain": cmd_explain,
    "verify": cmd_verify,
    "export-graph": cmd_export_graph,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hoig: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionMismatch, OrderMismatch, OrderCapExceeded) as exc:
        print(f"hoig: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"hoig: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"hoig: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
