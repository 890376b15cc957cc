"""Command-line surface: run queries against registered datasets, generate
synthetic samples.

Exit codes: 0 success, 2 query parse error, 3 planning or inference error,
4 execution / data error.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .dataio import (DatasetRegistry, flatten_values, generate_sample,
                     histogram_csv)
from .engine import MODES, AnalysisEngine
from .errors import (BuildError, ExecutionError, InferenceError, IngestError,
                     JagqError, PlanError, QuerySyntaxError, SchemaError,
                     UnknownDatasetError, UnknownFunctionError)
from .jagged import JaggedArray
from .records import RecordArray, Scalar

PARSE_ERRORS = (QuerySyntaxError, UnknownFunctionError, BuildError)
PLAN_ERRORS = (PlanError, InferenceError, SchemaError)
EXEC_ERRORS = (ExecutionError, IngestError, UnknownDatasetError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jagq", description="declarative analysis over jagged event data")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="plan and execute a query")
    query = run.add_mutually_exclusive_group(required=True)
    query.add_argument("--query", help="inline query text")
    query.add_argument("--query-file", help="file containing query text")
    run.add_argument("--registry", required=True, help="dataset registry file")
    run.add_argument("--dataset", help="dataset id (overrides the query's From)")
    run.add_argument("--backend", choices=MODES, default="split")
    run.add_argument("--remote-cross-reference", action="store_true",
                     help="let the remote service take whole filter chains")
    run.add_argument("--strict", action="store_true",
                     help="error on leaves missing from the schema")
    run.add_argument("--plan", action="store_true",
                     help="print the plan instead of executing")
    run.add_argument("--hist", action="store_true", help="emit a histogram CSV")
    run.add_argument("--bins", type=int, default=50)
    run.add_argument("--range", dest="hist_range", default=None,
                     help="histogram range as LO,HI")
    run.add_argument("--cache-dir", default=None,
                     help="cache location (default: $JQ_CACHE_DIR or ./.jq-cache)")
    run.add_argument("--out", default="-", help="output file ('-' for stdout)")

    gen = sub.add_parser("generate", help="write a synthetic event sample")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--events", type=int, required=True)
    gen.add_argument("--out", required=True, help="event file path")
    gen.add_argument("--labels", default=None,
                     help="sidecar label path (default: <out>.labels)")
    gen.add_argument("--schema", default=None, help="also write a schema file here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        return _generate(args)
    return _run(args)


def _generate(args) -> int:
    labels = args.labels if args.labels is not None else args.out + ".labels"
    try:
        generate_sample(args.seed, args.events, events_path=args.out,
                        labels_path=labels, schema_path=args.schema)
    except (OSError, ValueError) as err:
        print(f"jagq: generate failed: {err}", file=sys.stderr)
        return 4
    return 0


def _run(args) -> int:
    try:
        query_text = args.query if args.query is not None else \
            open(args.query_file, "r", encoding="utf-8").read().strip()
    except OSError as err:
        print(f"jagq: cannot read query: {err}", file=sys.stderr)
        return 2
    try:
        registry = DatasetRegistry.load(args.registry)
        engine = AnalysisEngine(registry, cache_dir=args.cache_dir,
                                mode=args.backend,
                                remote_cross_reference=args.remote_cross_reference,
                                strict=args.strict)
    except JagqError as err:
        print(f"jagq: {err}", file=sys.stderr)
        return 4

    try:
        root = engine.parse(query_text, args.dataset)
    except PARSE_ERRORS as err:
        print(f"jagq: parse error: {err}", file=sys.stderr)
        return 2

    try:
        if args.plan:
            _write(args.out, engine.explain(root) + "\n")
            return 0
    except PLAN_ERRORS as err:
        print(f"jagq: plan error: {err}", file=sys.stderr)
        return 3
    except JagqError as err:
        print(f"jagq: {err}", file=sys.stderr)
        return 4

    try:
        value = engine.materialize(root)
        if args.hist:
            if args.hist_range is None:
                raise ExecutionError("--hist needs --range LO,HI")
            lo, hi = _parse_range(args.hist_range)
            text = histogram_csv(flatten_values(value), args.bins, lo, hi)
        else:
            text = _dump_csv(value)
        _write(args.out, text)
    except PLAN_ERRORS as err:
        print(f"jagq: plan error: {err}", file=sys.stderr)
        return 3
    except (JagqError, OSError, ValueError) as err:
        print(f"jagq: execution error: {err}", file=sys.stderr)
        return 4
    return 0


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"bad --range {text!r}; expected LO,HI") from None
    return lo, hi


def _write(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)


def _dump_csv(value) -> str:
    """Column dump: one row per innermost value with its event (and, for
    nested results, inner list) indices."""
    if isinstance(value, Scalar):
        return f"value\n{value.value}\n"
    if isinstance(value, RecordArray):
        names = value.field_names()
        header = ["event"] + [f"i{d}" for d in range(value.depth)] + names
        rows = []
        if value.depth == 0:
            for event in range(value.n_events):
                rows.append(f"{event}," + ",".join(_cell(value.columns[n][event])
                                                   for n in names))
        else:
            for idx, flat in _iter_indices(value.offset_levels):
                rows.append(",".join(str(x) for x in idx)
                            + "," + ",".join(_cell(value.columns[n][flat]) for n in names))
        return ",".join(header) + "\n" + "".join(r + "\n" for r in rows)
    if isinstance(value, JaggedArray):
        header = ["event"] + [f"i{d}" for d in range(value.depth)] + ["value"]
        rows = []
        if value.depth == 0:
            for event, item in enumerate(value.values):
                rows.append(f"{event},{_cell(item)}")
        else:
            for idx, flat in _iter_indices(value.offset_levels):
                rows.append(",".join(str(x) for x in idx) + f",{_cell(value.values[flat])}")
        return ",".join(header) + "\n" + "".join(r + "\n" for r in rows)
    raise ExecutionError(f"cannot dump {type(value).__name__}")


def _cell(item) -> str:
    if isinstance(item, (np.bool_, bool)):
        return "true" if item else "false"
    if isinstance(item, (np.floating, float)):
        return repr(float(item))
    return str(int(item))


def _iter_indices(levels):
    """Yield (per-level indices, flat position) for every innermost value."""
    def walk(level_idx, start, stop, prefix):
        if level_idx == len(levels):
            for flat in range(start, stop):
                yield prefix + [flat - start], flat
            return
        level = levels[level_idx]
        for i in range(start, stop):
            local = i if level_idx == 0 else i - start
            yield from walk(level_idx + 1, int(level[i]), int(level[i + 1]),
                            prefix + [local])

    n_events = len(levels[0]) - 1 if levels else 0
    yield from walk(0, 0, n_events, [])


if __name__ == "__main__":
    sys.exit(main())
