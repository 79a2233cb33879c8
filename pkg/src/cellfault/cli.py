"""Command-line interface.

Exit codes: 0 success, 1 validation or parse error (including bad flags),
2 internal error. Randomized subcommands take ``--seed``; its default comes
from the ``CELLFAULT_SEED`` environment variable, else 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path

from . import cluster as cluster_mod
from . import dataset as io
from .evaluation import evaluate
from .exceptions import CellFaultError, ValidationError
from .pipeline import PipelineConfig, run_pipeline, write_report
from .rules import analyze_reachability, resolve_ruleset
from .schema import CLASS_LABELS, COUNTER_NAMES, CounterRecord, derive_kpis
from .synth import GenSpec, generate, read_templates
from .tree import LearnParams, dumps_model, loads_model, train

SEED_ENV = "CELLFAULT_SEED"
SPLIT_MARK = "# split "

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTERNAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Report usage errors as exit code 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}")
    return seed


def _seed(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {value!r}") from None
    if seed < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return seed


def _fraction(value: str) -> float:
    try:
        f = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid fraction {value!r}") from None
    if not 0.0 < f < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie strictly between 0 and 1")
    return f


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=None,
                   help=f"random seed (default: ${SEED_ENV} or 0)")


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("arff", "csv"), default=None,
                   help="data file format (default: from the file extension)")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    if args.spec:
        spec = GenSpec.from_file(args.spec)
        overrides = {}
        if args.n is not None:
            overrides["n"] = args.n
        if args.seed_given is not None:
            overrides["seed"] = args.seed_given
        if overrides:
            spec = GenSpec(**{**spec.__dict__, **overrides})
    else:
        spec = GenSpec(
            mode=args.mode,
            n=args.n if args.n is not None else 1000,
            seed=args.seed,
            label_with=resolve_ruleset(args.label) if args.label else None,
            templates=tuple(read_templates(Path(args.templates))) if args.templates else None,
            separation_scale=args.separation_scale,
            epsilon=args.epsilon,
            counters=not args.no_counters,
        )
    data = generate(spec)
    io.save(data, args.out, args.format)
    print(f"wrote {len(data)} records to {args.out}")
    return EXIT_OK


def cmd_derive(args) -> int:
    data = io.load(args.input, args.format)
    missing = [n for n in COUNTER_NAMES if not data.has(n)]
    if missing:
        raise ValidationError(f"input lacks counter column(s): {', '.join(missing)}")
    rows = []
    for cid, values in zip(data.cell_ids(), data.matrix(COUNTER_NAMES)):
        ctr = CounterRecord(cid, *(float(v) for v in values))
        k = derive_kpis(ctr)
        rows.append({"cell_id": cid, "CSR": k.CSR, "DCR": k.DCR, "TR": k.TR, "SDCCHSR": k.SDCCHSR})
    if args.json:
        text = _dump_json(rows)
    else:
        lines = ["cell_id,CSR,DCR,TR,SDCCHSR"]
        lines += [f"{r['cell_id']},{r['CSR']!r},{r['DCR']!r},{r['TR']!r},{r['SDCCHSR']!r}" for r in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    if args.out:
        print(f"derived KPIs for {len(rows)} records into {args.out}")
    return EXIT_OK


def _histogram(labels) -> dict[str, int]:
    counts = Counter(labels)
    order = list(CLASS_LABELS) + sorted(set(counts) - set(CLASS_LABELS))
    return {c: counts.get(c, 0) for c in order}


def cmd_label(args) -> int:
    data = io.load(args.input, args.format)
    rs = resolve_ruleset(args.rules)
    names = list(rs.attributes)
    labels = [str(x) for x in rs.classify_matrix(data.matrix(names), names)]
    if data.has_labels:
        print(f"warning: {args.input} already has a diagnosis column; overwriting labels",
              file=sys.stderr)
    out = data.with_labels(labels)
    io.save(out, args.out, args.format if args.out_format is None else args.out_format)
    hist = _histogram(labels)
    if args.json:
        print(_dump_json({"records": len(labels), "histogram": hist}), end="")
    else:
        print(f"labeled {len(labels)} records with rules {rs.version} into {args.out}")
        for c, n in hist.items():
            print(f"  {c:<12} {n}")
    return EXIT_OK


def _learn_params(args) -> LearnParams:
    return LearnParams(min_leaf_instances=args.min_leaf, pruning=args.pruning,
                       confidence=args.confidence, holdout_fraction=args.holdout,
                       seed=args.seed)


def _split_for(data, fraction: float | None, seed: int):
    if fraction is None:
        return data, None
    return io.split(data, io.SplitSpec(fraction, seed))


def cmd_train(args) -> int:
    data = io.load(args.input, args.format)
    train_set, test_set = _split_for(data, args.split, args.seed)
    model = train(train_set, _learn_params(args))
    header = ""
    if args.split is not None:
        header = f"{SPLIT_MARK}fraction={args.split!r} seed={args.seed}\n"
    Path(args.model).write_text(header + dumps_model(model), encoding="utf-8")
    info = {"model": args.model, "train_records": len(train_set),
            "test_records": 0 if test_set is None else len(test_set),
            "leaves": model.n_leaves_, "nodes": model.n_nodes_, "depth": model.depth_}
    if args.json:
        print(_dump_json(info), end="")
    else:
        print(f"trained on {info['train_records']} records; "
              f"leaves={info['leaves']} nodes={info['nodes']} depth={info['depth']}")
        print(f"model written to {args.model}")
    return EXIT_OK


def read_model(path):
    """Load a model file; returns the model and its recorded split (or None)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines(keepends=True)
    recorded = None
    body = []
    for line in lines:
        if line.startswith(SPLIT_MARK):
            fields = dict(item.split("=", 1) for item in line[len(SPLIT_MARK):].split())
            recorded = (float(fields["fraction"]), int(fields["seed"]))
        elif not line.startswith("#"):
            body.append(line)
    return loads_model("".join(body)), recorded


def cmd_eval(args) -> int:
    model, recorded = read_model(args.model)
    data = io.load(args.input, args.format)
    fraction, seed = args.split, args.seed
    if recorded is not None:
        fraction = recorded[0] if fraction is None else fraction
        seed = recorded[1] if args.seed_given is None else seed
    if args.all or fraction is None:
        test_set = data
    else:
        _, test_set = io.split(data, io.SplitSpec(fraction, seed))
    report = evaluate(model, test_set)
    print(report.render(), end="")
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


def cmd_cluster(args) -> int:
    data = io.load(args.input, args.format)
    params = cluster_mod.ClusterParams(k=args.k, max_iterations=args.max_iter, seed=args.seed,
                                       restarts=args.restarts, standardize=not args.raw)
    model = cluster_mod.fit(data, params)
    table = cluster_mod.profile_report(model)
    if args.json:
        print(table.to_json(), end="")
    else:
        print(table.render(), end="")
        print(f"wcss={model.inertia_:.6f} iterations={model.n_iter_}")
    if args.csv:
        Path(args.csv).write_text(table.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    data = io.load(args.input, args.format)
    cfg = PipelineConfig(
        labeling=args.labeling,
        rule_file=args.rules,
        learn_params=_learn_params(args),
        cluster_params=cluster_mod.ClusterParams(k=args.k, max_iterations=args.max_iter,
                                                 seed=args.seed, restarts=args.restarts,
                                                 standardize=not args.raw),
    )
    report = run_pipeline(data, cfg)
    if args.out_dir:
        written = write_report(report, args.out_dir)
        for path in written.values():
            print(f"wrote {path}", file=sys.stderr)
    print(report.to_json() if args.json else report.render(), end="")
    return EXIT_OK


def cmd_rules_check(args) -> int:
    rs = resolve_ruleset(args.rules)
    results = analyze_reachability(rs)
    unreachable = [r.rule_id for r in results if not r.reachable]
    if args.json:
        print(_dump_json({
            "version": rs.version,
            "rules": [{"rule_id": r.rule_id, "reachable": r.reachable,
                       "witness": None if r.witness is None else
                       {n: r.witness.get(n) for n in rs.attributes}} for r in results],
            "unreachable": unreachable,
        }), end="")
        return EXIT_OK
    width = max(len(r.rule_id) for r in results)
    print(f"rule set {rs.version}: {len(results)} rules, {len(unreachable)} unreachable")
    for rule, res in zip(rs, results):
        status = "reachable  " if res.reachable else "UNREACHABLE"
        print(f"{res.rule_id:<{width}}  {status}  {rule}")
        if res.witness is not None:
            wit = ", ".join(f"{n}={res.witness.get(n):.4g}" for n in rule.attributes)
            print(f"{'':<{width}}  witness: {wit}")
    if unreachable:
        print("unreachable under first-match order: " + ", ".join(unreachable))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellfault", description="Cell fault diagnosis from radio KPIs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--spec", help="JSON generator spec")
    p.add_argument("--mode", choices=("uniform", "templates", "boundary"), default="uniform")
    p.add_argument("--n", type=int, default=None, help="number of records (default 1000)")
    _add_seed(p)
    p.add_argument("--label", help="label with a rule file or 'default'")
    p.add_argument("--templates", help="cluster template CSV (templates mode)")
    p.add_argument("--separation-scale", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01, help="boundary offset")
    p.add_argument("--no-counters", action="store_true", help="omit raw counter columns")
    p.add_argument("--out", required=True)
    _add_format(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("derive", help="derive KPIs from raw counters")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    _add_format(p)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("label", help="label records with a rule set")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rules", default="default")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("arff", "csv"), default=None)
    p.add_argument("--json", action="store_true")
    _add_format(p)
    p.set_defaults(func=cmd_label)

    def learn_flags(p):
        p.add_argument("--min-leaf", type=int, default=2)
        p.add_argument("--pruning", choices=("pessimistic", "reduced_error", "none"),
                       default="pessimistic")
        p.add_argument("--confidence", type=float, default=0.25)
        p.add_argument("--holdout", type=float, default=0.25,
                       help="holdout fraction for reduced-error pruning")

    p = sub.add_parser("train", help="train a C4.5 tree")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", default="model.tree")
    p.add_argument("--split", type=_fraction, default=None, help="train fraction")
    _add_seed(p)
    learn_flags(p)
    p.add_argument("--json", action="store_true")
    _add_format(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained tree")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", default="model.tree")
    p.add_argument("--split", type=_fraction, default=None,
                   help="train fraction (default: the split recorded at training)")
    _add_seed(p)
    p.add_argument("--all", action="store_true", help="evaluate on every record")
    p.add_argument("--json", metavar="PATH", help="also write the report as JSON")
    _add_format(p)
    p.set_defaults(func=cmd_eval)

    def cluster_flags(p):
        p.add_argument("--k", type=int, default=9)
        p.add_argument("--max-iter", type=int, default=100)
        p.add_argument("--restarts", type=int, default=10)
        p.add_argument("--raw", action="store_true", help="cluster without standardization")

    p = sub.add_parser("cluster", help="k-means profile of the cell population")
    p.add_argument("--in", dest="input", required=True)
    cluster_flags(p)
    _add_seed(p)
    p.add_argument("--csv", help="write the profile table as CSV")
    p.add_argument("--json", action="store_true")
    _add_format(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("pipeline", help="label, group and cluster, then report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labeling", choices=("rule_file", "trained_tree"), default="rule_file")
    p.add_argument("--rules", default="default")
    cluster_flags(p)
    learn_flags(p)
    _add_seed(p)
    p.add_argument("--out-dir", help="write report.json, report.txt and CSV files here")
    p.add_argument("--json", action="store_true")
    _add_format(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("rules-check", help="report unreachable rules with witnesses")
    p.add_argument("--rules", default="default")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rules_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed_given = getattr(args, "seed", None)
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (CellFaultError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
