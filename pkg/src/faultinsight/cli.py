"""``faultinsight`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .balancing import STRATEGIES, BalanceConfig, balance
from .data import FAULTS, FEATURES, DataFormatError, class_counts, export, read_table
from .ensemble import (ENSEMBLE_FORMAT, FORMAT_VERSION as ENSEMBLE_VERSION, MANUAL_FORMAT, REPORT_FORMAT,
                       MiningConfig, RuleEnsembleClassifier, compile_rule_table, evaluate_ensemble,
                       rows_from_document)
from .evaluation import ConfusionMatrix, benchmark, make_folds
from .explain import (BREAKDOWN_FORMAT, FORMAT_VERSION as EXPLAIN_VERSION, IMPORTANCE_FORMAT, PROFILE_FORMAT,
                      Breakdown, Profile, breakdown, ceteris_paribus, partial_dependence,
                      permutation_importance)
from .learners import FOREST_FORMAT, FOREST_FORMAT_VERSION, HyperParams, RandomForest, tune_forest
from .medoids import (MEDOIDS_FORMAT, MEDOIDS_FORMAT_VERSION, compute_medoids, load_medoids, medoid_for,
                      medoids_from_dict, save_medoids, scale_for_radar)
from .pipeline import PipelineConfig, StageError, make_learners, run_pipeline
from .rules_assoc import ARM_FORMAT, ARM_FORMAT_VERSION, mine_table, mined_to_dict
from .rules_forest import RULES_FORMAT, RULES_FORMAT_VERSION, extract_rules, rules_to_dict
from .svg import render_breakdown, render_confusion, render_profile, render_radar

FORMATS = {
    FOREST_FORMAT: FOREST_FORMAT_VERSION,
    MEDOIDS_FORMAT: MEDOIDS_FORMAT_VERSION,
    PROFILE_FORMAT: EXPLAIN_VERSION,
    BREAKDOWN_FORMAT: EXPLAIN_VERSION,
    IMPORTANCE_FORMAT: EXPLAIN_VERSION,
    RULES_FORMAT: RULES_FORMAT_VERSION,
    ARM_FORMAT: ARM_FORMAT_VERSION,
    MANUAL_FORMAT: ENSEMBLE_VERSION,
    ENSEMBLE_FORMAT: ENSEMBLE_VERSION,
    REPORT_FORMAT: ENSEMBLE_VERSION,
}


def _version_text() -> str:
    lines = [f"faultinsight {__version__}"]
    lines += [f"  {name} v{v}" for name, v in sorted(FORMATS.items())]
    return "\n".join(lines)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj, out):
    _emit(json.dumps(obj, indent=1) + "\n", out)


def _load_json(path):
    return json.loads(Path(path).read_text())


def _maybe_balance(table, args):
    if getattr(args, "balance", "none") == "none":
        return table
    return balance(table, BalanceConfig(args.balance, args.k_neighbors, args.seed))


# -- subcommands --------------------------------------------------------------------

def cmd_ingest(args):
    table = read_table(args.data, args.format)
    text = export(table)
    if args.out:
        Path(args.out).write_text(text)
    counts = class_counts(table)
    print(f"{len(table)} rows; " + ", ".join(f"{k}={v}" for k, v in counts.items()), file=sys.stderr)
    if not args.out:
        sys.stdout.write(text)


def cmd_balance(args):
    table = read_table(args.data, args.format)
    out = balance(table, BalanceConfig(args.strategy, args.k_neighbors, args.seed))
    _emit(export(out), args.out)


def cmd_benchmark(args):
    base = read_table(args.data, args.format)
    datasets = {("original" if s == "none" else s): balance(base, BalanceConfig(s, args.k_neighbors, args.seed))
                for s in args.strategies}
    cfg = PipelineConfig(seed=args.seed, benchmark_learners=args.learners, knn_k=args.knn_k)
    hp = HyperParams(args.trees, args.mtry, args.min_node_size, args.seed)
    grid = benchmark(datasets, make_learners(cfg, args.seed, hp), args.seed, args.folds)
    _emit(grid.to_csv(float_format="%.6f"), args.out)


def cmd_train(args):
    table = _maybe_balance(read_table(args.data, args.format), args)
    hp = HyperParams(args.trees, args.mtry, args.min_node_size, args.seed)
    if args.tune_grid:
        hp = tune_forest(table, json.loads(args.tune_grid), args.folds, args.seed)
        print(f"tuned: n_trees={hp.n_trees} mtry={hp.mtry} min_node_size={hp.min_node_size}", file=sys.stderr)
    model = RandomForest(hp.n_trees, hp.mtry, hp.min_node_size, seed=args.seed).fit(table.X, table.y)
    print(f"OOB error {model.oob_error_:.4f}", file=sys.stderr)
    model.save(args.out, list(FEATURES))


def cmd_medoids(args):
    table = read_table(args.data, args.format)
    meds = compute_medoids(table)
    save_medoids(meds, args.out)
    if args.radar:
        Path(args.radar).write_text(render_radar(scale_for_radar(meds, table)))


def cmd_explain(args):
    model = RandomForest.load(args.model)
    table = _maybe_balance(read_table(args.data, args.format), args)
    if args.kind == "importance":
        rep = permutation_importance(model, table.X, table.y, args.repeats, args.seed)
        _dump(rep.to_dict(), args.out)
        return
    if args.kind == "pd":
        prof = partial_dependence(model, table.X, args.feature, args.grid_size, args.background, args.seed)
        _dump(prof.to_dict(), args.out)
        return
    meds = load_medoids(args.medoids) if args.medoids else compute_medoids(read_table(args.data, args.format))
    anchor = medoid_for(meds, args.fault)
    if args.kind == "cp":
        _dump(ceteris_paribus(model, anchor, args.feature, table.X, args.grid_size).to_dict(), args.out)
    else:
        ordering = args.ordering.split(",") if args.ordering else None
        _dump(breakdown(model, anchor, table.X, ordering=ordering).to_dict(), args.out)


def cmd_mine(args):
    table = _maybe_balance(read_table(args.data, args.format), args)
    if args.source == "rf":
        if not args.model:
            raise SystemExit("mine --source rf needs --model")
        model = RandomForest.load(args.model)
        rules = extract_rules(model, table.X, table.y, args.k, args.max_depth, args.delta)
        doc = rules_to_dict(rules)
        if args.humanize:
            for d, r in zip(doc["rules"], rules):
                d["text"] = r.humanize()
        _dump(doc, args.out)
    else:
        mined = mine_table(table.X, table.y, args.bins, args.min_support, args.min_conf, args.max_len, args.k)
        _dump(mined_to_dict(mined), args.out)


def cmd_ensemble_build(args):
    model = RandomForest.load(args.model)
    rows = []
    for path in args.rules:
        rows += rows_from_document(_load_json(path))
    table = compile_rule_table(rows)
    est = RuleEnsembleClassifier(model.n_trees, model.mtry, model.min_node_size, model.seed, rules=table.rows)
    est.fallback_, est.table_, est.classes_ = model, table, model.classes_
    est.save(args.out)
    print(f"{len(table)} rules compiled", file=sys.stderr)


def cmd_ensemble_eval(args):
    table = read_table(args.data, args.format)
    manual = None
    if args.manual:
        from .ensemble import load_manual_rules
        manual = load_manual_rules(args.manual)
    cfg = BalanceConfig(args.balance, args.k_neighbors, args.seed) if args.balance != "none" else None
    mining = MiningConfig(min_rule_confidence=args.min_rule_confidence, min_rule_count=args.min_rule_count)
    data = balance(table, cfg) if cfg else table
    report = evaluate_ensemble(data, None, make_folds(data, args.folds, args.seed), mining, args.mine_on_full,
                               args.seed, args.trees, args.mtry, args.min_node_size, manual)
    print(f"ensemble accuracy {report.accuracy:.4f}; fallback forest {report.fallback_accuracy:.4f}; "
          f"rules decided {report.rule_fraction:.3f} of rows", file=sys.stderr)
    _dump(report.to_dict(), args.out)


def cmd_ensemble_predict(args):
    est = RuleEnsembleClassifier.load(args.model)
    table = read_table(args.data, args.format)
    out = est.predict_explain(table.X)
    lines = ["row,prediction,decided_by"]
    lines += [f"{i},{FAULTS[int(p)]},{d}" for i, (p, d) in enumerate(zip(out.labels, out.decided_by))]
    _emit("\n".join(lines) + "\n", args.out)


def render_document(doc, data=None) -> str:
    fmt = doc.get("format")
    if fmt == PROFILE_FORMAT:
        return render_profile(Profile.from_dict(doc))
    if fmt == BREAKDOWN_FORMAT:
        return render_breakdown(Breakdown.from_dict(doc))
    if fmt == MEDOIDS_FORMAT:
        if data is None:
            raise ValueError("rendering medoids needs --data for the scaling range")
        return render_radar(scale_for_radar(medoids_from_dict(doc), data))
    if fmt == REPORT_FORMAT:
        return render_confusion(ConfusionMatrix(np.array(doc["confusion"]), FAULTS))
    raise ValueError(f"cannot render a document of format {fmt!r}")


def cmd_render(args):
    path = Path(args.input)
    if path.suffix == ".csv":
        svg = render_confusion(ConfusionMatrix.from_csv(path.read_text()))
    else:
        data = read_table(args.data, args.format) if args.data else None
        svg = render_document(_load_json(path), data)
    _emit(svg, args.out)


def cmd_pipeline(args):
    doc = _load_json(args.config) if args.config else {}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        try:
            doc[key] = json.loads(raw)
        except json.JSONDecodeError:
            doc[key] = raw
    for key, val in (("seed", args.seed), ("data", args.data), ("out_dir", args.out_dir)):
        if val is not None:
            doc[key] = val
    if args.mine_on_full:
        doc["mine_on_full"] = True
    result = run_pipeline(PipelineConfig.from_dict(doc))
    print(f"{len(result.manifest['artifacts'])} artifacts in {result.out_dir}", file=sys.stderr)
    print(result.manifest_hash)


# -- parser -------------------------------------------------------------------------

def _data_args(p, required=True):
    p.add_argument("--data", required=required, help="raw 34-column file or cleaned CSV")
    p.add_argument("--format", choices=("auto", "raw", "cleaned"), default="auto")


def _seed_arg(p):
    p.add_argument("--seed", type=int, default=0)


def _forest_args(p):
    p.add_argument("--trees", type=int, default=186)
    p.add_argument("--mtry", type=int, default=5)
    p.add_argument("--min-node-size", type=int, default=1)


def _balance_args(p, default="none"):
    p.add_argument("--balance", choices=STRATEGIES, default=default)
    p.add_argument("--k-neighbors", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faultinsight", description=__doc__,
                                     formatter_class=argparse.RawTextHelpFormatter)
    parser.add_argument("--version", action="version", version=_version_text())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a data file, write the cleaned CSV")
    _data_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("balance", help="undersample, oversample or SMOTE")
    _data_args(p)
    _seed_arg(p)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("benchmark", help="CV accuracy of learners across balanced datasets")
    _data_args(p)
    _seed_arg(p)
    _forest_args(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--strategies", nargs="+", choices=STRATEGIES, default=list(STRATEGIES))
    p.add_argument("--learners", nargs="+", default=["random_forest", "decision_tree", "knn"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("train", help="fit a random forest and save it as JSON")
    _data_args(p)
    _seed_arg(p)
    _forest_args(p)
    _balance_args(p)
    p.add_argument("--tune-grid", help='JSON grid, e.g. \'{"n_trees": [100, 186], "mtry": [3, 5]}\'')
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("medoids", help="per-fault median/mode prototypes")
    _data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--radar", help="also write a radar SVG here")
    p.set_defaults(func=cmd_medoids)

    p = sub.add_parser("explain", help="importance, CP, PD or breakdown")
    p.add_argument("kind", choices=("importance", "cp", "pd", "bd"))
    p.add_argument("--model", required=True)
    _data_args(p)
    _seed_arg(p)
    _balance_args(p)
    p.add_argument("--medoids")
    p.add_argument("--feature")
    p.add_argument("--fault", choices=FAULTS)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--background", type=int)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--ordering", help="comma-separated feature order for bd")
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("mine", help="extract forest rules or association rules")
    p.add_argument("--source", choices=("rf", "arm"), required=True)
    p.add_argument("--model")
    _data_args(p)
    _seed_arg(p)
    _balance_args(p)
    p.add_argument("--k", type=int, default=None, help="rules to keep (rf: total, default 20; arm: per fault, default 10)")
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--min-support", type=float, default=0.01)
    p.add_argument("--min-conf", type=float, default=0.85)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--humanize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("ensemble", help="rule table with forest fallback")
    esub = p.add_subparsers(dest="action", required=True)
    b = esub.add_parser("build")
    b.add_argument("--rules", nargs="+", required=True, help="rf, arm, manual or ensemble JSON files")
    b.add_argument("--model", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_ensemble_build)
    e = esub.add_parser("eval")
    _data_args(e)
    _seed_arg(e)
    _forest_args(e)
    _balance_args(e, default="smote")
    e.add_argument("--folds", type=int, default=10)
    e.add_argument("--mine-on-full", action="store_true", help="mine rules once on all rows (leaks test folds)")
    e.add_argument("--manual", help="manual rules JSON")
    e.add_argument("--min-rule-confidence", type=float, default=1.0)
    e.add_argument("--min-rule-count", type=int, default=20)
    e.add_argument("--out")
    e.set_defaults(func=cmd_ensemble_eval)
    pr = esub.add_parser("predict")
    pr.add_argument("--model", required=True, help="ensemble JSON from 'ensemble build'")
    _data_args(pr)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_ensemble_predict)

    p = sub.add_parser("render", help="SVG from a profile, breakdown, medoids or confusion artifact")
    p.add_argument("--input", required=True)
    _data_args(p, required=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="run every stage and write a manifest")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")
    p.add_argument("--seed", type=int)
    p.add_argument("--data")
    p.add_argument("--out-dir")
    p.add_argument("--mine-on-full", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "mine" and args.k is None:
        args.k = 20 if args.source == "rf" else 10
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
