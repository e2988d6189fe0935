"""End-to-end batch run: ingest, balance, benchmark, train, explain, mine, ensemble.

Every stage draws its seed from the config seed and the stage name, so a
stage's randomness does not depend on which other stages ran.  The run
writes ``manifest.json`` listing each artifact with its SHA-256.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import pandas as pd

from . import __version__
from .balancing import STRATEGIES, BalanceConfig, balance
from .data import FAULTS, FEATURES, export, make_synthetic, read_table
from .ensemble import MiningConfig, evaluate_ensemble, load_manual_rules
from .evaluation import benchmark, make_folds
from .explain import (breakdown, ceteris_paribus, correlation_filter, partial_dependence,
                      permutation_importance)
from .learners import DecisionTree, HyperParams, KNearestNeighbors, RandomForest, tune_forest
from .medoids import compute_medoids, medoids_to_dict, scale_for_radar
from .rules_assoc import mine_table, mined_to_dict
from .rules_forest import extract_rules, rules_to_dict
from .svg import render_breakdown, render_confusion, render_profile, render_radar

SYNTHETIC = "synthetic"
DATASET_NAMES = {"none": "original", "undersample": "undersample", "oversample": "oversample",
                 "smote": "smote"}


def stage_seed(seed: int, stage: str) -> int:
    """32-bit seed for ``stage``: the first 4 bytes of sha256("<seed>:<stage>")."""
    return int.from_bytes(hashlib.sha256(f"{seed}:{stage}".encode()).digest()[:4], "big")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


@dataclass
class PipelineConfig:
    """Settings for :func:`run_pipeline`.

    ``data`` is a file path, or ``"synthetic"`` for the generated stand-in.
    ``seed`` has no default on purpose.
    """

    seed: int
    data: str = ""
    data_format: str = "auto"
    out_dir: str = "artifacts"
    k_neighbors: int = 5
    n_folds: int = 10
    n_trees: int = 186
    mtry: int = 5
    min_node_size: int = 1
    tune_grid: dict | None = None
    benchmark_learners: list = field(default_factory=lambda: ["random_forest", "decision_tree", "knn"])
    knn_k: int = 5
    correlation_threshold: float = 0.90
    importance_repeats: int = 10
    explain_features: list = field(default_factory=lambda: ["Length_of_Conveyer", "Steel_Plate_Thickness"])
    explain_faults: list = field(default_factory=lambda: list(FAULTS))
    grid_size: int = 101
    pd_background: int | None = 500
    rf_rules_k: int = 20
    rf_rules_max_depth: int = 6
    prune_delta: float = 0.01
    bins: int = 20
    min_support: float = 0.01
    min_confidence: float = 0.85
    max_len: int = 5
    arm_top_k: int = 10
    manual_rules: str | None = None
    mine_on_full: bool = False
    ensemble_dataset: str = "smote"

    def __post_init__(self):
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")
        if not self.data:
            self.data = os.environ.get("FAULTINSIGHT_DATA", "")
        if self.ensemble_dataset not in DATASET_NAMES.values():
            raise ValueError(f"ensemble_dataset must be one of {sorted(DATASET_NAMES.values())}")

    @classmethod
    def from_dict(cls, doc: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in doc:
            raise ValueError("config must set a seed")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> PipelineConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def mining(self) -> MiningConfig:
        return MiningConfig(forest_k=self.rf_rules_k, forest_max_depth=self.rf_rules_max_depth,
                            prune_delta=self.prune_delta, bins=self.bins, min_support=self.min_support,
                            min_confidence=self.min_confidence, max_len=self.max_len,
                            assoc_top_k=self.arm_top_k)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineResult:
    out_dir: Path
    manifest: dict
    manifest_hash: str


class _Run:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out_dir)
        self.artifacts: list[dict] = []

    def write(self, stage: str, rel: str, content: str | bytes):
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, str):
            path.write_text(content)
        else:
            path.write_bytes(content)
        self.artifacts.append({"stage": stage, "path": rel, "sha256": sha256_file(path)})

    def write_json(self, stage: str, rel: str, obj):
        self.write(stage, rel, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_table(config: PipelineConfig):
    if config.data == SYNTHETIC:
        return make_synthetic(seed=stage_seed(config.seed, "synthetic"))
    if not config.data:
        raise FileNotFoundError("no data file given (set data in the config or FAULTINSIGHT_DATA)")
    return read_table(config.data, format=config.data_format)


def make_learners(config: PipelineConfig, seed: int, hp: HyperParams) -> dict:
    factory = {
        "random_forest": lambda: RandomForest(hp.n_trees, hp.mtry, hp.min_node_size, seed=seed),
        "decision_tree": lambda: DecisionTree(seed=seed),
        "knn": lambda: KNearestNeighbors(k=config.knn_k),
    }
    unknown = set(config.benchmark_learners) - set(factory)
    if unknown:
        raise ValueError(f"unknown learners {sorted(unknown)}")
    return {name: factory[name]() for name in config.benchmark_learners}


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage in order and write artifacts plus ``manifest.json`` to ``out_dir``.

    A failing stage raises :class:`StageError` naming the stage; files
    already written are left in place.
    """
    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    state: dict = {}

    def stage(name):
        def wrap(fn):
            try:
                fn(stage_seed(config.seed, name))
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
                raise StageError(name, exc) from exc
        return wrap

    @stage("ingest")
    def _(seed):
        state["original"] = table = load_table(config)
        run.write("ingest", "data/original.csv", export(table))

    @stage("balance")
    def _(seed):
        sets = {}
        for strategy in STRATEGIES:
            name = DATASET_NAMES[strategy]
            t = balance(state["original"], BalanceConfig(strategy, config.k_neighbors, seed))
            sets[name] = t
            if strategy != "none":
                run.write("balance", f"data/{name}.csv", export(t))
        state["datasets"] = sets

    @stage("tune")
    def _(seed):
        hp = HyperParams(config.n_trees, config.mtry, config.min_node_size, seed)
        if config.tune_grid:
            hp, scores = tune_forest(state["datasets"]["smote"], config.tune_grid, config.n_folds, seed,
                                     return_scores=True)
            frame = pd.DataFrame([{**p, "accuracy": a} for p, a in scores])
            run.write("tune", "tuning.csv", frame.to_csv(index=False, float_format="%.10g"))
        state["hp"] = hp

    @stage("benchmark")
    def _(seed):
        grid = benchmark(state["datasets"], make_learners(config, seed, state["hp"]), seed, config.n_folds)
        run.write("benchmark", "benchmark.csv", grid.to_csv(float_format="%.10g"))

    @stage("train")
    def _(seed):
        hp = state["hp"]
        smote = state["datasets"]["smote"]
        model = RandomForest(hp.n_trees, hp.mtry, hp.min_node_size, seed=seed).fit(smote.X, smote.y)
        state["model"] = model
        run.write_json("train", "model.json", model.to_dict(list(FEATURES)))
        run.write_json("train", "oob.json", {"oob_error": model.oob_error_})

    @stage("medoids")
    def _(seed):
        meds = compute_medoids(state["original"])
        state["medoids"] = {m.fault: m for m in meds}
        run.write_json("medoids", "medoids.json", medoids_to_dict(meds))
        run.write("medoids", "figures/radar.svg", render_radar(scale_for_radar(meds, state["original"])))

    @stage("explain")
    def _(seed):
        model, original = state["model"], state["original"]
        smote = state["datasets"]["smote"]
        corr = correlation_filter(original.X, FEATURES, config.correlation_threshold)
        run.write_json("explain", "explain/correlation.json",
                       {"threshold": corr.threshold, "groups": corr.groups, "flagged": corr.flagged,
                        "zero_variance": corr.zero_variance})
        imp = permutation_importance(model, smote.X, smote.y, config.importance_repeats, seed)
        run.write_json("explain", "explain/importance.json", imp.to_dict())
        for feature in config.explain_features:
            pd_ = partial_dependence(model, smote.X, feature, config.grid_size, config.pd_background, seed)
            run.write_json("explain", f"explain/pd_{feature}.json", pd_.to_dict())
            run.write("explain", f"figures/pd_{feature}.svg", render_profile(pd_))
            for fault in config.explain_faults:
                cp = ceteris_paribus(model, state["medoids"][fault], feature, smote.X, config.grid_size)
                run.write_json("explain", f"explain/cp_{fault}_{feature}.json", cp.to_dict())
                run.write("explain", f"figures/cp_{fault}_{feature}.svg", render_profile(cp))
        for fault in config.explain_faults:
            bd = breakdown(model, state["medoids"][fault], smote.X)
            run.write_json("explain", f"explain/bd_{fault}.json", bd.to_dict())
            run.write("explain", f"figures/bd_{fault}.svg", render_breakdown(bd))

    @stage("mine")
    def _(seed):
        smote = state["datasets"]["smote"]
        rules = extract_rules(state["model"], smote.X, smote.y, config.rf_rules_k, config.rf_rules_max_depth,
                              config.prune_delta)
        doc = rules_to_dict(rules)
        for d, r in zip(doc["rules"], rules):
            d["text"] = r.humanize()
        run.write_json("mine", "rules/rf.json", doc)
        mined = mine_table(smote.X, smote.y, config.bins, config.min_support, config.min_confidence,
                           config.max_len, config.arm_top_k)
        run.write_json("mine", "rules/arm.json", mined_to_dict(mined))

    @stage("ensemble")
    def _(seed):
        data = state["datasets"][config.ensemble_dataset]
        hp = state["hp"]
        manual = load_manual_rules(config.manual_rules) if config.manual_rules else None
        report = evaluate_ensemble(data, None, make_folds(data, config.n_folds, seed), config.mining(),
                                   config.mine_on_full, seed, hp.n_trees, hp.mtry, hp.min_node_size, manual)
        run.write_json("ensemble", "ensemble/report.json",
                       {"dataset": config.ensemble_dataset, **report.to_dict()})
        run.write("ensemble", "figures/ensemble_confusion.svg", render_confusion(report.confusion))

    config_doc = config.to_dict()
    config_doc.pop("out_dir")
    manifest = {
        "package_version": __version__,
        "config": config_doc,
        "config_hash": hashlib.sha256(canonical_json(config_doc).encode()).hexdigest(),
        "stage_seeds": {s: stage_seed(config.seed, s) for s in
                        ("ingest", "balance", "tune", "benchmark", "train", "medoids", "explain", "mine",
                         "ensemble")},
        "artifacts": run.artifacts,
    }
    text = canonical_json(manifest)
    (run.out / "manifest.json").write_text(text + "\n")
    return PipelineResult(run.out, manifest, hashlib.sha256(text.encode()).hexdigest())
