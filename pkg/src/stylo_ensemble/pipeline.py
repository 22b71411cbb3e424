"""End-to-end experiment pipeline.

Stages: ingest -> truncate -> fold -> extract -> train -> predict ->
import external prediction matrices -> enumerate ensembles -> evaluate ->
report. All cross-stage state lives in deterministic on-disk artifacts;
stages are content-addressed by the hash of their inputs so a rerun with
an unchanged config skips completed work.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import features as features_mod
from .classifiers import (
    AdaBoostConfig,
    AdaBoostModel,
    RandomForestConfig,
    RandomForestModel,
    ada_predict_proba,
    ada_train,
    rf_predict_proba,
    rf_train,
)
from .corpus import Corpus, FoldPlan, load_corpus, make_fold_plan, truncate_corpus
from .ensemble import (
    GROUP_FEATURE_CLASSIFIER,
    GROUP_PLM,
    EnsembleError,
    ModelOutput,
    enumerate_subsets,
    read_prediction_matrix,
    write_prediction_matrix,
)
from .evaluation import (
    EvaluationReport,
    boxplot_data,
    confusion,
    group_values,
    metrics,
    rank_report,
    save_reports,
)
from .features import (
    CHAR_NGRAM,
    PHRASE_PATTERN,
    TOKEN_NGRAM,
    FeatureSpec,
    PhrasePatternRule,
)

# Feature-classifier combination labels (1..6) used in ranking tables.
CLASSIFIER_COMBOS = (
    ("ada_char", "ada", CHAR_NGRAM),
    ("ada_token", "ada", TOKEN_NGRAM),
    ("ada_phrase", "ada", PHRASE_PATTERN),
    ("rf_char", "rf", CHAR_NGRAM),
    ("rf_token", "rf", TOKEN_NGRAM),
    ("rf_phrase", "rf", PHRASE_PATTERN),
)

# Report families, keyed like the box-plot axis.
FAM_PLM_SINGLES = "A_plm_singles"
FAM_PLM_ENS = "B_plm_ensembles"
FAM_PLM_ENS_W = "C_plm_ensembles_weighted"
FAM_FC_SINGLES = "D_fc_singles"
FAM_FC_ENS = "E_fc_ensembles"
FAM_FC_ENS_W = "F_fc_ensembles_weighted"
FAM_ONE_FC_ALL_PLM = "G_one_fc_with_plms"
FAM_ONE_PLM_ALL_FC = "H_one_plm_with_fcs"
FAM_INTEGRATED = "I_integrated"
FAM_INTEGRATED_W = "J_integrated_weighted"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_path: str
    output_dir: str
    seed: int = 0
    truncation: int = corpus_mod.DEFAULT_TRUNCATION
    num_folds: int = 5
    ratios: tuple[int, int, int] = (16, 2, 2)
    # features
    use_char_bigram: bool = True
    use_token_unigram: bool = True
    use_phrase_pattern: bool = True
    min_doc_freq: int = 1
    max_features: int | None = None
    frequency_mode: str = features_mod.RELATIVE_FREQUENCY
    preserved_pos: tuple[str, ...] = tuple(sorted(features_mod.DEFAULT_PRESERVED_POS))
    # classifiers
    use_rf: bool = True
    use_ada: bool = True
    rf_num_trees: int = 500
    rf_mtry: int | None = None
    rf_min_leaf: int = 1
    ada_num_rounds: int = 100
    ada_base_max_depth: int = 3
    # external model imports: directories of interchange files per model
    plm_imports: tuple[str, ...] = ()
    # ensembles
    ensemble_min_size: int = 2
    weighted: bool = True
    top_k: int = 10

    def feature_kinds(self) -> list[str]:
        kinds = []
        if self.use_char_bigram:
            kinds.append(CHAR_NGRAM)
        if self.use_token_unigram:
            kinds.append(TOKEN_NGRAM)
        if self.use_phrase_pattern:
            kinds.append(PHRASE_PATTERN)
        return kinds

    def feature_spec(self, kind: str) -> FeatureSpec:
        n = 2 if kind == CHAR_NGRAM else 1
        return FeatureSpec(
            kind=kind,
            n=n,
            min_doc_freq=self.min_doc_freq,
            max_features=self.max_features,
            frequency_mode=self.frequency_mode,
        )

    def phrase_rule(self) -> PhrasePatternRule:
        return PhrasePatternRule(frozenset(self.preserved_pos))

    def combos(self) -> list[tuple[str, str, str]]:
        kinds = set(self.feature_kinds())
        clfs = set()
        if self.use_rf:
            clfs.add("rf")
        if self.use_ada:
            clfs.add("ada")
        return [c for c in CLASSIFIER_COMBOS if c[1] in clfs and c[2] in kinds]

    def to_dict(self) -> dict:
        return {
            "corpus_path": self.corpus_path,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "truncation": self.truncation,
            "num_folds": self.num_folds,
            "ratios": list(self.ratios),
            "use_char_bigram": self.use_char_bigram,
            "use_token_unigram": self.use_token_unigram,
            "use_phrase_pattern": self.use_phrase_pattern,
            "min_doc_freq": self.min_doc_freq,
            "max_features": self.max_features,
            "frequency_mode": self.frequency_mode,
            "preserved_pos": list(self.preserved_pos),
            "use_rf": self.use_rf,
            "use_ada": self.use_ada,
            "rf_num_trees": self.rf_num_trees,
            "rf_mtry": self.rf_mtry,
            "rf_min_leaf": self.rf_min_leaf,
            "ada_num_rounds": self.ada_num_rounds,
            "ada_base_max_depth": self.ada_base_max_depth,
            "plm_imports": list(self.plm_imports),
            "ensemble_min_size": self.ensemble_min_size,
            "weighted": self.weighted,
            "top_k": self.top_k,
        }


def config_from_dict(obj: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from a parsed TOML document (see README for schema)."""
    base = base_dir or Path(".")

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    corpus = obj.get("corpus", {})
    folds = obj.get("folds", {})
    feats = obj.get("features", {})
    rf = obj.get("classifiers", {}).get("rf", {})
    ada = obj.get("classifiers", {}).get("ada", {})
    plm = obj.get("plm", {})
    ens = obj.get("ensemble", {})
    out = obj.get("output", {})
    defaults = ExperimentConfig(corpus_path="", output_dir="")
    return ExperimentConfig(
        corpus_path=resolve(corpus["path"]),
        output_dir=resolve(out.get("dir", "out")),
        seed=int(obj.get("seed", 0)),
        truncation=int(corpus.get("truncate", defaults.truncation)),
        num_folds=int(folds.get("num_folds", defaults.num_folds)),
        ratios=tuple(folds.get("ratios", list(defaults.ratios))),
        use_char_bigram=bool(feats.get("char_bigram", True)),
        use_token_unigram=bool(feats.get("token_unigram", True)),
        use_phrase_pattern=bool(feats.get("phrase_pattern", True)),
        min_doc_freq=int(feats.get("min_doc_freq", 1)),
        max_features=feats.get("max_features"),
        frequency_mode=feats.get("frequency_mode", defaults.frequency_mode),
        preserved_pos=tuple(feats.get("preserved_pos", list(defaults.preserved_pos))),
        use_rf=bool(rf.get("enabled", True)),
        use_ada=bool(ada.get("enabled", True)),
        rf_num_trees=int(rf.get("num_trees", defaults.rf_num_trees)),
        rf_mtry=rf.get("mtry"),
        rf_min_leaf=int(rf.get("min_leaf", defaults.rf_min_leaf)),
        ada_num_rounds=int(ada.get("num_rounds", defaults.ada_num_rounds)),
        ada_base_max_depth=int(ada.get("base_max_depth", defaults.ada_base_max_depth)),
        plm_imports=tuple(resolve(p) for p in plm.get("import", [])),
        ensemble_min_size=int(ens.get("min_size", defaults.ensemble_min_size)),
        weighted=bool(ens.get("weighted", defaults.weighted)),
        top_k=int(out.get("top_k", defaults.top_k)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    path = Path(path)
    with path.open("rb") as fh:
        obj = tomllib.load(fh)
    return config_from_dict(obj, base_dir=path.parent)


def derive_seed(master: int, tag: str) -> int:
    digest = hashlib.sha256(f"{master}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**32)


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunResult:
    output_dir: Path
    counts: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)  # family -> list[EvaluationReport]


# ---------------------------------------------------------------------------
# stage helpers


def _stage_dir(outdir: Path, name: str) -> Path:
    d = outdir / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stage_done(outdir: Path, name: str, digest: str) -> bool:
    marker = outdir / "state" / f"{name}.hash"
    return marker.exists() and marker.read_text().strip() == digest


def _mark_stage(outdir: Path, name: str, digest: str) -> None:
    state = _stage_dir(outdir, "state")
    (state / f"{name}.hash").write_text(digest + "\n")


def prepare_corpus(config: ExperimentConfig) -> Corpus:
    corpus = load_corpus(config.corpus_path)
    return truncate_corpus(corpus, config.truncation)


def fold_stage(config: ExperimentConfig, corpus: Corpus, outdir: Path, digest: str) -> FoldPlan:
    plan_path = outdir / "fold_plan.json"
    if _stage_done(outdir, "fold", digest) and plan_path.exists():
        return FoldPlan.load(plan_path)
    try:
        plan = make_fold_plan(
            corpus, config.num_folds, config.ratios, derive_seed(config.seed, "folds")
        )
    except corpus_mod.FoldPlanError as exc:
        raise StageError("fold", str(exc)) from exc
    plan.save(plan_path)
    _mark_stage(outdir, "fold", digest)
    return plan


def _matrix_paths(feat_dir: Path, fold: int, kind: str, split: str):
    stem = f"fold{fold}_{kind}_{split}"
    return feat_dir / f"{stem}.csv", feat_dir / f"{stem}.vocab.csv"


def extract_stage(
    config: ExperimentConfig, corpus: Corpus, plan: FoldPlan, outdir: Path, digest: str
) -> dict:
    """Per (fold, kind): vocabulary from the training split, applied to all
    three splits. Returns {(fold, kind): {split: FeatureMatrix}}."""
    feat_dir = _stage_dir(outdir, "features")
    out: dict = {}
    if _stage_done(outdir, "extract", digest):
        try:
            for f in range(plan.num_folds):
                for kind in config.feature_kinds():
                    out[(f, kind)] = {
                        split: features_mod.load_matrix(
                            *_matrix_paths(feat_dir, f, kind, split)
                        )
                        for split in ("train", "validation", "test")
                    }
            return out
        except OSError:
            out = {}
    rule = config.phrase_rule()
    for f, fold in enumerate(plan.folds):
        splits = {
            "train": corpus.subset(fold.train),
            "validation": corpus.subset(fold.validation),
            "test": corpus.subset(fold.test),
        }
        for kind in config.feature_kinds():
            spec = config.feature_spec(kind)
            try:
                train_fm = features_mod.extract(splits["train"], spec, rule)
                fms = {"train": train_fm}
                for split in ("validation", "test"):
                    fms[split] = features_mod.vectorize(
                        splits[split], train_fm.vocabulary, spec, rule
                    )
            except features_mod.AnnotationError as exc:
                raise StageError("extract", str(exc)) from exc
            for split, fm in fms.items():
                features_mod.save_matrix(fm, *_matrix_paths(feat_dir, f, kind, split))
            out[(f, kind)] = fms
    _mark_stage(outdir, "extract", digest)
    return out


def _train_one(config: ExperimentConfig, combo_id: str, clf: str, X, y, num_classes: int):
    seed = derive_seed(config.seed, f"train:{combo_id}")
    if clf == "rf":
        cfg = RandomForestConfig(
            num_trees=config.rf_num_trees,
            mtry=config.rf_mtry,
            min_leaf=config.rf_min_leaf,
            seed=seed,
        )
        return rf_train(X, y, num_classes, cfg)
    cfg = AdaBoostConfig(
        num_rounds=config.ada_num_rounds,
        base_max_depth=config.ada_base_max_depth,
        seed=seed,
    )
    return ada_train(X, y, num_classes, cfg)


def train_predict_stage(
    config: ExperimentConfig,
    corpus: Corpus,
    plan: FoldPlan,
    matrices: dict,
    outdir: Path,
    digest: str,
) -> dict:
    """Train the feature-classifier combos per fold and emit validation/test
    probability matrices. Returns {fold: {model_id: {split: ModelOutput}}}."""
    model_dir = _stage_dir(outdir, "models")
    pred_dir = _stage_dir(outdir, "predictions")
    labels = list(corpus.labels)
    label_index = {l: i for i, l in enumerate(labels)}
    author_of = {d.doc_id: d.author for d in corpus.documents}

    out: dict = {f: {} for f in range(plan.num_folds)}
    if _stage_done(outdir, "train", digest):
        try:
            for f in range(plan.num_folds):
                for combo_id, _, _ in config.combos():
                    out[f][combo_id] = {
                        split: read_prediction_matrix(
                            pred_dir / f"fold{f}_{combo_id}_{split}.csv",
                            pred_dir / f"fold{f}_{combo_id}_{split}.manifest.json",
                        )[0]
                        for split in ("validation", "test")
                    }
            return out
        except (OSError, EnsembleError):
            out = {f: {} for f in range(plan.num_folds)}

    for f in range(plan.num_folds):
        for combo_id, clf, kind in config.combos():
            fms = matrices[(f, kind)]
            Xtr = fms["train"].dense()
            ytr = np.array([label_index[author_of[d]] for d in fms["train"].doc_ids])
            try:
                model = _train_one(config, combo_id, clf, Xtr, ytr, len(labels))
            except Exception as exc:
                raise StageError("train", f"{combo_id} fold {f}: {exc}") from exc
            model.save(model_dir / f"fold{f}_{combo_id}.json")
            for split in ("validation", "test"):
                Xs = fms[split].dense()
                if isinstance(model, RandomForestModel):
                    probs = rf_predict_proba(model, Xs)
                else:
                    probs = ada_predict_proba(model, Xs)
                output = ModelOutput(
                    model_id=combo_id,
                    group=GROUP_FEATURE_CLASSIFIER,
                    doc_ids=fms[split].doc_ids,
                    class_order=tuple(labels),
                    probs=probs,
                )
                write_prediction_matrix(
                    output,
                    pred_dir / f"fold{f}_{combo_id}_{split}.csv",
                    pred_dir / f"fold{f}_{combo_id}_{split}.manifest.json",
                    fold=f,
                )
                out[f][combo_id] = out[f].get(combo_id, {})
                out[f][combo_id][split] = output
    _mark_stage(outdir, "train", digest)
    return out


def import_predictions(
    import_dirs,
    corpus: Corpus,
    plan: FoldPlan,
) -> dict:
    """Validate and register external prediction matrices.

    Each directory holds one model's interchange files, named
    fold{f}_{split}.csv / fold{f}_{split}.manifest.json; the test split is
    required, validation is optional (needed only for F1-weighted fusion).
    Returns {fold: {model_id: {split: ModelOutput}}}.
    """
    out: dict = {f: {} for f in range(plan.num_folds)}
    expected_classes = tuple(corpus.labels)
    for d in sorted(str(p) for p in import_dirs):
        d = Path(d)
        if not d.is_dir():
            raise StageError("import-plm", f"{d} is not a directory")
        model_id = None
        for f, fold in enumerate(plan.folds):
            for split in ("validation", "test"):
                csv_path = d / f"fold{f}_{split}.csv"
                man_path = d / f"fold{f}_{split}.manifest.json"
                if not csv_path.exists():
                    if split == "test":
                        raise StageError(
                            "import-plm", f"{d}: missing required file {csv_path.name}"
                        )
                    continue
                try:
                    output, fold_no = read_prediction_matrix(csv_path, man_path)
                except (EnsembleError, OSError, json.JSONDecodeError) as exc:
                    raise StageError("import-plm", f"{csv_path}: {exc}") from exc
                if fold_no != f:
                    raise StageError(
                        "import-plm", f"{csv_path}: manifest fold {fold_no} != {f}"
                    )
                if output.class_order != expected_classes:
                    raise StageError(
                        "import-plm",
                        f"{csv_path}: class order {output.class_order} does not "
                        f"match corpus labels {expected_classes}",
                    )
                if set(output.doc_ids) != set(fold.role(split)):
                    raise StageError(
                        "import-plm",
                        f"{csv_path}: doc coverage does not match the fold's "
                        f"{split} split",
                    )
                if output.group != GROUP_PLM:
                    raise StageError(
                        "import-plm", f"{csv_path}: group must be {GROUP_PLM!r}"
                    )
                if model_id is None:
                    model_id = output.model_id
                elif output.model_id != model_id:
                    raise StageError(
                        "import-plm", f"{d}: inconsistent model_id across folds"
                    )
                out[f].setdefault(model_id, {})[split] = output
    ids = [set(models) for models in out.values()]
    if ids and any(s != ids[0] for s in ids):
        raise StageError("import-plm", "model coverage differs across folds")
    return out


def import_stage(
    config: ExperimentConfig,
    corpus: Corpus,
    plan: FoldPlan,
    outdir: Path,
) -> dict:
    registered = import_predictions(config.plm_imports, corpus, plan)
    pred_dir = _stage_dir(outdir, "predictions")
    for f, models in registered.items():
        for model_id, splits in models.items():
            for split, output in splits.items():
                write_prediction_matrix(
                    output,
                    pred_dir / f"fold{f}_{model_id}_{split}.csv",
                    pred_dir / f"fold{f}_{model_id}_{split}.manifest.json",
                    fold=f,
                )
    return registered


# ---------------------------------------------------------------------------
# ensemble evaluation


def _align(output: ModelOutput) -> np.ndarray:
    """Probability matrix with rows sorted by doc_id."""
    order = np.argsort(np.array(output.doc_ids))
    return output.probs[order]


def _fold_truth(corpus: Corpus, doc_ids) -> list[str]:
    author_of = {d.doc_id: d.author for d in corpus.documents}
    return [author_of[i] for i in sorted(doc_ids)]


def _score(fused: np.ndarray, true_labels: list[str], labels: list[str]):
    pred = [labels[j] for j in np.argmax(fused, axis=1)]
    cm = confusion(true_labels, pred, labels)
    cls, macro = metrics(cm)
    return cls, macro


def _weighted_mean_stack(mats: list[np.ndarray], weights: list[float]) -> np.ndarray:
    total = sum(weights)
    out = np.zeros_like(mats[0])
    for m, w in zip(mats, weights):
        out += (w / total) * m
    return out


@dataclass
class _FoldData:
    true_labels: list[str]
    test: dict  # model_id -> aligned test probs
    val_f1: dict  # model_id -> validation macro F1 (1.0 when unavailable)


def _collect_fold_data(
    corpus: Corpus, plan: FoldPlan, fc_outputs: dict, plm_outputs: dict
) -> list[_FoldData]:
    labels = list(corpus.labels)
    folds = []
    for f, fold in enumerate(plan.folds):
        true_labels = _fold_truth(corpus, fold.test)
        test = {}
        val_f1 = {}
        for source in (fc_outputs.get(f, {}), plm_outputs.get(f, {})):
            for model_id, splits in source.items():
                test[model_id] = _align(splits["test"])
                if "validation" in splits:
                    val_out = splits["validation"]
                    vtrue = _fold_truth(corpus, val_out.doc_ids)
                    _, vf1 = _score(_align(val_out), vtrue, labels)
                    # Positive floor keeps degenerate validation scores usable
                    # as soft-vote weights.
                    val_f1[model_id] = max(vf1, 1e-6)
                else:
                    val_f1[model_id] = 1.0
        folds.append(_FoldData(true_labels=true_labels, test=test, val_f1=val_f1))
    return folds


def _evaluate_fixed(
    identifier: str,
    members: tuple[str, ...],
    folds: list[_FoldData],
    labels: list[str],
    weighted: bool,
    grouped_split: int | None = None,
) -> EvaluationReport:
    """Score one member set across folds.

    grouped_split: when set, members[:k] and members[k:] are fused as two
    groups whose mean vectors are averaged (the integrated form);
    otherwise all members pool into one weighted mean.
    """
    fold_f1 = []
    fold_cls = []
    for fd in folds:
        if grouped_split is None:
            mats = [fd.test[m] for m in members]
            ws = [fd.val_f1[m] if weighted else 1.0 for m in members]
            fused = _weighted_mean_stack(mats, ws)
        else:
            first, second = members[:grouped_split], members[grouped_split:]
            parts = []
            for part in (first, second):
                mats = [fd.test[m] for m in part]
                ws = [fd.val_f1[m] if weighted else 1.0 for m in part]
                parts.append(_weighted_mean_stack(mats, ws))
            fused = (parts[0] + parts[1]) / 2.0
        cls, macro = _score(fused, fd.true_labels, labels)
        fold_f1.append(macro)
        fold_cls.append(cls)
    return EvaluationReport(
        identifier=identifier,
        members=members,
        fold_macro_f1=tuple(fold_f1),
        fold_class_metrics=tuple(fold_cls),
    )


def evaluate_stage(
    config: ExperimentConfig,
    corpus: Corpus,
    plan: FoldPlan,
    fc_outputs: dict,
    plm_outputs: dict,
    outdir: Path,
) -> dict:
    """Singles, per-group ensembles, comparison baselines, and the
    integrated cross-product. Returns {family: [EvaluationReport]}."""
    labels = list(corpus.labels)
    folds = _collect_fold_data(corpus, plan, fc_outputs, plm_outputs)
    fc_ids = sorted(fc_outputs.get(0, {}))
    plm_ids = sorted(plm_outputs.get(0, {}))
    min_size = config.ensemble_min_size

    def fixed(identifier, members, weighted=False, grouped_split=None):
        return _evaluate_fixed(identifier, tuple(members), folds, labels,
                               weighted, grouped_split)

    families: dict[str, list[EvaluationReport]] = {}
    families[FAM_FC_SINGLES] = [fixed(m, (m,)) for m in fc_ids]
    if plm_ids:
        families[FAM_PLM_SINGLES] = [fixed(m, (m,)) for m in plm_ids]

    if len(fc_ids) >= min_size:
        subsets = enumerate_subsets(fc_ids, min_size)
        families[FAM_FC_ENS] = [fixed("+".join(s), s) for s in subsets]
        if config.weighted:
            families[FAM_FC_ENS_W] = [
                fixed("+".join(s), s, weighted=True) for s in subsets
            ]
    if len(plm_ids) >= min_size:
        subsets = enumerate_subsets(plm_ids, min_size)
        families[FAM_PLM_ENS] = [fixed("+".join(s), s) for s in subsets]
        if config.weighted:
            families[FAM_PLM_ENS_W] = [
                fixed("+".join(s), s, weighted=True) for s in subsets
            ]

    if plm_ids and fc_ids:
        # comparison baselines: one member of one group pooled with the
        # whole other group
        families[FAM_ONE_FC_ALL_PLM] = [
            fixed(f"{m}+plms", (m, *plm_ids)) for m in fc_ids
        ]
        families[FAM_ONE_PLM_ALL_FC] = [
            fixed(f"{m}+fcs", (m, *fc_ids)) for m in plm_ids
        ]

    if len(plm_ids) >= min_size and len(fc_ids) >= min_size:
        plm_subsets = enumerate_subsets(plm_ids, min_size)
        fc_subsets = enumerate_subsets(fc_ids, min_size)
        integrated = []
        integrated_w = []
        for ps in plm_subsets:
            for fs in fc_subsets:
                ident = "+".join(ps) + "|" + "+".join(fs)
                members = (*ps, *fs)
                integrated.append(
                    fixed(ident, members, grouped_split=len(ps))
                )
                if config.weighted:
                    integrated_w.append(
                        fixed(ident, members, weighted=True, grouped_split=len(ps))
                    )
        families[FAM_INTEGRATED] = integrated
        if config.weighted:
            families[FAM_INTEGRATED_W] = integrated_w

    report_dir = _stage_dir(outdir, "reports")
    for family, reports in families.items():
        save_reports(reports, report_dir / f"{family}.json")
    _write_summaries(config, families, report_dir)
    return families


def _write_summaries(config: ExperimentConfig, families: dict, report_dir: Path) -> None:
    import csv as _csv

    # ranking tables (Table-5 shape)
    for family, reports in families.items():
        if len(reports) < 2:
            continue
        table = rank_report(reports, config.top_k)
        with (report_dir / f"ranking_{family}.csv").open("w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["rank", "identifier", "members", "mean_macro_f1", "sd_macro_f1"])
            for row in table:
                w.writerow(
                    [
                        row["rank"],
                        row["identifier"],
                        "+".join(row["members"]),
                        repr(row["mean_macro_f1"]),
                        repr(row["sd_macro_f1"]),
                    ]
                )

    # per-family mean/sd/max with top-50 truncation (Table-4 shape)
    values = {
        family: [r.mean_macro_f1 for r in reports]
        for family, reports in families.items()
    }
    truncated = group_values(values)
    with (report_dir / "stats_summary.csv").open("w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["family", "n_total", "n_used", "mean", "sd", "max"])
        for family in sorted(values):
            used = np.asarray(truncated[family])
            sd = float(np.std(used, ddof=1)) if used.size > 1 else 0.0
            w.writerow(
                [
                    family,
                    len(values[family]),
                    used.size,
                    repr(float(used.mean())),
                    repr(sd),
                    repr(float(max(values[family]))),
                ]
            )

    # box-plot data (Fig-2 shape)
    rows = boxplot_data(values)
    with (report_dir / "boxplot.csv").open("w", newline="") as fh:
        w = _csv.writer(fh)
        header = ["group", "n_total", "n_used", "min", "q1", "median", "q3", "max", "mean", "sd"]
        w.writerow(header)
        for row in rows:
            w.writerow([row["group"], row["n_total"], row["n_used"]]
                       + [repr(row[k]) for k in header[3:]])


def compute_digest(config: ExperimentConfig) -> tuple[str, str]:
    """(corpus sha256, combined stage digest) for content-addressed skipping."""
    corpus_digest = _sha256_file(Path(config.corpus_path))
    # the output location does not affect results, so it is not hashed
    relevant = {k: v for k, v in config.to_dict().items() if k != "output_dir"}
    config_digest = hashlib.sha256(
        json.dumps(relevant, sort_keys=True).encode()
    ).hexdigest()
    return corpus_digest, hashlib.sha256(
        (corpus_digest + config_digest).encode()
    ).hexdigest()


def run_pipeline(config: ExperimentConfig) -> RunResult:
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    incomplete = outdir / "INCOMPLETE"
    incomplete.write_text("run in progress or aborted\n")

    corpus_digest, digest = compute_digest(config)

    try:
        corpus = prepare_corpus(config)
    except corpus_mod.CorpusError as exc:
        raise StageError("ingest", str(exc)) from exc
    plan = fold_stage(config, corpus, outdir, digest)
    matrices = extract_stage(config, corpus, plan, outdir, digest)
    fc_outputs = train_predict_stage(config, corpus, plan, matrices, outdir, digest)
    plm_outputs = import_stage(config, corpus, plan, outdir) if config.plm_imports else {}
    families = evaluate_stage(config, corpus, plan, fc_outputs, plm_outputs, outdir)

    counts = {family: len(reports) for family, reports in families.items()}
    manifest = {
        "config": config.to_dict(),
        "corpus_sha256": corpus_digest,
        "labels": list(corpus.labels),
        "report_counts": counts,
        "stage_digest": digest,
    }
    dump_json(manifest, outdir / "run_manifest.json")
    incomplete.unlink()
    return RunResult(output_dir=outdir, counts=counts, reports=families)
