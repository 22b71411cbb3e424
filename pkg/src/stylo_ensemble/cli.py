"""Command-line front end.

All experiment subcommands read a TOML config (see README for the schema)
and run the pipeline up to the requested stage; completed stages are
skipped via content hashes, so e.g. `ensemble` after `train` reuses the
trained models. Setting STYLO_OUTPUT_ROOT reroots the config's output
directory (its final path component) under that root.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import pipeline as pl
from .corpus import make_fold_plan, save_corpus
from .evaluation import load_reports, welch_t_test
from .synthetic import (
    StubModelSpec,
    SyntheticCorpusSpec,
    gen_synthetic,
    write_stub_model,
)

OUTPUT_ROOT_ENV = "STYLO_OUTPUT_ROOT"


def _load_config(path: str) -> pl.ExperimentConfig:
    config = pl.load_config(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        config = replace(
            config, output_dir=str(Path(root) / Path(config.output_dir).name)
        )
    return config


def _stage_context(config: pl.ExperimentConfig):
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _, digest = pl.compute_digest(config)
    corpus = pl.prepare_corpus(config)
    return outdir, digest, corpus


def cmd_gen_synth(args) -> int:
    spec = SyntheticCorpusSpec(
        num_authors=args.authors,
        docs_per_author=args.docs_per_author,
        tokens_per_doc=args.tokens,
        divergence=args.divergence,
        seed=args.seed,
    )
    corpus = gen_synthetic(spec)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} documents, {len(corpus.labels)} authors -> {args.out}")
    if args.stub:
        if args.stub_dir is None:
            print("--stub requires --stub-dir", file=sys.stderr)
            return 2
        plan = make_fold_plan(
            corpus, args.num_folds, tuple(args.ratios), seed=args.seed
        )
        for i, entry in enumerate(args.stub):
            model_id, _, rate = entry.partition(":")
            stub = StubModelSpec(
                model_id=model_id,
                hit_rate=float(rate) if rate else 0.8,
                seed=args.seed * 1000 + i,
            )
            target = Path(args.stub_dir) / model_id
            target.mkdir(parents=True, exist_ok=True)
            write_stub_model(stub, corpus, plan, target)
            print(f"wrote stub prediction matrices for {model_id} -> {target}")
    return 0


def cmd_fold(args) -> int:
    config = _load_config(args.config)
    outdir, digest, corpus = _stage_context(config)
    plan = pl.fold_stage(config, corpus, outdir, digest)
    print(f"fold plan with {plan.num_folds} folds -> {outdir / 'fold_plan.json'}")
    return 0


def cmd_extract(args) -> int:
    config = _load_config(args.config)
    outdir, digest, corpus = _stage_context(config)
    plan = pl.fold_stage(config, corpus, outdir, digest)
    matrices = pl.extract_stage(config, corpus, plan, outdir, digest)
    print(f"{len(matrices)} feature matrices per split -> {outdir / 'features'}")
    return 0


def _through_train(config: pl.ExperimentConfig):
    outdir, digest, corpus = _stage_context(config)
    plan = pl.fold_stage(config, corpus, outdir, digest)
    matrices = pl.extract_stage(config, corpus, plan, outdir, digest)
    fc = pl.train_predict_stage(config, corpus, plan, matrices, outdir, digest)
    return outdir, digest, corpus, plan, fc


def cmd_train(args) -> int:
    config = _load_config(args.config)
    outdir, _, _, plan, fc = _through_train(config)
    combos = [c[0] for c in config.combos()]
    print(
        f"trained {len(combos)} combinations x {plan.num_folds} folds "
        f"({', '.join(combos)}) -> {outdir / 'models'}"
    )
    return 0


def cmd_predict(args) -> int:
    config = _load_config(args.config)
    outdir, _, _, plan, fc = _through_train(config)
    n = sum(len(splits) for models in fc.values() for splits in models.values())
    print(f"{n} prediction matrices -> {outdir / 'predictions'}")
    return 0


def cmd_import_plm(args) -> int:
    config = _load_config(args.config)
    outdir, digest, corpus = _stage_context(config)
    plan = pl.fold_stage(config, corpus, outdir, digest)
    if not config.plm_imports:
        print("no plm import paths configured", file=sys.stderr)
        return 2
    registered = pl.import_stage(config, corpus, plan, outdir)
    ids = sorted(registered.get(0, {}))
    print(f"registered external models: {', '.join(ids)}")
    return 0


def _through_evaluate(config: pl.ExperimentConfig):
    outdir, digest, corpus, plan, fc = _through_train(config)
    plm = (
        pl.import_stage(config, corpus, plan, outdir) if config.plm_imports else {}
    )
    families = pl.evaluate_stage(config, corpus, plan, fc, plm, outdir)
    return outdir, families


def cmd_ensemble(args) -> int:
    config = _load_config(args.config)
    outdir, families = _through_evaluate(config)
    for family in sorted(families):
        print(f"{family}: {len(families[family])} reports")
    print(f"reports -> {outdir / 'reports'}")
    return 0


def cmd_report(args) -> int:
    config = _load_config(args.config)
    outdir, families = _through_evaluate(config)
    report_dir = outdir / "reports"
    for name in sorted(p.name for p in report_dir.iterdir()):
        print(report_dir / name)
    return 0


def cmd_run(args) -> int:
    config = _load_config(args.config)
    result = pl.run_pipeline(config)
    for family in sorted(result.counts):
        print(f"{family}: {result.counts[family]} reports")
    print(f"run manifest -> {result.output_dir / 'run_manifest.json'}")
    return 0


def cmd_compare(args) -> int:
    a = [r.mean_macro_f1 for r in load_reports(args.reports_a)]
    b = [r.mean_macro_f1 for r in load_reports(args.reports_b)]
    res = welch_t_test(a, b)
    print(f"n_a={len(a)} n_b={len(b)}")
    print(f"t={res.t!r}")
    print(f"df={res.df!r}")
    print(f"p={res.p!r}")
    print(f"cohens_d={res.cohens_d!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylo",
        description="authorship attribution experiments with soft-voting ensembles",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", required=True, help="TOML experiment config")
        return p

    g = sub.add_parser("gen-synth", help="generate a synthetic annotated corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--authors", type=int, default=10)
    g.add_argument("--docs-per-author", type=int, default=20)
    g.add_argument("--tokens", type=int, default=510)
    g.add_argument("--divergence", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument(
        "--stub",
        action="append",
        default=[],
        metavar="MODEL_ID[:HIT_RATE]",
        help="also write stub external prediction matrices (repeatable)",
    )
    g.add_argument("--stub-dir", help="directory for stub model subdirectories")
    g.add_argument("--num-folds", type=int, default=5, help="fold plan for stubs")
    g.add_argument(
        "--ratios", type=int, nargs=3, default=[16, 2, 2], metavar=("TRAIN", "VAL", "TEST")
    )
    g.set_defaults(func=cmd_gen_synth)

    for name, func, help_text in (
        ("fold", cmd_fold, "build and save the fold plan"),
        ("extract", cmd_extract, "extract per-fold feature matrices"),
        ("train", cmd_train, "train the feature-classifier combinations"),
        ("predict", cmd_predict, "write validation/test prediction matrices"),
        ("import-plm", cmd_import_plm, "validate and register external matrices"),
        ("ensemble", cmd_ensemble, "enumerate and score all ensembles"),
        ("report", cmd_report, "list the generated report artifacts"),
        ("run", cmd_run, "run the full pipeline"),
    ):
        with_config(sub.add_parser(name, help=help_text)).set_defaults(func=func)

    c = sub.add_parser("compare", help="Welch t-test between two report files")
    c.add_argument("reports_a")
    c.add_argument("reports_b")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except pl.StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
