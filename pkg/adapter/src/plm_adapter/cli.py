"""Command-line entry point; flags mirror AdapterConfig."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .adapter import AdapterConfig, AdapterError, finetune_and_predict
from .interchange import FormatError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plm-adapter",
        description="fine-tune a transformer classifier per corpus fold and "
        "export interchange prediction matrices",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--checkpoint", required=True,
                   help="pre-trained checkpoint path or identifier")
    p.add_argument("--corpus", required=True, help="JSONL corpus file")
    p.add_argument("--fold-plan", required=True, help="fold plan JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model-id", required=True,
                   help="model_id recorded in the manifests")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--max-length", type=int, default=512)
    p.add_argument("--truncation", type=int, default=510,
                   help="corpus tokens kept before special tokens")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--stub", action="store_true",
                   help="seeded random logits instead of training")
    p.add_argument("--fold", type=int, default=None,
                   help="run a single fold (default: all)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(
        checkpoint=args.checkpoint,
        corpus_path=args.corpus,
        fold_plan_path=args.fold_plan,
        output_dir=args.out,
        model_id=args.model_id,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        max_length=args.max_length,
        truncation=args.truncation,
        seed=args.seed,
        stub=args.stub,
        device=args.device,
    )
    try:
        results = finetune_and_predict(config, only_fold=args.fold)
    except (AdapterError, FormatError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for r in results:
        if config.stub:
            print(f"fold {r.fold}: stub matrices written")
        else:
            print(f"fold {r.fold}: best epoch {r.best_epoch}, "
                  f"validation macro F1 {r.best_val_f1:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
