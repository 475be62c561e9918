"""Trainer CLI: `rocktrainer train` and `rocktrainer predict`."""

from __future__ import annotations

import argparse
import sys

from .config import TrainConfig
from .predict import load_checkpoint, predict, save_prediction_masks
from .train import train


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rocktrainer")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train")
    tr.add_argument("--plan", required=True)
    tr.add_argument("--architecture", choices=("unet", "deeplabv3plus"), default="unet")
    tr.add_argument("--strategy", choices=("SimpleMixed", "Finetune"), default="SimpleMixed")
    tr.add_argument("--max-epochs", type=int, default=100)
    tr.add_argument("--batch-size", type=int, default=8)
    tr.add_argument("--crop-size", type=int, default=768)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--device", default="cpu")
    tr.add_argument("--no-pretrained", action="store_true")
    tr.add_argument("--out", required=True)

    pr = sub.add_parser("predict")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--images", nargs="+", required=True)
    pr.add_argument("--device", default="cpu")
    pr.add_argument("--out", required=True)
    return p


def main() -> None:
    args = build_parser().parse_args()
    if args.command == "train":
        config = TrainConfig(
            architecture=args.architecture, strategy=args.strategy,
            max_epochs=args.max_epochs, batch_size=args.batch_size,
            crop_size=args.crop_size, seed=args.seed, device=args.device,
            encoder_pretrained=not args.no_pretrained,
        )
        logs, best = train(args.plan, config, args.out)
        print(f"best checkpoint: {best} (val dice {max(e.val_dice for e in logs):.4f})")
    else:
        model = load_checkpoint(args.checkpoint, device=args.device)
        _, masks = predict(model, args.images, device=args.device)
        for path in save_prediction_masks(masks, args.images, args.out):
            print(path)
    sys.exit(0)


if __name__ == "__main__":
    main()
