"""Training configuration and per-epoch logging.

The numeric defaults are the fixed recipe this harness reproduces: Dice loss
on the joint class, Adam at 1e-3 with plateau halving (patience 5) monitored
on validation Dice (joints), a second-stage learning-rate cap of 3.125e-5
for the Finetune strategy, early stopping after 10 stale epochs (5 in stage
2), batch size 8, at most 100 epochs, and 768 px crops.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

ARCHITECTURES = ("unet", "deeplabv3plus")
STRATEGIES = ("SimpleMixed", "Finetune")


@dataclass
class TrainConfig:
    architecture: str = "unet"
    strategy: str = "SimpleMixed"
    encoder_pretrained: bool = True     # ImageNet weights when downloadable
    lr: float = 1e-3
    stage2_lr_cap: float = 3.125e-5
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    early_stop_patience: int = 10
    stage2_early_stop_patience: int = 5
    batch_size: int = 8
    max_epochs: int = 100
    crop_size: int = 768
    val_fraction: float = 0.1
    num_workers: int = 2
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    stage: int
    train_loss: float
    val_dice: float
    lr: float
    checkpoint_path: str


def save_epoch_log_csv(logs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "stage", "train_loss", "val_dice", "lr", "checkpoint_path"])
        for e in logs:
            w.writerow([e.epoch, e.stage, f"{e.train_loss:.6f}", f"{e.val_dice:.6f}",
                        f"{e.lr:.3e}", e.checkpoint_path])


def load_epoch_log_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpochLog(
                epoch=int(row["epoch"]), stage=int(row["stage"]),
                train_loss=float(row["train_loss"]), val_dice=float(row["val_dice"]),
                lr=float(row["lr"]), checkpoint_path=row["checkpoint_path"],
            ))
    return out
