"""Training loops: one-stage SimpleMixed and two-stage Finetune.

Finetune pretrains on synthetic data while validating on real, then
fine-tunes on real data only with the carried learning rate capped at the
configured stage-2 value.  Validation/early stopping always monitor the Dice
score of the joint class on real data; every epoch's checkpoint is retained
because intermediate (especially early stage-2) epochs are useful states.
"""

from __future__ import annotations

import math
import os
import warnings
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .augment import AugmentConfig
from .config import EpochLog, TrainConfig, save_epoch_log_csv
from .data import PairDataset, load_plan, split_train_val_records
from .models import build_model


def dice_loss(logits: torch.Tensor, targets: torch.Tensor, eps: float = 1.0) -> torch.Tensor:
    probs = torch.sigmoid(logits)
    num = 2.0 * (probs * targets).sum() + eps
    den = probs.sum() + targets.sum() + eps
    return 1.0 - num / den


def hard_dice_counts(probs: torch.Tensor, targets: torch.Tensor, threshold: float = 0.5):
    pred = probs >= threshold
    truth = targets >= 0.5
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    return tp, fp, fn


def dice_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0  # both prediction and reference empty of joints
    return 2.0 * tp / denom


class _Stage:
    """One optimisation stage: plateau-halved lr, early stopping, checkpoints."""

    def __init__(self, model, config: TrainConfig, lr0: float, stage_idx: int,
                 patience: int, out_dir: Path, start_epoch: int):
        self.model = model
        self.config = config
        self.optimizer = torch.optim.Adam(model.parameters(), lr=lr0)
        self.scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
            self.optimizer, mode="max", factor=config.plateau_factor,
            patience=config.plateau_patience,
        )
        self.stage_idx = stage_idx
        self.patience = patience
        self.out_dir = out_dir
        self.start_epoch = start_epoch

    def current_lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def run(self, train_loader, train_ds, val_loader, max_epochs: int):
        device = self.config.device
        best = -math.inf
        stale = 0
        logs = []
        for local_epoch in range(max_epochs):
            epoch = self.start_epoch + local_epoch
            train_ds.set_epoch(epoch)
            self.model.train()
            total = 0.0
            n_batches = 0
            for x, y in train_loader:
                x = x.to(device)
                y = y.to(device)
                self.optimizer.zero_grad()
                loss = dice_loss(self.model(x), y)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"training diverged (non-finite loss) at epoch {epoch}"
                    )
                loss.backward()
                self.optimizer.step()
                total += float(loss.detach())
                n_batches += 1
            train_loss = total / max(n_batches, 1)

            val_dice = evaluate_dice(self.model, val_loader, device)
            lr_now = self.current_lr()
            ckpt = self.out_dir / f"epoch_{epoch:03d}.pt"
            torch.save({"model": self.model.state_dict(),
                        "architecture": self.config.architecture,
                        "epoch": epoch, "stage": self.stage_idx,
                        "val_dice": val_dice}, ckpt)
            logs.append(EpochLog(epoch=epoch, stage=self.stage_idx,
                                 train_loss=train_loss, val_dice=val_dice,
                                 lr=lr_now, checkpoint_path=str(ckpt)))
            self.scheduler.step(val_dice)
            if val_dice > best + 1e-12:
                best = val_dice
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        return logs


@torch.no_grad()
def evaluate_dice(model, loader, device: str) -> float:
    """Pixel-pooled hard Dice of the joint class at threshold 0.5."""
    model.eval()
    tp = fp = fn = 0
    for x, y in loader:
        probs = torch.sigmoid(model(x.to(device)))
        a, b, c = hard_dice_counts(probs, y.to(device))
        tp += a
        fp += b
        fn += c
    return dice_from_counts(tp, fp, fn)


def _loaders(train_records, val_records, config: TrainConfig, augment: bool):
    aug = AugmentConfig(crop_size=config.crop_size) if augment else None
    train_ds = PairDataset(train_records, augment=aug, crop_size=config.crop_size,
                           seed=config.seed)
    val_ds = PairDataset(val_records, augment=None, crop_size=config.crop_size,
                         seed=config.seed)
    gen = torch.Generator()
    gen.manual_seed(config.seed)
    train_loader = DataLoader(train_ds, batch_size=config.batch_size, shuffle=True,
                              num_workers=config.num_workers, generator=gen)
    val_loader = DataLoader(val_ds, batch_size=config.batch_size, shuffle=False,
                            num_workers=config.num_workers)
    return train_loader, train_ds, val_loader


def train(plan_path, config: TrainConfig, out_dir, augment: bool = True):
    """Run one plan under the configured strategy.

    Returns (epoch logs, best checkpoint path).  The epoch log CSV and all
    checkpoints are written under ``out_dir``.
    """
    torch.manual_seed(config.seed)
    plan = load_plan(plan_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    synthetic = plan["synthetic_train"]
    real_train = plan["real_train"]
    if real_train:
        real_tr, real_val = split_train_val_records(
            real_train, config.val_fraction, config.seed
        )
        if not real_val:
            real_val = real_tr[-1:]
    else:
        # no real training data (the all-synthetic benchmark); validate on a
        # held-out synthetic slice, flagged in the log file name
        if not synthetic:
            raise ValueError("plan has neither synthetic nor real training data")
        real_tr = []
        synthetic, real_val = split_train_val_records(
            synthetic, config.val_fraction, config.seed
        )
        warnings.warn("no real data in plan; validating on held-out synthetic pairs")

    model = build_model(config.architecture, pretrained=config.encoder_pretrained)
    model.to(config.device)

    logs = []
    if config.strategy == "SimpleMixed":
        train_records = list(synthetic) + list(real_tr)
        if not train_records:
            raise ValueError("empty training list")
        loaders = _loaders(train_records, real_val, config, augment)
        stage = _Stage(model, config, config.lr, 1, config.early_stop_patience,
                       out_dir, start_epoch=0)
        logs += stage.run(*loaders, config.max_epochs)
    else:  # Finetune
        if not synthetic:
            raise ValueError("Finetune requires synthetic pretraining data")
        if not real_tr:
            raise ValueError("Finetune requires real fine-tuning data")
        loaders = _loaders(list(synthetic), real_val, config, augment)
        stage1 = _Stage(model, config, config.lr, 1, config.early_stop_patience,
                        out_dir, start_epoch=0)
        logs += stage1.run(*loaders, config.max_epochs)
        carried = stage1.current_lr()
        lr2 = min(carried, config.stage2_lr_cap)
        loaders = _loaders(list(real_tr), real_val, config, augment)
        stage2 = _Stage(model, config, lr2, 2, config.stage2_early_stop_patience,
                        out_dir, start_epoch=logs[-1].epoch + 1 if logs else 0)
        logs += stage2.run(*loaders, config.max_epochs)

    save_epoch_log_csv(logs, out_dir / "epochs.csv")
    best = max(logs, key=lambda e: (e.val_dice, -e.epoch))
    return logs, best.checkpoint_path
