"""Training loop and job-directory protocol.

A job directory holds job.json with a graph, an embedding spec, and a
seed.  run_job trains a fresh model on the toy task and answers with
fitness.json; any failure is reported as error.json so the producer
never blocks on a crashed evaluator.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
import torch

from .data import toy_dataset
from .embedding import parse_graph, parse_spec
from .model import GraphModel

EVALUATOR_ID = "gssnn-trainer/0.1.0"


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 16
    batch_size: int = 8
    lr: float = 1e-3
    layers: int = 3
    dropout: float = 0.3
    patience_first: int = 50
    patience_later: int = 65
    train_size: int = 128
    val_size: int = 1200

    @classmethod
    def toy(cls) -> "TrainerConfig":
        return cls()

    def quick(self) -> "TrainerConfig":
        return replace(self, epochs=2, val_size=64)


class PlateauHalver:
    """Halves the learning rate when the train loss stops making new lows.

    The wait is measured in batches from the last new low or the last
    reduction, whichever came later; the first reduction waits
    patience_first batches, every later one patience_later.
    """

    def __init__(self, opt, patience_first: int, patience_later: int):
        self.opt = opt
        self.patience_first = patience_first
        self.patience_later = patience_later
        self.best = math.inf
        self.last_event = 0
        self.batch = 0
        self.reductions = 0

    def step(self, loss: float) -> bool:
        self.batch += 1
        if loss < self.best:
            self.best = loss
            self.last_event = self.batch
        patience = self.patience_first if self.reductions == 0 else self.patience_later
        if self.batch - self.last_event >= patience:
            for group in self.opt.param_groups:
                group["lr"] *= 0.5
            self.reductions += 1
            self.last_event = self.batch
            return True
        return False


def train_model(
    model: GraphModel,
    xs: np.ndarray,
    ys: np.ndarray,
    config: TrainerConfig,
    seed: int,
) -> dict:
    """Adam with train-loss-plateau halving; returns loop statistics."""
    dtype = model.bias.dtype
    inputs = torch.as_tensor(xs, dtype=dtype)
    targets = torch.as_tensor(ys, dtype=dtype).unsqueeze(-1)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    loss_fn = torch.nn.BCEWithLogitsLoss()
    halver = PlateauHalver(opt, config.patience_first, config.patience_later)
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)

    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(len(inputs), generator=gen)
        for start in range(0, len(inputs), config.batch_size):
            idx = perm[start : start + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(inputs[idx]), targets[idx])
            loss.backward()
            opt.step()
            halver.step(loss.item())
    model.eval()
    return {"batches": halver.batch, "best_loss": halver.best, "lr_reductions": halver.reductions}


@torch.no_grad()
def _accuracy(model: GraphModel, xs: np.ndarray, ys: np.ndarray) -> float:
    dtype = model.bias.dtype
    preds = model(torch.as_tensor(xs, dtype=dtype)).squeeze(-1) > 0.0
    return float((preds.numpy() == (ys == 1)).mean())


def _write_json(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def run_job(job_dir: str, *, toy: bool = True, config: TrainerConfig | None = None) -> dict | None:
    """Evaluate one job directory; returns the fitness payload or None."""
    try:
        if not toy:
            raise ValueError("only the toy task is bundled; pass toy=True")
        with open(os.path.join(job_dir, "job.json")) as fh:
            job = json.load(fh)
        graph = parse_graph(job["graph"])
        spec = parse_spec(job["spec"])
        seed = int(job["seed"])
        cfg = config or TrainerConfig.toy()

        torch.manual_seed(seed)
        model = GraphModel(graph, spec, layers=cfg.layers, dropout=cfg.dropout)
        train_x, train_y = toy_dataset(seed, cfg.train_size, spec.m)
        val_x, val_y = toy_dataset(seed + 1, cfg.val_size, spec.m)
        train_model(model, train_x, train_y, cfg, seed)
        payload = {
            "train_accuracy": _accuracy(model, train_x, train_y),
            "validation_accuracy": _accuracy(model, val_x, val_y),
            "evaluator_id": EVALUATOR_ID,
        }
        _write_json(os.path.join(job_dir, "fitness.json"), payload)
        return payload
    except Exception as exc:
        _write_json(os.path.join(job_dir, "error.json"), {"error": str(exc)})
        return None
