"""Toy training on the synthetic motion dataset and clip-level evaluation."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ops
from .core.autograd import Tape, Tensor
from .core.optim import SgdState, cosine_lr, sgd_step
from .data import SyntheticSpec, make_splits, sample_indices
from .net import Network, NetworkSpec, build_network, preset

# command-line variant name -> (block variant, temporal flavor)
VARIANTS = {
    "tea": ("TEA", "SHIFT_INIT"),
    "plain2d": ("PLAIN_2D", "SHIFT_INIT"),
    "p21d-shift": ("P21D_RESNET", "SHIFT_INIT"),
    "p21d-cw": ("P21D_RESNET", "CW"),
    "me-only": ("ME_ONLY", "SHIFT_INIT"),
    "mta-only": ("MTA_ONLY", "SHIFT_INIT"),
    "me-no-res": ("ME_NO_RESIDUAL", "SHIFT_INIT"),
}


@dataclass
class TrainConfig:
    variant: str = "tea"
    seed: int = 0
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    frames: int = 8
    n_train: int = 500
    n_val: int = 200
    data: SyntheticSpec = field(default_factory=SyntheticSpec)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.epochs < 0 or self.batch_size < 1 or self.frames < 1:
            raise ValueError("epochs must be >= 0, batch_size and frames >= 1")

    def network_spec(self) -> NetworkSpec:
        variant, flavor = VARIANTS[self.variant]
        spec = preset("toy", frames=self.frames, height=self.data.size, width=self.data.size,
                      in_channels=self.data.channels)
        spec = spec.with_variant(variant, flavor)
        spec.name = f"toy-{self.variant}"
        return spec

    def to_dict(self) -> dict:
        return asdict(self)


def stack_clips(clips: list, frames: int, mode: str, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``[N, T, C, H, W]`` batch of sparsely sampled clips."""
    return np.stack([c.frames[sample_indices(c.frames.shape[0], frames, mode, rng)] for c in clips])


def evaluate(net: Network, clips: list, frames: int, batch_size: int = 64) -> dict:
    """Accuracy and mean loss with centre-frame sampling in inference mode."""
    was_training = net.training
    net.eval()
    correct, loss_sum = 0, 0.0
    try:
        for i in range(0, len(clips), batch_size):
            chunk = clips[i:i + batch_size]
            labels = np.array([c.label for c in chunk])
            logits = net.forward(Tensor(stack_clips(chunk, frames, "test")))
            loss_sum += float(ops.softmax_cross_entropy(logits, labels).data[0]) * len(chunk)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
    finally:
        net.train(was_training)
    n = max(len(clips), 1)
    return {"accuracy": correct / n, "loss": loss_sum / n}


def train_toy(cfg: TrainConfig, data: Optional[tuple] = None,
              log: Optional[Callable[[dict], None]] = None) -> tuple:
    """Train the toy network for ``cfg``; returns ``(net, metrics)``.

    ``data`` is an optional ``(train_clips, val_clips)`` pair; otherwise the
    splits are generated from ``cfg.data``.
    """
    cfg.validate()
    started = time.perf_counter()
    train_clips, val_clips = data if data is not None else make_splits(cfg.data, cfg.n_train, cfg.n_val)
    spec = cfg.network_spec()
    net = build_network(spec, seed=cfg.seed)
    net.train()
    params = net.parameters()
    opt = SgdState(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    steps_per_epoch = -(-len(train_clips) // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(train_clips))
        loss_sum, correct = 0.0, 0
        for b in range(steps_per_epoch):
            chunk = [train_clips[j] for j in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            labels = np.array([c.label for c in chunk])
            x = Tensor(stack_clips(chunk, cfg.frames, "train", rng))
            with Tape() as tape:
                logits = net.forward(x)
                loss = ops.softmax_cross_entropy(logits, labels)
            grads = tape.backward(loss)
            opt.learning_rate = cosine_lr(cfg.learning_rate, step, total)
            sgd_step(params, grads, opt)
            step += 1
            loss_sum += float(loss.data[0]) * len(chunk)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        val = evaluate(net, val_clips, cfg.frames)
        rec = {"epoch": epoch + 1, "train_loss": loss_sum / len(train_clips),
               "train_accuracy": correct / len(train_clips), "val_loss": val["loss"],
               "val_accuracy": val["accuracy"]}
        history.append(rec)
        if log is not None:
            log(rec)
    final = evaluate(net, val_clips, cfg.frames)
    metrics = {"variant": cfg.variant, "seed": cfg.seed, "epochs": cfg.epochs,
               "val_accuracy": final["accuracy"], "val_loss": final["loss"], "history": history,
               "seconds": time.perf_counter() - started, "spec": spec.name}
    return net, metrics
