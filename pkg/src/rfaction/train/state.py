from __future__ import annotations

import math
from typing import Dict, List

import torch

from ..model import PARTITIONS, RFActionModel

OPTIMIZERS = ("adam", "sgd")


def cosine_factor(step: int, total: int) -> float:
    if total <= 0:
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * min(step, total) / total))


class ModelState:
    """Model, one optimizer parameter group per partition, and the step counter.

    Parameters whose gradient is ``None`` at update time are skipped by the
    optimizer (moment estimates included), which is what keeps a partition
    bitwise frozen on steps that do not reach it.
    """

    def __init__(self, model: RFActionModel, lr: float = 1e-3, momentum: float = 0.9, total_steps: int = 0,
                 optimizer: str = "adam"):
        if optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {optimizer!r}")
        self.model = model
        self.base_lr, self.total_steps, self.kind, self.momentum = lr, total_steps, optimizer, momentum
        seen = set()
        groups = []
        for name in PARTITIONS:
            params = [p for _, p in model.partition(name)]
            seen.update(id(p) for p in params)
            groups.append({"params": params, "name": name})
        if len(seen) != len(list(model.parameters())):
            raise ValueError("every parameter must belong to exactly one partition")
        if optimizer == "sgd":
            self.optimizer = torch.optim.SGD(groups, lr=lr, momentum=momentum)
        else:
            self.optimizer = torch.optim.Adam(groups, lr=lr, betas=(momentum, 0.999))
        self.step = 0

    def blocks(self) -> Dict[str, List[str]]:
        return {name: [n for n, _ in self.model.partition(name)] for name in PARTITIONS}

    def current_lr(self) -> float:
        return self.base_lr * cosine_factor(self.step, self.total_steps)

    def apply(self, grad_clip: float = 0.0) -> None:
        params = [p for p in self.model.parameters() if p.grad is not None]
        if grad_clip > 0 and params:
            torch.nn.utils.clip_grad_norm_(params, grad_clip)
        lr = self.current_lr()
        for g in self.optimizer.param_groups:
            g["lr"] = lr
        self.optimizer.step()
        self.step += 1

    def optimizer_tensors(self) -> Dict[str, torch.Tensor]:
        """Per-parameter optimizer state keyed ``"<slot>/<parameter name>"``."""
        out = {}
        for n, p in self.model.named_parameters():
            for key, val in self.optimizer.state.get(p, {}).items():
                if isinstance(val, torch.Tensor):
                    out[f"{key}/{n}"] = val
        return out

    def load_optimizer_tensors(self, tensors: Dict[str, torch.Tensor]) -> None:
        params = dict(self.model.named_parameters())
        for full, val in tensors.items():
            key, _, n = full.partition("/")
            if n not in params:
                raise KeyError(f"optimizer state for unknown parameter {n}")
            p = params[n]
            self.optimizer.state[p][key] = val.clone().to(torch.float32 if key == "step" else p.dtype)
