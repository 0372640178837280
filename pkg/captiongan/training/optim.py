import math
import torch
from transformers import get_constant_schedule_with_warmup

from captiongan.exc import DivergenceError


def parameter_groups(module, weight_decay):
    """Split trainable parameters so that weight decay only applies to
    weight matrices; biases, norms and other vectors are not decayed."""
    decay, no_decay = [], []
    for _, param in module.named_parameters():
        if not param.requires_grad:
            continue
        if param.ndim >= 2:
            decay.append(param)
        else:
            no_decay.append(param)
    groups = [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]
    return [g for g in groups if len(g["params"])]


def build_optimizer(module, lr, warmup, cfg):
    """AdamW with the configured moments and a linear warmup from 0 to
    ``lr`` over ``warmup`` steps, constant afterwards."""
    groups = parameter_groups(module, cfg.weight_decay)
    optimizer = torch.optim.AdamW(
        groups,
        lr=lr,
        betas=tuple(cfg.betas),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    schedule = get_constant_schedule_with_warmup(optimizer, num_warmup_steps=warmup)
    return optimizer, schedule


def check_finite(value, what, step):
    if not math.isfinite(float(value)):
        raise DivergenceError(f"Non-finite {what}", step=step, value=float(value))


def apply_gradients(module, optimizer, schedule, clip, step, what="gradient"):
    """Clip, check and apply the accumulated gradients, then advance the
    schedule. Returns the pre-clip gradient norm."""
    params = [p for p in module.parameters() if p.grad is not None]
    if clip > 0:
        norm = torch.nn.utils.clip_grad_norm_(params, clip)
    else:
        norms = [p.grad.detach().norm() for p in params]
        norm = torch.norm(torch.stack(norms)) if len(norms) else torch.zeros(())
    check_finite(norm, what, step)
    optimizer.step()
    schedule.step()
    optimizer.zero_grad(set_to_none=True)
    return float(norm)


def skip_update(optimizer, schedule):
    """Advance the schedule without touching any parameter."""
    optimizer.zero_grad(set_to_none=True)
    schedule.step()
