import math
import random

import numpy as np
import torch


def _t2n(x):
    """Convert torch tensor to a numpy array."""
    return x.detach().cpu().numpy()


def step_schedule(epoch, initial_lr, decay, decay_epochs):
    """Learning rate for a 1-based epoch: reduced by a factor of decay every decay_epochs epochs."""
    return initial_lr * decay ** ((epoch - 1) // decay_epochs)


def update_step_schedule(optimizer, epoch, initial_lr, decay, decay_epochs):
    """Decreases the learning rate stepwise"""
    lr = step_schedule(epoch, initial_lr, decay, decay_epochs)
    for param_group in optimizer.param_groups:
        param_group['lr'] = lr
    return lr


def get_grad_norm(it):
    sum_grad = 0
    for x in it:
        if x.grad is None:
            continue
        sum_grad += x.grad.norm() ** 2
    return math.sqrt(sum_grad)


def set_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.cuda.manual_seed_all(seed)


def rng_state():
    return {"python": random.getstate(), "numpy": np.random.get_state(), "torch": torch.get_rng_state()}


def set_rng_state(state):
    random.setstate(state["python"])
    np.random.set_state(state["numpy"])
    torch.set_rng_state(state["torch"])
