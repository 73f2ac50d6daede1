import numpy as np
import torch


def init(module, weight_init, bias_init, gain=1):
    weight_init(module.weight.data, gain=gain)
    bias_init(module.bias.data)
    return module


def check(input, **tpdv):
    """Arrays (or nested lists) to tensors, tensors pass through; tpdv is forwarded to .to()."""
    output = input if isinstance(input, torch.Tensor) else torch.as_tensor(np.asarray(input))
    return output.to(**tpdv) if tpdv else output
