"""A tiny classifier used by the demo script and the fidelity tests.

Covers most of the interchange vocabulary: conv (plain and depthwise),
batch norm, both relus, max pooling, zero padding, global average
pooling, flatten, dense, softmax.
"""

import torch
from torch import nn


def demo_cnn(seed: int = 0, classes: int = 10) -> nn.Module:
    torch.manual_seed(seed)
    model = nn.Sequential(
        nn.Conv2d(3, 8, 3, padding=1),
        nn.BatchNorm2d(8),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(8, 8, 3, padding=1, groups=8, bias=False),
        nn.ReLU6(),
        nn.ZeroPad2d(1),
        nn.Conv2d(8, 16, 3, stride=2),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(16, classes),
        nn.Softmax(dim=-1),
    )
    model.eval()
    # non-trivial batch norm statistics so export actually exercises them
    with torch.no_grad():
        model[1].running_mean.uniform_(-0.5, 0.5)
        model[1].running_var.uniform_(0.5, 1.5)
    return model


DEMO_INPUT_SHAPE = (1, 3, 32, 32)
