"""
Parameter containers and the convolutional building blocks of the network
"""

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import DatasetValidationError
from . import functional as F
from .tensor import Parameter, Tensor


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform in +-sqrt(1/fan_in)"""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Minimal parameter container.

    Parameters, sub-modules and lists of sub-modules assigned as attributes
    are discovered in attribute order, which makes parameter names and their
    iteration order deterministic.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{idx}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        """Stamp every parameter with its dotted path"""
        for name, param in self.named_parameters():
            param.name = name

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise DatasetValidationError(
                f"checkpoint does not fit the model (missing: {missing[:5]}, unexpected: {unexpected[:5]})"
            )
        for name, param in own.items():
            if state[name].shape != param.shape:
                raise DatasetValidationError(
                    f"checkpoint entry {name} has shape {state[name].shape}, model expects {param.shape}"
                )
            param.data = np.array(state[name], dtype=np.float64)


class Conv2d(Module):
    """Same-padded convolution with zero-initialised bias"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dilation: int = 1,
        bias: bool = True,
    ):
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.dilation = dilation

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, dilation=self.dilation)


class ConvBlock(Module):
    """Two 3x3 conv + relu layers"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class ASPP(Module):
    """
    Atrous spatial pyramid pooling: 3x3 convs at several dilations plus an
    image-level branch, concatenated and projected back with a 1x1 conv.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dilations: Tuple[int, ...] = (1, 2, 4),
    ):
        self.branches = [Conv2d(in_channels, out_channels, 3, rng, dilation=d) for d in dilations]
        self.image_pool = Conv2d(in_channels, out_channels, 1, rng)
        self.project = Conv2d(out_channels * (len(dilations) + 1), out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        _, h, w = x.shape
        outs = [F.relu(branch(x)) for branch in self.branches]
        pooled = F.relu(self.image_pool(F.spatial_mean(x)))
        outs.append(F.expand_spatial(pooled, h, w))
        return F.relu(self.project(F.concat(outs, axis=0)))


class UpBlock(Module):
    """Nearest 2x upsampling, skip concatenation, 3x3 conv + relu"""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int, rng: np.random.Generator):
        self.conv = Conv2d(in_channels + skip_channels, out_channels, 3, rng)

    def forward(self, x: Tensor, skip: Optional[Tensor]) -> Tensor:
        x = F.upsample2x(x)
        if skip is not None:
            x = F.concat([x, skip], axis=0)
        return F.relu(self.conv(x))
