"""Named collection of learnable parameters."""
from collections.abc import Iterator, Mapping
from typing import Optional

import numpy as np
from absl import logging

from eam_classifier import tensor_core
from eam_classifier.autodiff import Parameter
from eam_classifier.tensor_core import Conv2dParams, MlpParams


class ParamStore:
    """Ordered mapping from dotted names to `Parameter` leaves.

    The store owns the gradient buffers (on the parameters themselves) and
    is the unit the optimizer and the checkpoint format work on. Insertion
    order is stable, which keeps serialisation and optimizer updates
    deterministic.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self._params: dict[str, Parameter] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __len__(self) -> int:
        return len(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise KeyError(f"Parameter '{name}' already exists.")
        param = Parameter(np.ascontiguousarray(tensor_core.asarray(value)),
                          name=name)
        self._params[name] = param
        return param

    def zeros(self, name: str, shape: tuple[int, ...]) -> Parameter:
        return self.add(name, np.zeros(shape))

    def he_normal(self, name: str, shape: tuple[int, ...],
                  fan_in: int) -> Parameter:
        return self.add(name,
                        self.rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))

    def conv(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        dilation: int = 1,
        zero_init: bool = False,
    ) -> Conv2dParams:
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if zero_init:
            weight = self.zeros(f"{name}.weight", shape)
        else:
            weight = self.he_normal(f"{name}.weight", shape,
                                    in_channels * kernel_size**2)
        bias = self.zeros(f"{name}.bias", (out_channels,))
        return Conv2dParams(weight=weight,
                            bias=bias,
                            stride=stride,
                            padding=padding,
                            dilation=dilation)

    def mlp(self,
            name: str,
            in_width: int,
            hidden_width: int,
            zero_init: bool = False) -> MlpParams:
        if zero_init:
            w1 = self.zeros(f"{name}.w1", (in_width, hidden_width))
            w2 = self.zeros(f"{name}.w2", (hidden_width, in_width))
        else:
            w1 = self.he_normal(f"{name}.w1", (in_width, hidden_width),
                                in_width)
            w2 = self.he_normal(f"{name}.w2", (hidden_width, in_width),
                                hidden_width)
        return MlpParams(w1=w1,
                         b1=self.zeros(f"{name}.b1", (hidden_width,)),
                         w2=w2,
                         b2=self.zeros(f"{name}.b2", (in_width,)))

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def trainable(self) -> Iterator[Parameter]:
        return (p for p in self._params.values() if p.trainable)

    def freeze(self, prefix: str) -> int:
        """Marks every parameter under `prefix` as non-trainable."""
        count = 0
        for name, param in self._params.items():
            if name.startswith(prefix):
                param.trainable = False
                count += 1
        logging.info("Froze %d parameters under '%s'", count, prefix)
        return count

    def num_values(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Copies values into the existing parameters.

        Raises:
            KeyError: if a name is missing on either side.
            ValueError: if a shape differs.
        """
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise KeyError(f"State mismatch. Missing: {sorted(missing)}, "
                           f"unexpected: {sorted(unexpected)}")

        for name, param in self._params.items():
            value = np.asarray(state[name])
            if value.shape != param.value.shape:
                raise ValueError(f"Shape mismatch for '{name}': expected "
                                 f"{param.value.shape}, got {value.shape}")
            param.value = np.ascontiguousarray(value)
            param.zero_grad()
