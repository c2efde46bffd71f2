"""
Named float32 tensor container and seeded initialization.

Byte layout (all little-endian)::

    b"DPCW"  u32 version  u32 count
    count x { u16 name_len  name(UTF-8)  u8 dtype  u8 ndim  u32 dims[ndim]
              data }

dtype 0 is float32; other tags are reserved. See docs/weights_format.md.
"""

from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from .config import ModelConfig, RunConfig, StftConfig
from .errors import WeightsFormatError, WeightsMismatchError
from .log import get_logger
from .model import build_model

logger = get_logger(__name__)

MAGIC = b"DPCW"
FORMAT_VERSION = 1
DTYPE_F32 = 0

_NAME_SUFFIXES = {
    "weight": "w",
    "bias": "b",
    "weight_ih_l0": "w_ih",
    "weight_hh_l0": "w_hh",
    "bias_ih_l0": "b_ih",
    "bias_hh_l0": "b_hh",
}


def container_name(torch_name: str) -> str:
    """``enc.0.dw.weight`` -> ``enc.0.dw.w``."""
    head, _, leaf = torch_name.rpartition(".")
    leaf = _NAME_SUFFIXES.get(leaf, leaf)
    return f"{head}.{leaf}" if head else leaf


class WeightContainer:
    """Ordered mapping of tensor names to float32 arrays."""

    def __init__(self, tensors: Optional[Mapping[str, np.ndarray]] = None):
        self._tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, value in (tensors or {}).items():
            self[name] = value

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if not name:
            raise ValueError("tensor names must be non-empty")
        self._tensors[name] = np.array(value, dtype="<f4", order="C")

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def num_params(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._tensors.items()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightContainer):
            return NotImplemented
        if list(self) != list(other):
            return False
        return all(
            self[n].shape == other[n].shape
            and self[n].tobytes() == other[n].tobytes()
            for n in self
        )

    def to_bytes(self) -> bytes:
        parts = [
            MAGIC,
            np.array([FORMAT_VERSION, len(self)], dtype="<u4").tobytes(),
        ]
        for name, tensor in self._tensors.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise WeightsFormatError(f"tensor name too long: {name[:40]}")
            parts.append(np.array([len(encoded)], dtype="<u2").tobytes())
            parts.append(encoded)
            parts.append(
                np.array([DTYPE_F32, tensor.ndim], dtype="u1").tobytes()
            )
            parts.append(np.array(tensor.shape, dtype="<u4").tobytes())
            parts.append(tensor.astype("<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightContainer":
        """
        Parse a container.

        Raises:
            WeightsFormatError: ``bad magic``, unsupported version or dtype,
                duplicate names, ``truncated tensor`` or trailing bytes.
        """
        reader = _Reader(data)
        if reader.take(4, "header") != MAGIC:
            raise WeightsFormatError("bad magic")
        version, count = reader.array("<u4", 2, "header")
        if version != FORMAT_VERSION:
            raise WeightsFormatError(f"unsupported format version {version}")

        container = cls()
        for _ in range(int(count)):
            (name_len,) = reader.array("<u2", 1, "tensor header")
            raw_name = reader.take(int(name_len), "tensor name")
            try:
                name = raw_name.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise WeightsFormatError("tensor name is not UTF-8") from exc
            dtype, ndim = reader.array("u1", 2, "tensor header")
            if dtype != DTYPE_F32:
                raise WeightsFormatError(
                    f"{name}: unsupported dtype tag {dtype}"
                )
            dims = tuple(int(d) for d in reader.array("<u4", int(ndim), name))
            size = int(np.prod(dims, dtype=np.int64))
            if reader.remaining < 4 * size:
                raise WeightsFormatError(f"truncated tensor {name!r}")
            if name in container:
                raise WeightsFormatError(f"duplicate tensor name {name!r}")
            values = reader.array("<f4", size, name).reshape(dims)
            container[name] = values
        if reader.remaining:
            raise WeightsFormatError(
                f"{reader.remaining} trailing bytes after {count} tensors"
            )
        return container

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(
            "saved %d tensors (%d parameters) to %s",
            len(self),
            self.num_params,
            path,
        )

    @classmethod
    def load(
        cls,
        path: Union[str, Path],
        config: Optional[Union[RunConfig, ModelConfig]] = None,
    ) -> "WeightContainer":
        """
        Read a container, optionally checking it against a configuration.

        Raises:
            FileNotFoundError: If ``path`` does not exist.
            WeightsFormatError: If the file is malformed.
            WeightsMismatchError: If names or shapes disagree with
                ``config``.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Weights file not found: {path}")
        try:
            container = cls.from_bytes(path.read_bytes())
        except WeightsFormatError as exc:
            raise WeightsFormatError(f"{path}: {exc}") from exc
        if config is not None:
            validate(container, config)
        return container


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, count: int, what: str) -> bytes:
        if self.remaining < count:
            raise WeightsFormatError(f"truncated {what}")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        if count == 0:
            return np.zeros(0, dtype=dtype)
        width = np.dtype(dtype).itemsize
        raw = self.take(width * count, what)
        return np.frombuffer(raw, dtype=dtype, count=count)


def _split_config(
    config: Union[RunConfig, ModelConfig],
) -> Tuple[ModelConfig, StftConfig]:
    if isinstance(config, RunConfig):
        return config.model, config.stft
    return config, StftConfig()


def build_networks(config: Union[RunConfig, ModelConfig]) -> nn.Module:
    """Float64 network (with PostNet when enabled) for a configuration."""
    model_cfg, stft_cfg = _split_config(config)
    return build_model(model_cfg, stft_cfg)


def expected_shapes(
    config: Union[RunConfig, ModelConfig],
) -> "OrderedDict[str, Tuple[int, ...]]":
    """Container names and shapes a configuration needs."""
    net = build_networks(config)
    return OrderedDict(
        (container_name(name), tuple(p.shape))
        for name, p in net.named_parameters()
    )


def validate(
    container: WeightContainer, config: Union[RunConfig, ModelConfig]
) -> None:
    """Raise WeightsMismatchError unless names and shapes match exactly."""
    expected = expected_shapes(config)
    missing = [n for n in expected if n not in container]
    extra = [n for n in container if n not in expected]
    if missing or extra:
        raise WeightsMismatchError(
            f"weights do not match config: missing {missing[:5]}, "
            f"unexpected {extra[:5]}"
        )
    for name, shape in expected.items():
        if container[name].shape != shape:
            raise WeightsMismatchError(
                f"{name}: shape {container[name].shape} does not match "
                f"config shape {shape}"
            )


def _init_bound(module: nn.Module, param: torch.Tensor) -> Optional[float]:
    """Uniform bound ``sqrt(1 / fan_in)``, None for constant init."""
    if isinstance(module, nn.Linear):
        return float(np.sqrt(1.0 / module.in_features))
    if isinstance(module, (nn.Conv1d, nn.Conv2d)):
        fan_in = module.in_channels // module.groups
        fan_in *= int(np.prod(module.kernel_size))
        return float(np.sqrt(1.0 / fan_in))
    if isinstance(module, nn.GRU):
        return float(np.sqrt(1.0 / module.hidden_size))
    if isinstance(module, (nn.LayerNorm, nn.PReLU)):
        return None
    return float(np.sqrt(1.0 / getattr(module, "fan_in", param.shape[-1])))


def init_weights(
    config: Union[RunConfig, ModelConfig], seed: int = 0
) -> WeightContainer:
    """
    Deterministic weights for ``config``.

    Every trainable tensor is drawn from ``uniform(-a, a)`` with
    ``a = sqrt(1 / fan_in)``; layer-norm gains are 1, their biases 0 and
    PReLU slopes 0.25.
    """
    rng = np.random.default_rng(seed)
    net = build_networks(config)
    container = WeightContainer()
    for module_name, module in net.named_modules():
        for name, param in module.named_parameters(recurse=False):
            full = f"{module_name}.{name}" if module_name else name
            bound = _init_bound(module, param)
            shape = tuple(param.shape)
            if bound is not None:
                value = rng.uniform(-bound, bound, size=shape)
            elif isinstance(module, nn.PReLU):
                value = np.full(shape, 0.25)
            elif name == "weight":
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            container[container_name(full)] = value
    order = list(expected_shapes(config))
    return WeightContainer(OrderedDict((n, container[n]) for n in order))


def from_module(module: nn.Module) -> WeightContainer:
    """Snapshot a module's parameters as float32."""
    return WeightContainer(
        OrderedDict(
            (container_name(n), p.detach().cpu().numpy())
            for n, p in module.named_parameters()
        )
    )


def load_into(module: nn.Module, container: WeightContainer) -> None:
    """Copy container tensors into a module's parameters."""
    params = dict(module.named_parameters())
    expected = {container_name(n) for n in params}
    missing = sorted(expected - set(container))
    extra = sorted(set(container) - expected)
    if missing or extra:
        raise WeightsMismatchError(
            f"weights do not match model: missing {missing[:5]}, "
            f"unexpected {extra[:5]}"
        )
    with torch.no_grad():
        for name, param in params.items():
            value = container[container_name(name)]
            if tuple(value.shape) != tuple(param.shape):
                raise WeightsMismatchError(
                    f"{container_name(name)}: shape {value.shape} vs "
                    f"model {tuple(param.shape)}"
                )
            param.copy_(torch.as_tensor(value, dtype=param.dtype))
