"""Configuration dataclasses, JSON schema handling and presets."""

import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple, Union

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1
SUPPORTED_RATIOS = (1, 2, 4, 8, 16, 32)
FREQ_METHODS = ("none", "fixed_erb", "fixed_mel", "trainable_mel")


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters of the analysis/synthesis filterbank."""

    sample_rate: int = 16000
    window_len: int = 320
    hop: int = 160
    fft_size: int = 320

    def __post_init__(self) -> None:
        for name in ("sample_rate", "window_len", "hop", "fft_size"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"stft.{name} must be positive")
        if self.fft_size < self.window_len:
            raise ConfigError("stft.fft_size must be >= stft.window_len")
        if self.window_len % self.hop:
            raise ConfigError("stft.hop must divide stft.window_len")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def frame_rate(self) -> float:
        """Frames per second."""
        return self.sample_rate / self.hop

    @property
    def window(self) -> np.ndarray:
        """Square-root Hann window, shifted by half a sample."""
        n = np.arange(self.window_len, dtype=np.float64)
        return np.sin(np.pi * (n + 0.5) / self.window_len)


@dataclass(frozen=True)
class AecConfig:
    """Frequency-domain Kalman echo canceller settings."""

    taps: int = 10
    process_noise: float = 1e-5
    obs_noise_floor: float = 1e-8
    initial_cov: float = 1.0
    smoothing: float = 0.9

    def __post_init__(self) -> None:
        if self.taps < 1:
            raise ConfigError("aec.taps must be >= 1")
        if self.process_noise < 0:
            raise ConfigError("aec.process_noise must be >= 0")
        if self.obs_noise_floor <= 0:
            raise ConfigError("aec.obs_noise_floor must be > 0")
        if self.initial_cov <= 0:
            raise ConfigError("aec.initial_cov must be > 0")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("aec.smoothing must be in [0, 1)")


@dataclass(frozen=True)
class PostNetConfig:
    """Post-processing network shape."""

    bands: int = 80
    gru_hidden: int = 80
    channels: int = 24
    hidden: int = 48

    def __post_init__(self) -> None:
        if self.bands < 1 or self.channels < 1 or self.hidden < 1:
            raise ConfigError("postnet sizes must be positive")
        if self.gru_hidden != self.bands:
            # each band decompresses its own hidden unit
            raise ConfigError("postnet.gru_hidden must equal postnet.bands")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters of the online dual-path network."""

    num_signals: int = 3
    feature_dim: int = 48
    blocks: int = 4
    heads: int = 4
    gru_count: int = 1
    encoder_layers: int = 2
    kernel: Tuple[int, int] = (3, 3)
    attention_chunk: int = 64
    freq_method: str = "none"
    freq_ratio: int = 1
    time_ratio: int = 1
    normalize_filters: bool = False
    postnet_enabled: bool = False
    postnet: PostNetConfig = field(default_factory=PostNetConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.feature_dim < 1 or self.heads < 1:
            raise ConfigError("model.feature_dim and model.heads must be >= 1")
        if self.feature_dim % self.heads:
            raise ConfigError("model.feature_dim must be divisible by heads")
        if self.num_signals < 1 or self.blocks < 1:
            raise ConfigError(
                "model.num_signals and model.blocks must be >= 1"
            )
        if not 0 <= self.gru_count <= self.blocks:
            raise ConfigError("model.gru_count must be in [0, blocks]")
        if self.encoder_layers < 0:
            raise ConfigError("model.encoder_layers must be >= 0")
        if len(self.kernel) != 2 or self.kernel[0] < 1:
            raise ConfigError("model.kernel must be (time >= 1, freq odd)")
        if self.kernel[1] < 1 or self.kernel[1] % 2 == 0:
            raise ConfigError("model.kernel frequency size must be odd")
        if self.attention_chunk < 1:
            raise ConfigError("model.attention_chunk must be >= 1")
        if self.freq_method not in FREQ_METHODS:
            raise ConfigError(
                f"freq.method must be one of {FREQ_METHODS}, "
                f"got {self.freq_method!r}"
            )
        for name in ("freq_ratio", "time_ratio"):
            if getattr(self, name) not in SUPPORTED_RATIOS:
                raise ConfigError(
                    f"unsupported ratio {name}={getattr(self, name)}; "
                    f"expected one of {SUPPORTED_RATIOS}"
                )
        if self.freq_method == "none" and self.freq_ratio != 1:
            raise ConfigError("freq.ratio > 1 needs a compression method")
        if self.is_fixed and self.time_ratio != 1:
            raise ConfigError(
                "fixed filterbanks combine with time ratio 1 only"
            )

    @property
    def is_fixed(self) -> bool:
        return self.freq_method in ("fixed_erb", "fixed_mel")

    @property
    def is_trainable(self) -> bool:
        return self.freq_method == "trainable_mel"

    @property
    def band_scale(self) -> str:
        return "erb" if self.freq_method == "fixed_erb" else "mel"

    @property
    def total_ratio(self) -> int:
        return self.freq_ratio * self.time_ratio

    def num_bands(self, num_bins: int) -> int:
        """Band count inside the compressed region."""
        if self.freq_method == "none":
            return num_bins
        return max(1, num_bins // self.freq_ratio)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: framing, echo canceller and model."""

    stft: StftConfig = field(default_factory=StftConfig)
    aec: AecConfig = field(default_factory=AecConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def to_dict(self) -> Dict[str, Any]:
        m = self.model
        return {
            "schema_version": SCHEMA_VERSION,
            "stft": asdict(self.stft),
            "aec": asdict(self.aec),
            "model": {
                "num_signals": m.num_signals,
                "feature_dim": m.feature_dim,
                "blocks": m.blocks,
                "heads": m.heads,
                "gru_count": m.gru_count,
                "encoder_layers": m.encoder_layers,
                "kernel": list(m.kernel),
                "attention_chunk": m.attention_chunk,
            },
            "freq": {
                "method": m.freq_method,
                "ratio": m.freq_ratio,
                "normalize_filters": m.normalize_filters,
            },
            "time": {"ratio": m.time_ratio},
            "postnet": {"enabled": m.postnet_enabled, **asdict(m.postnet)},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """
        Build a RunConfig from its JSON document.

        Args:
            data: Parsed JSON object. Missing sections take defaults.

        Raises:
            ConfigError: On unknown keys, a wrong schema version or invalid
                values.
        """
        if not isinstance(data, Mapping):
            raise ConfigError("config document must be a JSON object")
        sections = {"schema_version", "stft", "aec", "model", "freq"}
        sections |= {"time", "postnet"}
        _reject_unknown("config", data, sections)
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {version!r}; "
                f"expected {SCHEMA_VERSION}"
            )

        stft = _build(StftConfig, "stft", data.get("stft", {}))
        aec = _build(AecConfig, "aec", data.get("aec", {}))

        model_keys = {
            "num_signals",
            "feature_dim",
            "blocks",
            "heads",
            "gru_count",
            "encoder_layers",
            "kernel",
            "attention_chunk",
        }
        model_section = _section(data, "model")
        _reject_unknown("model", model_section, model_keys)
        kwargs: Dict[str, Any] = dict(model_section)

        freq = _section(data, "freq")
        _reject_unknown("freq", freq, {"method", "ratio", "normalize_filters"})
        if "method" in freq:
            kwargs["freq_method"] = freq["method"]
        if "ratio" in freq:
            kwargs["freq_ratio"] = freq["ratio"]
        if "normalize_filters" in freq:
            kwargs["normalize_filters"] = bool(freq["normalize_filters"])

        time = _section(data, "time")
        _reject_unknown("time", time, {"ratio"})
        if "ratio" in time:
            kwargs["time_ratio"] = time["ratio"]

        postnet = dict(_section(data, "postnet"))
        if "enabled" in postnet:
            kwargs["postnet_enabled"] = bool(postnet.pop("enabled"))
        kwargs["postnet"] = _build(PostNetConfig, "postnet", postnet)

        try:
            model = ModelConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"invalid model section: {exc}") from exc
        return cls(stft=stft, aec=aec, model=model)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        """Load a RunConfig JSON file."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _section(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    section = data.get(name, {})
    if not isinstance(section, Mapping):
        raise ConfigError(f"config section {name!r} must be an object")
    return section


def _reject_unknown(where: str, data: Mapping[str, Any], allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _build(cls, where: str, data: Mapping[str, Any]):
    if not isinstance(data, Mapping):
        raise ConfigError(f"config section {where!r} must be an object")
    _reject_unknown(where, data, {f.name for f in fields(cls)})
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid {where} section: {exc}") from exc


# Presets for the compression families.

_PRESET_PATTERN = re.compile(
    r"^(?:(?P<plain>uncompressed)"
    r"|(?P<family>fixed-erb|fixed-mel|trainmel)-(?P<q>\d+)"
    r"|skippred-(?P<r>\d+)(?P<post>-postnet)?"
    r"|dualpath-(?P<rt>\d+)x(?P<rf>\d+))$"
)

_FAMILY_METHOD = {
    "fixed-erb": "fixed_erb",
    "fixed-mel": "fixed_mel",
    "trainmel": "trainable_mel",
}


def preset_names() -> List[str]:
    """All preset names in a stable order."""
    names = ["uncompressed"]
    ratios = SUPPORTED_RATIOS[1:]
    for family in ("fixed-erb", "fixed-mel", "trainmel"):
        names += [f"{family}-{q}" for q in ratios]
    names += [f"skippred-{q}" for q in ratios]
    names += [f"skippred-{q}-postnet" for q in ratios]
    for rt in ratios:
        for rf in ratios:
            if rt * rf <= 32:
                names.append(f"dualpath-{rt}x{rf}")
    return names


def preset(name: str) -> RunConfig:
    """
    Build the RunConfig of a named preset.

    Args:
        name: ``uncompressed``, ``fixed-erb-Q``, ``fixed-mel-Q``,
            ``trainmel-Q``, ``skippred-Q[-postnet]`` or ``dualpath-TxF``.

    Raises:
        ConfigError: If the name is unknown or its ratios are unsupported.
    """
    match = _PRESET_PATTERN.match(name.strip().lower())
    if match is None:
        raise ConfigError(f"unknown preset {name!r}")
    groups = match.groupdict()

    if groups["plain"]:
        model = ModelConfig()
    elif groups["family"]:
        model = ModelConfig(
            freq_method=_FAMILY_METHOD[groups["family"]],
            freq_ratio=int(groups["q"]),
        )
    elif groups["r"]:
        model = ModelConfig(
            time_ratio=int(groups["r"]),
            postnet_enabled=bool(groups["post"]),
        )
    else:
        model = ModelConfig(
            freq_method="trainable_mel",
            freq_ratio=int(groups["rf"]),
            time_ratio=int(groups["rt"]),
            postnet_enabled=True,
        )
    return RunConfig(model=model)


def resolve_config(value: Union[str, Path]) -> RunConfig:
    """Load ``value`` as a JSON path, or as a preset name if no such file."""
    path = Path(value)
    if path.exists():
        return RunConfig.load(path)
    if _PRESET_PATTERN.match(str(value).strip().lower()):
        return preset(str(value))
    raise FileNotFoundError(f"Config file not found: {value}")


def with_model(config: RunConfig, **changes: Any) -> RunConfig:
    """Return ``config`` with ModelConfig fields replaced."""
    return replace(config, model=replace(config.model, **changes))


PRESETS = tuple(preset_names())
