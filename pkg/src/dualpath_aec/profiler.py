"""
Analytic parameter and MAC accounting.

Conventions: one MAC per multiply-accumulate; a linear map ``in -> out``
costs ``in * out``; a convolution costs ``Cin/groups * Kt * Kf * Cout`` per
output position; a GRU step ``3 h (i + h)``; linear attention per sequence
element ``4 E^2 + 2 (E/heads)^2 heads``. Element-wise operations
(activations, norms, residual adds, magnitudes) are not billed. Layers
inside the time-compressed region run at ``frame_rate / time_ratio``.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from .config import (
    SUPPORTED_RATIOS,
    ModelConfig,
    PostNetConfig,
    RunConfig,
    StftConfig,
    preset,
)
from .errors import ConfigError


@dataclass(frozen=True)
class LayerEntry:
    """One billed layer: MACs per execution and executions per second."""

    name: str
    group: str
    params: int
    macs: int
    rate_hz: float

    @property
    def macs_per_second(self) -> float:
        return self.macs * self.rate_hz


@dataclass
class ComplexityReport:
    """Per-layer and total complexity of one configuration."""

    label: str
    frame_rate: float
    entries: List[LayerEntry] = field(default_factory=list)

    def add(
        self, name: str, group: str, params: int, macs: int, rate: float
    ) -> None:
        self.entries.append(LayerEntry(name, group, params, macs, rate))

    @property
    def params(self) -> int:
        return sum(e.params for e in self.entries)

    @property
    def macs_per_second(self) -> float:
        return float(sum(e.macs_per_second for e in self.entries))

    @property
    def macs_per_frame(self) -> float:
        """MACs per input frame, averaged over skipped frames."""
        return self.macs_per_second / self.frame_rate

    def sub_report(self, group: str) -> "ComplexityReport":
        return ComplexityReport(
            label=f"{self.label}:{group}",
            frame_rate=self.frame_rate,
            entries=[e for e in self.entries if e.group == group],
        )

    def ratio_to(self, baseline: "ComplexityReport") -> float:
        """Compression ratio ``macs(baseline) / macs(self)``."""
        return baseline.macs_per_second / self.macs_per_second

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame([asdict(e) for e in self.entries])
        if df.empty:
            return df
        df["macs_per_second"] = df["macs"] * df["rate_hz"]
        return df

    def group_totals(self) -> pd.DataFrame:
        """Params and MACs/s summed per layer group, in pipeline order."""
        df = self.to_frame()
        order = list(dict.fromkeys(df["group"]))
        totals = df.groupby("group", sort=False)[
            ["params", "macs_per_second"]
        ].sum()
        return totals.loc[order]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "params": self.params,
            "macs_per_frame": self.macs_per_frame,
            "macs_per_second": self.macs_per_second,
            "frame_rate": self.frame_rate,
            "layers": [
                {**asdict(e), "macs_per_second": e.macs_per_second}
                for e in self.entries
            ],
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _conv_stack(
    report: ComplexityReport,
    prefix: str,
    layers: int,
    dim: int,
    kernel: tuple,
    positions: int,
    rate: float,
) -> None:
    kt, kf = kernel
    for i in range(layers):
        params = (dim * kt * kf + dim) + (dim * dim + dim) + 3 * dim
        macs = (dim * kt * kf + dim * dim) * positions
        report.add(f"{prefix}.{i}", "core", params, macs, rate)


def _attention(dim: int, heads: int) -> Dict[str, int]:
    head_dim = dim // heads
    return {
        "params": 4 * (dim * dim + dim) + 2 * dim,
        "macs": 4 * dim * dim + 2 * head_dim * head_dim * heads,
    }


def _gru(inputs: int, hidden: int) -> Dict[str, int]:
    return {
        "params": 3 * hidden * (inputs + hidden) + 6 * hidden,
        "macs": 3 * hidden * (inputs + hidden),
    }


def postnet_report(
    cfg: Optional[PostNetConfig] = None,
    stft: Optional[StftConfig] = None,
) -> ComplexityReport:
    """Complexity of the PostNet alone, all layers at the frame rate."""
    cfg = cfg or PostNetConfig()
    stft = stft or StftConfig()
    bins, bands = stft.num_bins, cfg.bands
    rate = stft.frame_rate
    report = ComplexityReport("postnet", rate)
    group = "postnet"
    report.add("postnet.comp", group, 2 * bins + bands, 2 * bins, rate)
    gru = _gru(bands, cfg.gru_hidden)
    report.add("postnet.gru", group, gru["params"], gru["macs"], rate)
    report.add(
        "postnet.expand",
        group,
        2 * bands * cfg.channels,
        bands * cfg.channels,
        rate,
    )
    report.add(
        "postnet.conv1",
        group,
        cfg.channels * cfg.hidden + cfg.hidden,
        cfg.channels * cfg.hidden * bands,
        rate,
    )
    report.add("postnet.act", group, cfg.hidden, 0, rate)
    report.add(
        "postnet.conv2", group, cfg.hidden + 1, cfg.hidden * bands, rate
    )
    report.add(
        "postnet.proj", group, bands * bins + bins, bands * bins, rate
    )
    return report


def count(
    config: Union[RunConfig, ModelConfig], label: Optional[str] = None
) -> ComplexityReport:
    """
    Parameter and MAC totals of a configuration.

    Args:
        config: Run or model configuration (default framing for the latter).
        label: Report label, defaults to the compression method and ratios.

    Raises:
        ConfigError: On an unsupported ratio.
    """
    if isinstance(config, RunConfig):
        cfg, stft = config.model, config.stft
    else:
        cfg, stft = config, StftConfig()
    for ratio in (cfg.freq_ratio, cfg.time_ratio):
        if ratio not in SUPPORTED_RATIOS:
            raise ConfigError(f"unsupported ratio {ratio}")

    bins = stft.num_bins
    bands = cfg.num_bands(bins)
    signals = cfg.num_signals
    stacked = 2 * signals
    dim = cfg.feature_dim
    rate = stft.frame_rate
    core_rate = rate / cfg.time_ratio
    label = label or (
        f"{cfg.freq_method} {cfg.time_ratio}x{cfg.freq_ratio}"
        + (" +postnet" if cfg.postnet_enabled else "")
    )
    report = ComplexityReport(label, rate)

    r = cfg.time_ratio
    if r > 1:
        report.add(
            "skip.conv",
            "front",
            stacked * r * dim + dim,
            stacked * r * dim * bins,
            core_rate,
        )
    if cfg.is_trainable:
        in_ch = dim if r > 1 else stacked
        report.add(
            "freq.enc",
            "front",
            in_ch * dim * bins + dim * bands,
            in_ch * dim * bins,
            core_rate,
        )
    elif cfg.is_fixed:
        report.add(
            "fixed.compress", "front", 0, signals * bands * bins, core_rate
        )
        report.add(
            "in_layer",
            "front",
            signals * dim + dim,
            signals * dim * bands,
            core_rate,
        )
    elif r == 1:
        report.add(
            "in_layer",
            "front",
            stacked * dim + dim,
            stacked * dim * bins,
            core_rate,
        )

    positions = bands
    _conv_stack(
        report,
        "enc",
        cfg.encoder_layers,
        dim,
        cfg.kernel,
        positions,
        core_rate,
    )
    attention = _attention(dim, cfg.heads)
    gru = _gru(dim, dim)
    for i in range(cfg.blocks):
        report.add(
            f"block.{i}.attn_f",
            "core",
            attention["params"],
            attention["macs"] * positions,
            core_rate,
        )
        if i < cfg.gru_count:
            report.add(
                f"block.{i}.gru",
                "core",
                gru["params"],
                gru["macs"] * positions,
                core_rate,
            )
        report.add(
            f"block.{i}.attn_t",
            "core",
            attention["params"],
            attention["macs"] * positions,
            core_rate,
        )
    _conv_stack(
        report,
        "dec",
        cfg.encoder_layers,
        dim,
        cfg.kernel,
        positions,
        core_rate,
    )

    out_in = dim
    if cfg.is_trainable:
        out_in = 2 * stacked
        report.add(
            "freq.dec",
            "back",
            (dim + 1) * out_in * bins,
            dim * out_in * bins,
            core_rate,
        )
    elif cfg.is_fixed:
        report.add(
            "fixed.decompress", "back", 0, dim * bands * bins, core_rate
        )
    report.add(
        "out",
        "back",
        out_in * stacked + stacked,
        out_in * stacked * bins,
        rate,
    )

    if cfg.postnet_enabled:
        report.entries.extend(postnet_report(cfg.postnet, stft).entries)
    return report


# Published complexity of each compression family:
# (preset, params in thousands, MACs/s in millions, compression ratio).
PUBLISHED_COMPLEXITY = (
    ("uncompressed", 109, 1822, 1.0),
    ("fixed-erb-2", 109, 910, 2.0),
    ("fixed-mel-2", 109, 910, 2.0),
    ("trainmel-2", 413, 937, 1.9),
    ("skippred-2", 109, 917, 2.0),
    ("skippred-2-postnet", 177, 931, 2.0),
    ("fixed-erb-4", 109, 455, 4.0),
    ("fixed-mel-4", 109, 455, 4.0),
    ("trainmel-4", 408, 484, 3.8),
    ("skippred-4", 110, 462, 3.9),
    ("skippred-4-postnet", 177, 477, 3.8),
    ("dualpath-2x2", 481, 486, 3.7),
    ("fixed-erb-8", 109, 227, 8.0),
    ("fixed-mel-8", 109, 227, 8.0),
    ("trainmel-8", 398, 257, 7.1),
    ("skippred-8", 111, 245, 7.4),
    ("skippred-8-postnet", 178, 250, 7.3),
    ("dualpath-2x4", 476, 261, 7.0),
    ("fixed-erb-16", 109, 113, 16.1),
    ("fixed-mel-16", 109, 113, 16.1),
    ("trainmel-16", 381, 142, 12.8),
    ("skippred-16", 113, 121, 15.1),
    ("skippred-16-postnet", 181, 136, 13.4),
    ("dualpath-4x4", 477, 140, 13.0),
    ("fixed-erb-32", 109, 57, 32.0),
    ("fixed-mel-32", 109, 57, 32.0),
    ("trainmel-32", 354, 84, 21.7),
    ("skippred-32", 118, 65, 28.0),
    ("skippred-32-postnet", 185, 79, 23.1),
    ("dualpath-4x8", 467, 83, 22.0),
)


def published_table() -> pd.DataFrame:
    return pd.DataFrame(
        PUBLISHED_COMPLEXITY,
        columns=["preset", "published_params_k", "published_macs_m", "ratio"],
    ).rename(columns={"ratio": "published_ratio"})


def comparison_table(presets: Optional[List[str]] = None) -> pd.DataFrame:
    """
    Analytic totals next to the published ones for each preset.

    Columns: preset, params, macs_per_second, ratio, the published
    counterparts and the relative deviation of MACs/s and ratio.
    """
    published = published_table()
    names = presets or list(published["preset"])
    baseline = count(preset("uncompressed"))
    rows = []
    for name in names:
        report = count(preset(name), label=name)
        rows.append(
            {
                "preset": name,
                "params": report.params,
                "macs_per_second": report.macs_per_second,
                "ratio": report.ratio_to(baseline),
            }
        )
    df = pd.DataFrame(rows).merge(published, on="preset", how="left")
    df["macs_deviation"] = (
        df["macs_per_second"] / (df["published_macs_m"] * 1e6) - 1.0
    )
    df["ratio_deviation"] = df["ratio"] / df["published_ratio"] - 1.0
    return df
