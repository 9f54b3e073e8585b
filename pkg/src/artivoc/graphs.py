"""Model graph descriptions and the default topology registry.

Every neural component is a stack of causal convolution layers plus named
linear heads. The registry pins one graph per model name; a JSON form of the
registry is the on-disk interchange format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParameterError

ACTIVATIONS = ("identity", "elu", "tanh", "sigmoid", "softmax")


@dataclass(frozen=True)
class ConvLayerCfg:
    in_ch: int
    out_ch: int
    kernel: int
    dilation: int = 1
    stride: int = 1
    activation: str = "elu"
    residual: bool = False

    def __post_init__(self):
        if min(self.in_ch, self.out_ch, self.kernel, self.dilation, self.stride) < 1:
            raise ParameterError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.residual and (self.in_ch != self.out_ch or self.stride != 1):
            raise ParameterError("residual layers need matching channels and stride 1")

    @property
    def context(self) -> int:
        """Past input frames needed beyond the current one."""
        return (self.kernel - 1) * self.dilation

    @property
    def receptive_field(self) -> int:
        return self.context + 1


@dataclass(frozen=True)
class ModelGraph:
    name: str
    input_dim: int
    frame_rate: float
    layers: tuple[ConvLayerCfg, ...] = ()
    heads: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.input_dim < 1:
            raise ParameterError("input_dim must be positive")
        prev = self.input_dim
        for i, cfg in enumerate(self.layers):
            if cfg.in_ch != prev:
                raise ParameterError(
                    f"{self.name}: layer {i} expects {cfg.in_ch} channels, gets {prev}"
                )
            prev = cfg.out_ch
        for head, dim in self.heads.items():
            if dim < 1:
                raise ParameterError(f"{self.name}: head {head!r} has dim {dim}")

    @property
    def feature_dim(self) -> int:
        """Channel count the heads consume."""
        return self.layers[-1].out_ch if self.layers else self.input_dim

    @property
    def total_stride(self) -> int:
        s = 1
        for cfg in self.layers:
            s *= cfg.stride
        return s

    @property
    def receptive_field(self) -> int:
        """Input frames that can influence one output frame."""
        rf = 1
        s = 1
        for cfg in self.layers:
            rf += cfg.context * s
            s *= cfg.stride
        return rf

    def latest_input_for(self, t: int) -> int:
        """Most recent input index that can influence output frame t."""
        return t * self.total_stride

    def earliest_input_for(self, t: int) -> int:
        return self.latest_input_for(t) - (self.receptive_field - 1)

    def output_frames(self, n_input: int) -> int:
        if n_input <= 0:
            return 0
        return (n_input - 1) // self.total_stride + 1

    # Tensor naming convention used by the weight container.
    def layer_weight(self, i: int) -> str:
        return f"{self.name}.layers.{i}.weight"

    def layer_bias(self, i: int) -> str:
        return f"{self.name}.layers.{i}.bias"

    def head_weight(self, head: str) -> str:
        return f"{self.name}.heads.{head}.weight"

    def head_bias(self, head: str) -> str:
        return f"{self.name}.heads.{head}.bias"

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for i, cfg in enumerate(self.layers):
            shapes[self.layer_weight(i)] = (cfg.out_ch, cfg.in_ch, cfg.kernel)
            shapes[self.layer_bias(i)] = (cfg.out_ch,)
        for head, dim in self.heads.items():
            shapes[self.head_weight(head)] = (dim, self.feature_dim)
            shapes[self.head_bias(head)] = (dim,)
        return shapes


# Model names the conversion pipeline and enrollment path expect.
SOURCE_EXTRACTOR = "source_extractor"
EMA_INVERTER = "ema_inverter"
VOCODER_ENCODER = "vocoder_encoder"
VOCODER_POST = "vocoder_post"
FILM = "film"
SPEAKER_FRONTEND = "speaker_frontend"
SPEAKER_BACKBONE = "speaker_backbone"

PIPELINE_MODELS = (SOURCE_EXTRACTOR, EMA_INVERTER, VOCODER_ENCODER, VOCODER_POST, FILM)
ENROLL_MODELS = (SPEAKER_FRONTEND, SPEAKER_BACKBONE, SOURCE_EXTRACTOR)

HIDDEN_CH = 64
SPEAKER_EMBED_DIM = 128
EMA_DIM = 12
ARTIC_DIM = 15
PITCH_BINS = 360
HARMONICS = 60
NOISE_BANDS = 65
POST_KERNEL = 65


def _dilated_stack(input_dim: int, hidden: int = HIDDEN_CH) -> tuple[ConvLayerCfg, ...]:
    """11 causal conv layers (projection + 10 dilated residual blocks) and a
    kernel-1 hidden layer acting as the MLP stage before the linear heads."""
    layers = [ConvLayerCfg(input_dim, hidden, kernel=3, dilation=1)]
    layers += [
        ConvLayerCfg(hidden, hidden, kernel=3, dilation=2**i, residual=True)
        for i in range(10)
    ]
    layers.append(ConvLayerCfg(hidden, hidden, kernel=1))
    return tuple(layers)


def default_registry(spec_mel_bins: int = 80, spec_mfcc: int = 20) -> dict[str, ModelGraph]:
    frontend = (
        ConvLayerCfg(1, 512, kernel=10, stride=5),
        ConvLayerCfg(512, 512, kernel=3, stride=2),
        ConvLayerCfg(512, 512, kernel=3, stride=2),
        ConvLayerCfg(512, 512, kernel=3, stride=2),
        ConvLayerCfg(512, 512, kernel=3, stride=2),
        ConvLayerCfg(512, 512, kernel=2, stride=2),
        ConvLayerCfg(512, 512, kernel=2, stride=2),
    )
    return {
        SOURCE_EXTRACTOR: ModelGraph(
            SOURCE_EXTRACTOR, spec_mel_bins, 200.0, _dilated_stack(spec_mel_bins),
            {"pitch": PITCH_BINS, "periodicity": 1, "loudness": 1},
        ),
        EMA_INVERTER: ModelGraph(
            EMA_INVERTER, spec_mfcc, 200.0, _dilated_stack(spec_mfcc), {"ema": EMA_DIM}
        ),
        VOCODER_ENCODER: ModelGraph(
            VOCODER_ENCODER, ARTIC_DIM, 200.0, _dilated_stack(ARTIC_DIM),
            {"harm_amp": 1, "harm_dist": HARMONICS, "noise_mags": NOISE_BANDS},
        ),
        VOCODER_POST: ModelGraph(
            VOCODER_POST, 1, 16000.0,
            (ConvLayerCfg(1, 1, kernel=POST_KERNEL, activation="identity"),), {},
        ),
        FILM: ModelGraph(
            FILM, SPEAKER_EMBED_DIM, 0.0, (), {"gamma": HIDDEN_CH, "beta": HIDDEN_CH}
        ),
        SPEAKER_FRONTEND: ModelGraph(SPEAKER_FRONTEND, 1, 16000.0, frontend, {}),
        SPEAKER_BACKBONE: ModelGraph(
            SPEAKER_BACKBONE, 512, 50.0, _dilated_stack(512, hidden=SPEAKER_EMBED_DIM),
            {"embed": SPEAKER_EMBED_DIM},
        ),
    }


def registry_to_json(registry: dict[str, ModelGraph]) -> str:
    doc = {}
    for name, g in registry.items():
        doc[name] = {
            "input_dim": g.input_dim,
            "frame_rate": g.frame_rate,
            "layers": [
                {
                    "in_ch": c.in_ch,
                    "out_ch": c.out_ch,
                    "kernel": c.kernel,
                    "dilation": c.dilation,
                    "stride": c.stride,
                    "activation": c.activation,
                    "residual": c.residual,
                }
                for c in g.layers
            ],
            "heads": g.heads,
        }
    return json.dumps(doc, indent=2)


def registry_from_json(text: str) -> dict[str, ModelGraph]:
    doc = json.loads(text)
    registry = {}
    for name, gd in doc.items():
        layers = tuple(ConvLayerCfg(**ld) for ld in gd["layers"])
        registry[name] = ModelGraph(
            name, gd["input_dim"], gd["frame_rate"], layers, dict(gd["heads"])
        )
    return registry


def load_registry(path) -> dict[str, ModelGraph]:
    with open(path, "r", encoding="utf-8") as fh:
        return registry_from_json(fh.read())


def save_registry(registry: dict[str, ModelGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(registry_to_json(registry))
