"""Pipeline configuration.

Configs are nested frozen dataclasses loadable from a JSON file whose
structure mirrors the dataclass fields. The hash over the audio and
model sections is embedded in feature caches and checkpoints so that
artifacts produced under one analysis/model setup are never silently
consumed under another.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, MissingArtifactError


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 24000
    frame_period: float = 0.0125  # seconds per frame hop
    window_length: float = 0.05  # analysis window in seconds
    n_fft: int = 2048
    n_mels: int = 80
    fmin: float = 40.0
    fmax: float = 12000.0
    amplitude_floor: float = 1e-5  # mel amplitudes are floored before log
    f0_min: float = 50.0
    f0_max: float = 1000.0
    # the F0 tracker frames on the same hop grid but with its own,
    # shorter window so note changes smear across fewer frames
    f0_window_length: float = 0.03
    voicing_threshold: float = 0.3  # normalized autocorrelation peak
    griffin_lim_iterations: int = 60

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.frame_period))

    @property
    def win_samples(self) -> int:
        return int(round(self.sample_rate * self.window_length))

    @property
    def f0_win_samples(self) -> int:
        return int(round(self.sample_rate * self.f0_window_length))


@dataclass(frozen=True)
class DurationModelConfig:
    phoneme_embed_dim: int = 64
    slur_embed_dim: int = 4
    note_dur_dim: int = 16
    encoder_dim: int = 128
    bank_size: int = 8
    highway_layers: int = 4
    n_components: int = 8


@dataclass(frozen=True)
class Lf0ModelConfig:
    phoneme_embed_dim: int = 64
    pitch_embed_dim: int = 32
    slur_embed_dim: int = 4
    frame_pos_dim: int = 16
    encoder_dim: int = 128
    bank_size: int = 16
    highway_layers: int = 4
    n_components: int = 8
    median_smooth_width: int = 3  # frames; 1 disables smoothing


@dataclass(frozen=True)
class AcousticModelConfig:
    phoneme_embed_dim: int = 256
    speaker_embed_dim: int = 16
    style_embed_dim: int = 16
    frame_pos_dim: int = 16
    lf0_dim: int = 16
    encoder_dim: int = 256
    bank_size: int = 16
    highway_layers: int = 4
    prenet_dims: tuple[int, ...] = (256, 128)
    prenet_dropout: float = 0.5
    dat_dim: int = 256  # width of the recurrent layer feeding the style classifier
    decoder_dim: int = 512
    decoder_layers: int = 2
    postnet_dim: int = 128
    postnet_bank_size: int = 8


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    cosine_lr_decay: bool = True  # anneal to 10% of the base rate over the budget
    batch_size: int = 8
    dm_steps: int = 2000
    lf0_steps: int = 2000
    am_steps: int = 10000
    adv_weight: float = 0.001  # weight of the adversarial style term
    grl_scale: float = 1.0  # constant scale on the reversed gradient
    # Classifier refits per acoustic step. With 0 the style classifier
    # learns jointly from the reversed loss; larger values keep it near
    # its optimum so the reversed push shrinks style evidence instead of
    # circling it.
    adv_inner_steps: int = 0
    l2_weight: float = 1e-6  # on non-embedding weight matrices
    prenet_dropout_at_inference: bool = True
    disentangle_steps: int = 400  # budget for probe-comparison trainings
    log_every: int = 100


@dataclass(frozen=True)
class PipelineConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    duration_model: DurationModelConfig = field(default_factory=DurationModelConfig)
    lf0_model: Lf0ModelConfig = field(default_factory=Lf0ModelConfig)
    acoustic_model: AcousticModelConfig = field(default_factory=AcousticModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the sections that determine feature and model shape.

        Training hyperparameters are excluded: a checkpoint trained for
        more steps is still loadable, but one produced under different
        audio analysis or layer widths is not.
        """
        payload = {
            "audio": dataclasses.asdict(self.audio),
            "duration_model": dataclasses.asdict(self.duration_model),
            "lf0_model": dataclasses.asdict(self.lf0_model),
            "acoustic_model": dataclasses.asdict(self.acoustic_model),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ParseError(f"config section {where!r} must be a JSON object")
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - fields
    if unknown:
        raise ParseError(f"config section {where!r} has unknown keys {sorted(unknown)}")
    kwargs = {
        name: tuple(value) if name == "prenet_dims" else value
        for name, value in data.items()
    }
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParseError(f"config section {where!r}: {exc}")


_SECTIONS = {
    "audio": AudioConfig,
    "duration_model": DurationModelConfig,
    "lf0_model": Lf0ModelConfig,
    "acoustic_model": AcousticModelConfig,
    "training": TrainingConfig,
}


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ParseError("config root must be a JSON object")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ParseError(f"config has unknown sections {sorted(unknown)}")
    kwargs = {name: _build(_SECTIONS[name], section, name) for name, section in data.items()}
    return PipelineConfig(**kwargs)


def load_config(path=None) -> PipelineConfig:
    """Load a JSON config file, or the defaults when path is None."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}")
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
