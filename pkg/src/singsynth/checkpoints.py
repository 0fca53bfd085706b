"""Checkpoint persistence.

A checkpoint is a parameter blob (torch.save) next to a JSON sidecar
carrying everything needed to rebuild and trust the model: the config
hash, the vocabulary (tokens and hash), normalization statistics and
layer-shaping metadata. Loading under a different config or vocabulary
fails closed unless explicitly forced.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .acoustic import AcousticModel
from .config import PipelineConfig
from .corpus import PhonemeVocabulary
from .duration import DurationModel
from .errors import MissingArtifactError, ValidationError
from .lf0 import Lf0Model

KINDS = ("dm", "lf0", "am")


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(
    path,
    model: torch.nn.Module,
    kind: str,
    cfg: PipelineConfig,
    vocab: PhonemeVocabulary,
    stats: dict,
    extra: dict | None = None,
) -> Path:
    if kind not in KINDS:
        raise ValidationError(f"unknown checkpoint kind {kind!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": kind,
        "config_hash": cfg.config_hash(),
        "vocab": vocab.to_json(),
        "vocab_hash": vocab.hash(),
        "stats": stats,
    }
    if extra:
        meta.update(extra)
    torch.save({"state_dict": model.state_dict()}, path)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_sidecar(path, kind: str) -> dict:
    path = Path(path)
    side = sidecar_path(path)
    if not path.exists():
        raise MissingArtifactError(f"{kind} checkpoint not found: {path}")
    if not side.exists():
        raise MissingArtifactError(f"{kind} checkpoint sidecar not found: {side}")
    meta = json.loads(side.read_text())
    if meta.get("kind") != kind:
        raise ValidationError(
            f"{path} holds a {meta.get('kind')!r} model, expected {kind!r}"
        )
    return meta


def _check_hash(meta: dict, cfg: PipelineConfig, path, force: bool) -> None:
    if meta["config_hash"] != cfg.config_hash():
        msg = (
            f"{path}: checkpoint was produced under config hash "
            f"{meta['config_hash'][:12]} but the current config hashes to "
            f"{cfg.config_hash()[:12]}; refusing to load (use force to override)"
        )
        if not force:
            raise ValidationError(msg)


def _load_state(model: torch.nn.Module, path) -> None:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(blob["state_dict"])
    model.eval()


def load_duration_model(path, cfg: PipelineConfig, force: bool = False):
    meta = load_sidecar(path, "dm")
    _check_hash(meta, cfg, path, force)
    vocab = PhonemeVocabulary.from_json(meta["vocab"])
    model = DurationModel(len(vocab), cfg.duration_model, meta["stats"])
    _load_state(model, path)
    return model, meta


def load_lf0_model(path, cfg: PipelineConfig, force: bool = False):
    meta = load_sidecar(path, "lf0")
    _check_hash(meta, cfg, path, force)
    vocab = PhonemeVocabulary.from_json(meta["vocab"])
    model = Lf0Model(len(vocab), cfg.lf0_model, meta["stats"])
    _load_state(model, path)
    return model, meta


def load_acoustic_model(path, cfg: PipelineConfig, force: bool = False):
    meta = load_sidecar(path, "am")
    _check_hash(meta, cfg, path, force)
    vocab = PhonemeVocabulary.from_json(meta["vocab"])
    model = AcousticModel(
        vocab_size=len(vocab),
        n_speakers=meta["n_speakers"],
        cfg=cfg.acoustic_model,
        stats=meta["stats"],
        n_mels=cfg.audio.n_mels,
        grl_scale=meta.get("grl_scale", 1.0),
        l2_weight=meta.get("l2_weight", 1e-6),
    )
    _load_state(model, path)
    return model, meta


def check_cross_consistency(metas: list[dict], force: bool = False) -> None:
    """Checkpoints used together must share config and vocabulary."""
    hashes = {m["config_hash"] for m in metas}
    vocabs = {m["vocab_hash"] for m in metas}
    if len(hashes) > 1 or len(vocabs) > 1:
        msg = "checkpoints disagree on config or vocabulary hashes"
        if not force:
            raise ValidationError(msg)
