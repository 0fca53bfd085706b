"""Corpus preparation, training loops, synthesis and evaluation.

The feature cache written by prepare() is the single source for every
training command: per-utterance binary matrices plus one stats file
holding the vocabulary, speaker map and normalization statistics. The
stats travel into each checkpoint sidecar, so synthesis needs only the
checkpoints. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import plots
from .acoustic import (
    AcousticModel,
    am_loss,
    shift_frames,
)
from .assembly import (
    acoustic_model_matrix,
    expand_to_frames,
    featurize_utterance,
    intervals_to_durations,
    lf0_model_matrix,
    style_id,
)
from .checkpoints import (
    check_cross_consistency,
    load_acoustic_model,
    load_duration_model,
    load_lf0_model,
    save_checkpoint,
)
from .config import PipelineConfig
from .corpus import (
    PhonemeVocabulary,
    build_vocabulary,
    load_manifest,
    load_utterance,
    parse_intervals,
    parse_score,
    pitch_to_midi,
)
from .duration import DurationModel, dm_train_step
from .errors import MissingArtifactError, ValidationError
from .featio import read_feature_file, write_feature_file, read_f0_file, write_f0_file
from .lf0 import Lf0Model, lf0_train_step, median_smooth
from .signal import MelSpectrogram, extract_lf0, extract_mel, invert_mel, lf0_from_f0, load_wav, save_wav

STATS_FILE = "stats.json"
INDEX_FILE = "index.json"


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def prepare(manifest_path, cfg: PipelineConfig, outdir, skip_bad: bool = False) -> dict:
    """Extract and cache features for every manifest utterance.

    Writes per utterance: {id}.mel.bin (T x n_mels log mel),
    {id}.lf0.bin (T x 1 continuous log-F0), {id}.frames.bin (T x 4
    frame-level score features) and {id}.phon.bin (N x 4 phoneme-level
    features with frame-count targets), plus stats.json and index.json.
    Failing utterances abort the run unless skip_bad is set, in which
    case they are reported and dropped.
    """
    manifest_path = Path(manifest_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    records = load_manifest(manifest_path)
    ids = [r["id"] for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"manifest has duplicate utterance ids {dupes}")
    base = manifest_path.parent
    period = cfg.audio.frame_period

    utts, failures = [], []
    for rec in records:
        try:
            utts.append(load_utterance(rec, base, period))
        except Exception as exc:  # collected and reported as one validation error
            failures.append({"id": rec["id"], "error": str(exc)})
    vocab = build_vocabulary(utts)
    speakers = sorted({u.speaker for u in utts})
    speaker_map = {spk: i for i, spk in enumerate(speakers)}

    index = []
    lf0_sum = lf0_sumsq = lf0_count = 0.0
    mel_sum = np.zeros(cfg.audio.n_mels)
    mel_sumsq = np.zeros(cfg.audio.n_mels)
    mel_count = 0
    sing_durs, sing_note_durs = [], []

    for utt in utts:
        try:
            if utt.audio_path is None:
                raise MissingArtifactError(f"{utt.utt_id}: manifest has no audio path")
            audio = load_wav(utt.audio_path, cfg.audio)
            n_sec = audio.shape[0] / cfg.audio.sample_rate
            if abs(utt.intervals[-1].end - n_sec) > period:
                raise ValidationError(
                    f"{utt.utt_id}: intervals cover {utt.intervals[-1].end:.4f}s but "
                    f"audio lasts {n_sec:.4f}s (beyond one frame period)"
                )
            mel = extract_mel(audio, cfg.audio.sample_rate, cfg.audio)
            lf0 = extract_lf0(audio, cfg.audio.sample_rate, cfg.audio)
            t = len(mel)
            phon, durations, _ = featurize_utterance(utt, vocab, period)
            diff = t - int(durations.sum())
            if diff != 0:
                if abs(diff) > 1:
                    raise ValidationError(
                        f"{utt.utt_id}: mel has {t} frames but intervals give "
                        f"{int(durations.sum())}; misalignment beyond one frame"
                    )
                if durations[-1] + diff < 1:
                    raise ValidationError(
                        f"{utt.utt_id}: cannot reconcile frame counts with audio length"
                    )
                durations = durations.copy()
                durations[-1] += diff
            frames = expand_to_frames(
                phon.phoneme_id,
                np.array([pitch_to_midi(e.pitch) for e in utt.entries], dtype=np.int64),
                phon.slur,
                durations,
            )
        except Exception as exc:
            failures.append({"id": utt.utt_id, "error": str(exc)})
            continue

        write_feature_file(outdir / f"{utt.utt_id}.mel.bin", mel.frames)
        write_feature_file(outdir / f"{utt.utt_id}.lf0.bin", lf0.values)
        write_feature_file(outdir / f"{utt.utt_id}.frames.bin", lf0_model_matrix(frames))
        phon_matrix = np.concatenate(
            [phon.matrix(), durations.astype(np.float32)[:, None]], axis=1
        )
        write_feature_file(outdir / f"{utt.utt_id}.phon.bin", phon_matrix)

        lf0_sum += float(lf0.values.sum())
        lf0_sumsq += float((lf0.values.astype(np.float64) ** 2).sum())
        lf0_count += len(lf0.values)
        mel64 = mel.frames.astype(np.float64)
        mel_sum += mel64.sum(axis=0)
        mel_sumsq += (mel64**2).sum(axis=0)
        mel_count += t
        if utt.style == "singing":
            sing_durs.append(durations.astype(np.float64))
            sing_note_durs.append(phon.note_dur.astype(np.float64))
        index.append(
            {
                "id": utt.utt_id,
                "style": utt.style,
                "speaker": utt.speaker,
                "n_frames": int(t),
                "n_phonemes": len(phon),
            }
        )

    if failures and not skip_bad:
        lines = "; ".join(f"{f['id']}: {f['error']}" for f in failures)
        raise ValidationError(f"{len(failures)} utterance(s) failed preparation: {lines}")
    if not index:
        raise ValidationError("no utterances survived preparation")

    # the running-moment variance can dip a hair below zero for bands
    # that are constant (for example fully floored mel bands)
    lf0_mean = lf0_sum / lf0_count
    lf0_var = max(lf0_sumsq / lf0_count - lf0_mean**2, 0.0)
    lf0_std = max(float(np.sqrt(lf0_var)), 1e-5)
    mel_mean = mel_sum / mel_count
    mel_var = np.maximum(mel_sumsq / mel_count - mel_mean**2, 0.0)
    mel_std = np.maximum(np.sqrt(mel_var), 1e-5)
    if sing_durs:
        durs = np.concatenate(sing_durs)
        note_durs = np.log(np.clip(np.concatenate(sing_note_durs), 1e-4, None))
        dur_mean, dur_std = float(durs.mean()), max(float(durs.std()), 1e-5)
        nd_mean, nd_std = float(note_durs.mean()), max(float(note_durs.std()), 1e-5)
    else:
        dur_mean, dur_std, nd_mean, nd_std = 0.0, 1.0, 0.0, 1.0

    stats = {
        "config_hash": cfg.config_hash(),
        "vocab": vocab.to_json(),
        "vocab_hash": vocab.hash(),
        "speaker_map": speaker_map,
        "n_speakers": len(speaker_map),
        "lf0_mean": lf0_mean,
        "lf0_std": lf0_std,
        "mel_mean": mel_mean.tolist(),
        "mel_std": mel_std.tolist(),
        "dur_mean": dur_mean,
        "dur_std": dur_std,
        "note_dur_log_mean": nd_mean,
        "note_dur_log_std": nd_std,
    }
    _write_json(outdir / STATS_FILE, stats)
    _write_json(outdir / INDEX_FILE, index)
    return {
        "cache_dir": str(outdir),
        "processed": [e["id"] for e in index],
        "skipped": failures,
    }


class CachedCorpus:
    """Reader over a prepared feature cache."""

    def __init__(self, cache_dir, cfg: PipelineConfig, force: bool = False):
        self.cache_dir = Path(cache_dir)
        stats_path = self.cache_dir / STATS_FILE
        index_path = self.cache_dir / INDEX_FILE
        if not stats_path.exists() or not index_path.exists():
            raise MissingArtifactError(
                f"{cache_dir} is not a prepared feature cache (run prepare first)"
            )
        self.stats = json.loads(stats_path.read_text())
        self.index = json.loads(index_path.read_text())
        if self.stats["config_hash"] != cfg.config_hash() and not force:
            raise ValidationError(
                "feature cache was prepared under a different config; re-run "
                "prepare or pass force"
            )
        self.vocab = PhonemeVocabulary.from_json(self.stats["vocab"])

    def entries(self, style: str | None = None) -> list[dict]:
        if style is None:
            return list(self.index)
        return [e for e in self.index if e["style"] == style]

    def load(self, utt_id: str) -> dict:
        entry = next((e for e in self.index if e["id"] == utt_id), None)
        if entry is None:
            raise MissingArtifactError(f"utterance {utt_id!r} not in cache index")
        mel = read_feature_file(self.cache_dir / f"{utt_id}.mel.bin")
        lf0 = read_feature_file(self.cache_dir / f"{utt_id}.lf0.bin")[:, 0]
        frames = read_feature_file(self.cache_dir / f"{utt_id}.frames.bin")
        phon = read_feature_file(self.cache_dir / f"{utt_id}.phon.bin")
        return {
            "mel": mel,
            "lf0": lf0,
            "frames": frames,
            "phon": phon,
            "style": entry["style"],
            "style_id": style_id(entry["style"]),
            "speaker_idx": self.stats["speaker_map"][entry["speaker"]],
        }

    def am_matrix(self, data: dict) -> np.ndarray:
        """Acoustic-model inputs with the cached (real) LF0 column."""
        frames = data["frames"]
        t = frames.shape[0]
        return np.concatenate(
            [
                frames[:, 0:1],  # phoneme_id
                frames[:, 3:4],  # frame_pos
                np.full((t, 1), data["speaker_idx"], dtype=np.float32),
                np.full((t, 1), data["style_id"], dtype=np.float32),
                data["lf0"][:, None].astype(np.float32),
            ],
            axis=1,
        )


def _pad_batch(arrays: list[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack variable-length (L, D) arrays into (B, L, D) plus a bool mask."""
    longest = max(a.shape[0] for a in arrays)
    width = arrays[0].shape[1]
    out = np.zeros((len(arrays), longest, width), dtype=np.float32)
    mask = np.zeros((len(arrays), longest), dtype=bool)
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
        mask[i, : a.shape[0]] = True
    return torch.from_numpy(out), torch.from_numpy(mask)


def _pad_targets(arrays: list[np.ndarray], longest: int) -> torch.Tensor:
    out = np.zeros((len(arrays), longest), dtype=np.float32)
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
    return torch.from_numpy(out)


def _batch_iter(n_items: int, batch_size: int, rng: np.random.Generator):
    """Endless shuffled index batches."""
    while True:
        order = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) > 0:
                yield chunk


def _checkpoint_target(out_path, default_name: str) -> Path:
    """Resolve a trainer output path; directories get the canonical filename."""
    out_path = Path(out_path)
    if out_path.is_dir():
        return out_path / default_name
    return out_path


def _make_scheduler(optimizer, cfg: PipelineConfig, steps: int):
    if not cfg.training.cosine_lr_decay:
        return None
    return torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=steps, eta_min=0.1 * cfg.training.learning_rate
    )


def train_duration_model(
    cache_dir,
    cfg: PipelineConfig,
    out_path,
    seed: int = 0,
    steps: int | None = None,
    log=None,
) -> Path:
    out_path = _checkpoint_target(out_path, "dm.pt")
    corpus = CachedCorpus(cache_dir, cfg)
    entries = corpus.entries("singing")
    if not entries:
        raise ValidationError("duration model needs singing utterances with scores")
    items = [corpus.load(e["id"])["phon"] for e in entries]
    feats = [m[:, :3] for m in items]
    targets = [m[:, 3] for m in items]

    steps = cfg.training.dm_steps if steps is None else steps
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = DurationModel(len(corpus.vocab), cfg.duration_model, corpus.stats)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.training.learning_rate)
    scheduler = _make_scheduler(optimizer, cfg, steps)
    batches = _batch_iter(len(items), cfg.training.batch_size, rng)
    for step in range(1, steps + 1):
        idx = next(batches)
        x, mask = _pad_batch([feats[i] for i in idx])
        y = _pad_targets([targets[i] for i in idx], x.shape[1])
        loss = dm_train_step(model, {"features": x, "targets": y, "mask": mask}, optimizer)
        if scheduler is not None:
            scheduler.step()
        if log and (step % cfg.training.log_every == 0 or step == 1):
            log(f"dm step {step}/{steps} nll {loss:.4f}")
    return save_checkpoint(
        out_path, model, "dm", cfg, corpus.vocab, corpus.stats,
        extra={"steps": steps, "seed": seed},
    )


def train_lf0_model(
    cache_dir,
    cfg: PipelineConfig,
    out_path,
    seed: int = 0,
    steps: int | None = None,
    log=None,
) -> Path:
    out_path = _checkpoint_target(out_path, "lf0.pt")
    corpus = CachedCorpus(cache_dir, cfg)
    entries = corpus.entries("singing")
    if not entries:
        raise ValidationError("LF0 model needs singing utterances with scores")
    loaded = [corpus.load(e["id"]) for e in entries]
    feats = [d["frames"] for d in loaded]
    targets = [d["lf0"] for d in loaded]

    steps = cfg.training.lf0_steps if steps is None else steps
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = Lf0Model(len(corpus.vocab), cfg.lf0_model, corpus.stats)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.training.learning_rate)
    scheduler = _make_scheduler(optimizer, cfg, steps)
    batches = _batch_iter(len(feats), cfg.training.batch_size, rng)
    for step in range(1, steps + 1):
        idx = next(batches)
        x, mask = _pad_batch([feats[i] for i in idx])
        y = _pad_targets([targets[i] for i in idx], x.shape[1])
        loss = lf0_train_step(model, {"features": x, "targets": y, "mask": mask}, optimizer)
        if scheduler is not None:
            scheduler.step()
        if log and (step % cfg.training.log_every == 0 or step == 1):
            log(f"lf0 step {step}/{steps} nll {loss:.4f}")
    return save_checkpoint(
        out_path, model, "lf0", cfg, corpus.vocab, corpus.stats,
        extra={"steps": steps, "seed": seed},
    )


def train_acoustic_model(
    cache_dir,
    cfg: PipelineConfig,
    out_path,
    seed: int = 0,
    steps: int | None = None,
    adv_weight: float | None = None,
    log=None,
) -> Path:
    out_path = _checkpoint_target(out_path, "am.pt")
    corpus = CachedCorpus(cache_dir, cfg)
    entries = corpus.entries()
    loaded = [corpus.load(e["id"]) for e in entries]
    inputs = [corpus.am_matrix(d) for d in loaded]
    mel_mean = np.array(corpus.stats["mel_mean"], dtype=np.float32)
    mel_std = np.array(corpus.stats["mel_std"], dtype=np.float32)
    mels = [(d["mel"] - mel_mean) / mel_std for d in loaded]
    styles = np.array([d["style_id"] for d in loaded], dtype=np.int64)

    steps = cfg.training.am_steps if steps is None else steps
    adv_weight = cfg.training.adv_weight if adv_weight is None else adv_weight
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = AcousticModel(
        vocab_size=len(corpus.vocab),
        n_speakers=corpus.stats["n_speakers"],
        cfg=cfg.acoustic_model,
        stats=corpus.stats,
        n_mels=cfg.audio.n_mels,
        grl_scale=cfg.training.grl_scale,
        l2_weight=cfg.training.l2_weight,
    )
    inner_k = cfg.training.adv_inner_steps if adv_weight > 0 else 0
    if inner_k > 0:
        cls_params = list(model.style_classifier.parameters())
        cls_ids = {id(p) for p in cls_params}
        feat_params = [p for p in model.parameters() if id(p) not in cls_ids]
        optimizer = torch.optim.Adam(feat_params, lr=cfg.training.learning_rate)
        cls_optimizer = torch.optim.Adam(cls_params, lr=cfg.training.learning_rate)
    else:
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.training.learning_rate)
        cls_optimizer = None
    scheduler = _make_scheduler(optimizer, cfg, steps)
    batches = _batch_iter(len(inputs), cfg.training.batch_size, rng)
    model.train()
    for step in range(1, steps + 1):
        idx = next(batches)
        x, mask = _pad_batch([inputs[i] for i in idx])
        tgt, _ = _pad_batch([mels[i] for i in idx])
        style_t = torch.from_numpy(styles[idx])
        if cls_optimizer is not None:
            # Refit the style classifier on frozen latents so the outer
            # reversed gradient points at genuinely less separable features.
            with torch.no_grad():
                frozen = model.forward_teacher(
                    x, shift_frames(tgt), dropout_active=True
                )["latent"]
            keep = mask.reshape(-1).bool()
            flat_styles = (
                style_t.unsqueeze(1).expand(frozen.shape[:2]).reshape(-1)[keep]
            )
            for _ in range(inner_k):
                logits = model.style_classifier(frozen)
                ce = F.cross_entropy(
                    logits.reshape(-1, logits.shape[-1])[keep], flat_styles
                )
                cls_optimizer.zero_grad()
                ce.backward()
                cls_optimizer.step()
        optimizer.zero_grad()
        out = model.forward_teacher(x, shift_frames(tgt), dropout_active=True)
        breakdown = am_loss(
            out, tgt, style_t, adv_weight, l2_term=model.l2_term(), mask=mask
        )
        breakdown.total.backward()
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        if log and (step % cfg.training.log_every == 0 or step == 1):
            parts = breakdown.as_floats()
            log(
                f"am step {step}/{steps} total {parts['total']:.4f} "
                f"pre {parts['recon_pre']:.4f} post {parts['recon_post']:.4f} "
                f"adv {parts['adv_ce']:.4f}"
            )
    return save_checkpoint(
        out_path, model, "am", cfg, corpus.vocab, corpus.stats,
        extra={
            "steps": steps,
            "seed": seed,
            "n_speakers": corpus.stats["n_speakers"],
            "speaker_map": corpus.stats["speaker_map"],
            "adv_weight": adv_weight,
            "grl_scale": cfg.training.grl_scale,
            "adv_inner_steps": inner_k,
            "l2_weight": cfg.training.l2_weight,
        },
    )


@dataclass
class SynthesisJob:
    """Everything one synthesis run needs.

    duration_mode and lf0_mode choose between model predictions and
    ground truth taken from an interval file / an external F0 source,
    so each stage can be bypassed independently.
    """

    score_path: Path
    speaker: str
    checkpoint_dir: Path
    output_dir: Path
    style: str = "singing"
    duration_mode: str = "predicted"  # or "real"
    lf0_mode: str = "predicted"  # or "real"
    intervals_path: Path | None = None
    f0_path: Path | None = None
    reference_audio: Path | None = None
    seed: int = 0
    force: bool = False
    dropout_at_inference: bool | None = None  # None takes the config default


@dataclass
class SynthResult:
    wav_path: Path
    mel_path: Path
    f0_path: Path
    durations_path: Path
    figure_path: Path
    job_path: Path
    durations: np.ndarray
    lf0: np.ndarray
    mel: np.ndarray
    audio: np.ndarray


def synth(job: SynthesisJob, cfg: PipelineConfig) -> SynthResult:
    """Run the full synthesis chain and dump every intermediate.

    Outputs land in job.output_dir named after the score file: wav,
    mel matrix, per-frame F0 text, per-phoneme duration TSV, an
    overview figure and a JSON echo of the job.
    """
    if job.duration_mode not in ("predicted", "real"):
        raise ValidationError(f"unknown duration mode {job.duration_mode!r}")
    if job.lf0_mode not in ("predicted", "real"):
        raise ValidationError(f"unknown LF0 mode {job.lf0_mode!r}")
    ckpt_dir = Path(job.checkpoint_dir)
    period = cfg.audio.frame_period

    am, am_meta = load_acoustic_model(ckpt_dir / "am.pt", cfg, force=job.force)
    metas = [am_meta]
    vocab = PhonemeVocabulary.from_json(am_meta["vocab"])
    speaker_map = am_meta["speaker_map"]

    entries = parse_score(job.score_path)
    phoneme_id = np.array([vocab.id(e.phoneme) for e in entries], dtype=np.int64)
    pitch_id = np.array([pitch_to_midi(e.pitch) for e in entries], dtype=np.int64)
    slur = np.array([int(e.slur) for e in entries], dtype=np.int64)
    note_dur = np.array([e.note_dur for e in entries], dtype=np.float32)

    if job.duration_mode == "real":
        if job.intervals_path is None:
            raise ValidationError("real duration mode needs an interval file")
        intervals = parse_intervals(job.intervals_path, period)
        got = [iv.phoneme for iv in intervals]
        want = [e.phoneme for e in entries]
        if got != want:
            raise ValidationError(
                f"interval phonemes {got} do not match score phonemes {want}"
            )
        durations = intervals_to_durations(intervals, period)
    else:
        dm, dm_meta = load_duration_model(ckpt_dir / "dm.pt", cfg, force=job.force)
        metas.append(dm_meta)
        feats = np.stack(
            [phoneme_id.astype(np.float32), slur.astype(np.float32), note_dur], axis=1
        )
        durations = dm.predict(feats, seed=job.seed, mode="stochastic")

    frames = expand_to_frames(phoneme_id, pitch_id, slur, durations)
    t = len(frames)

    if job.lf0_mode == "real":
        if job.f0_path is not None:
            f0, voiced = read_f0_file(job.f0_path)
            lf0 = lf0_from_f0(f0, voiced).values
        elif job.reference_audio is not None:
            audio_ref = load_wav(job.reference_audio, cfg.audio)
            lf0 = extract_lf0(audio_ref, cfg.audio.sample_rate, cfg.audio).values
        else:
            raise ValidationError(
                "real LF0 mode needs an F0 file or a reference audio path"
            )
        if lf0.shape[0] != t:
            raise ValidationError(
                f"real LF0 has {lf0.shape[0]} frames but the expansion needs {t}"
            )
    else:
        lf0_model, lf0_meta = load_lf0_model(ckpt_dir / "lf0.pt", cfg, force=job.force)
        metas.append(lf0_meta)
        lf0 = lf0_model.predict(lf0_model_matrix(frames), mode="mean_of_max")
        width = cfg.lf0_model.median_smooth_width
        lf0 = median_smooth(lf0, width)
    check_cross_consistency(metas, force=job.force)

    if str(job.speaker) not in speaker_map:
        raise ValidationError(
            f"unknown speaker {job.speaker!r}; checkpoint knows {sorted(speaker_map)}"
        )
    matrix = acoustic_model_matrix(
        frames, speaker_map[str(job.speaker)], style_id(job.style), lf0
    )

    torch.manual_seed(job.seed)
    dropout = (
        cfg.training.prenet_dropout_at_inference
        if job.dropout_at_inference is None
        else job.dropout_at_inference
    )
    mel = am.synthesize(matrix, dropout_active=dropout)
    melspec = MelSpectrogram(mel, period, cfg.audio.sample_rate)
    audio = invert_mel(melspec, cfg.audio, seed=job.seed)

    outdir = Path(job.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = Path(job.score_path).stem.replace(".score", "")
    wav_path = outdir / f"{stem}.wav"
    save_wav(wav_path, audio, cfg.audio)
    mel_path = outdir / f"{stem}.mel.bin"
    write_feature_file(mel_path, mel)
    f0_path = outdir / f"{stem}.f0.txt"
    write_f0_file(f0_path, np.exp(lf0.astype(np.float64)))
    durations_path = outdir / f"{stem}.durations.tsv"
    with open(durations_path, "w") as f:
        for e, d in zip(entries, durations):
            f.write(f"{e.phoneme}\t{int(d)}\n")
    figure_path = plots.save_synthesis_overview(
        outdir / f"{stem}.overview.png", mel, np.exp(lf0.astype(np.float64)), period
    )
    job_path = outdir / f"{stem}.job.json"
    _write_json(
        job_path,
        {
            "score": str(job.score_path),
            "speaker": str(job.speaker),
            "style": job.style,
            "duration_mode": job.duration_mode,
            "lf0_mode": job.lf0_mode,
            "seed": job.seed,
            "config_hash": cfg.config_hash(),
            "n_frames": int(t),
            "n_samples": int(audio.shape[0]),
        },
    )
    return SynthResult(
        wav_path=wav_path,
        mel_path=mel_path,
        f0_path=f0_path,
        durations_path=durations_path,
        figure_path=figure_path,
        job_path=job_path,
        durations=durations,
        lf0=lf0,
        mel=mel,
        audio=audio,
    )


@dataclass
class EvalModels:
    """The three models evaluate() drives, by duck type.

    Stand-ins only need dm.predict(features, seed, mode),
    lf0.predict(matrix, mode), am.teacher_mel(matrix, mel) and
    am.synthesize(matrix, dropout_active).
    """

    dm: object
    lf0: object
    am: object


def load_eval_models(checkpoint_dir, cfg: PipelineConfig, force: bool = False):
    ckpt_dir = Path(checkpoint_dir)
    dm, dm_meta = load_duration_model(ckpt_dir / "dm.pt", cfg, force=force)
    lf0_model, lf0_meta = load_lf0_model(ckpt_dir / "lf0.pt", cfg, force=force)
    am, am_meta = load_acoustic_model(ckpt_dir / "am.pt", cfg, force=force)
    check_cross_consistency([dm_meta, lf0_meta, am_meta], force=force)
    return EvalModels(dm=dm, lf0=lf0_model, am=am), [dm_meta, lf0_meta, am_meta]


_NO_SCORE_REASON = "speaking utterances carry no score-derived targets"


def evaluate(
    cache_dir,
    cfg: PipelineConfig,
    models: EvalModels,
    outdir,
    utt_ids: list[str] | None = None,
    max_plots: int = 4,
    seed: int = 0,
) -> dict:
    """Score the models against a prepared cache and write the report.

    Produces report.json, metrics.tsv (one row per utterance) and
    mel/LF0 comparison figures for the first few singing utterances.
    Every report field is always present; metrics that cannot be
    computed are null with a reason beside them.
    """
    from .duration import duration_accuracy
    from .lf0 import lf0_metrics

    corpus = CachedCorpus(cache_dir, cfg)
    entries = corpus.entries()
    if utt_ids is not None:
        known = {e["id"] for e in entries}
        missing = [u for u in utt_ids if u not in known]
        if missing:
            raise ValidationError(f"requested utterances not in cache: {missing}")
        entries = [e for e in entries if e["id"] in set(utt_ids)]
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mel_mean = np.array(corpus.stats["mel_mean"], dtype=np.float64)
    mel_std = np.array(corpus.stats["mel_std"], dtype=np.float64)

    def norm(mel):
        return (mel.astype(np.float64) - mel_mean) / mel_std

    rows = []
    figures = []
    plotted = 0
    for i, entry in enumerate(entries):
        data = corpus.load(entry["id"])
        row = {
            "id": entry["id"],
            "style": entry["style"],
            "duration_accuracy": None,
            "duration_error": None,
            "lf0_rmse": None,
            "lf0_pcc": None,
            "lf0_error": None,
            "mel_teacher_mse": None,
            "mel_free_mse": None,
            "mel_teacher_mse_norm": None,
            "mel_free_mse_norm": None,
        }
        if entry["style"] == "singing":
            phon = data["phon"]
            pred_durs = models.dm.predict(phon[:, :3], seed=seed + i, mode="stochastic")
            row["duration_accuracy"] = duration_accuracy(pred_durs, phon[:, 3])
            pred_lf0 = models.lf0.predict(data["frames"], mode="mean_of_max")
            m = lf0_metrics(pred_lf0, data["lf0"])
            row["lf0_rmse"], row["lf0_pcc"], row["lf0_error"] = (
                m["rmse"], m["pcc"], m["pcc_error"],
            )
        else:
            row["duration_error"] = _NO_SCORE_REASON
            row["lf0_error"] = _NO_SCORE_REASON

        matrix = corpus.am_matrix(data)
        teacher = models.am.teacher_mel(matrix, data["mel"])
        free = models.am.synthesize(matrix, dropout_active=False)
        tgt = data["mel"].astype(np.float64)
        tgt_n = norm(data["mel"])
        row["mel_teacher_mse"] = float(np.mean((teacher.astype(np.float64) - tgt) ** 2))
        row["mel_free_mse"] = float(np.mean((free.astype(np.float64) - tgt) ** 2))
        row["mel_teacher_mse_norm"] = float(np.mean((norm(teacher) - tgt_n) ** 2))
        row["mel_free_mse_norm"] = float(np.mean((norm(free) - tgt_n) ** 2))

        if entry["style"] == "singing" and plotted < max_plots:
            fig1 = plots.save_lf0_comparison(
                outdir / f"lf0_{entry['id']}.png",
                np.exp(data["lf0"].astype(np.float64)),
                np.exp(pred_lf0.astype(np.float64)),
                cfg.audio.frame_period,
            )
            fig2 = plots.save_mel_comparison(
                outdir / f"mel_{entry['id']}.png", data["mel"], free,
                cfg.audio.frame_period,
            )
            figures.extend([str(fig1), str(fig2)])
            plotted += 1
        rows.append(row)

    def agg(key):
        values = [r[key] for r in rows if r[key] is not None]
        return float(np.mean(values)) if values else None

    report = {
        "config_hash": cfg.config_hash(),
        "n_utterances": len(rows),
        "per_utterance": rows,
        "aggregate": {
            "duration_accuracy": agg("duration_accuracy"),
            "lf0_rmse": agg("lf0_rmse"),
            "lf0_pcc": agg("lf0_pcc"),
            "mel_teacher_mse": agg("mel_teacher_mse"),
            "mel_free_mse": agg("mel_free_mse"),
            "mel_teacher_mse_norm": agg("mel_teacher_mse_norm"),
            "mel_free_mse_norm": agg("mel_free_mse_norm"),
        },
        "figures": figures,
    }
    _write_json(outdir / "report.json", report)

    columns = [
        "id", "style", "duration_accuracy", "lf0_rmse", "lf0_pcc",
        "mel_teacher_mse", "mel_free_mse",
    ]
    with open(outdir / "metrics.tsv", "w") as f:
        f.write("\t".join(columns) + "\n")
        for row in rows:
            cells = [
                "" if row[c] is None else (row[c] if isinstance(row[c], str) else f"{row[c]:.6f}")
                for c in columns
            ]
            f.write("\t".join(cells) + "\n")
    return report
