"""Checkpoint save/load round-trips and fail-closed guards."""

import dataclasses

import torch
import pytest

from singsynth.checkpoints import (
    check_cross_consistency,
    load_acoustic_model,
    load_duration_model,
    load_lf0_model,
    save_checkpoint,
    sidecar_path,
)
from singsynth.config import PipelineConfig, config_from_dict
from singsynth.corpus import IntervalEntry, ScoreEntry, Utterance, build_vocabulary
from singsynth.duration import DurationModel
from singsynth.errors import MissingArtifactError, ValidationError
from singsynth.lf0 import Lf0Model
from singsynth.acoustic import AcousticModel

from test_acoustic import TINY as TINY_AM
from test_duration import TINY as TINY_DM
from test_lf0 import TINY as TINY_LF0


def small_cfg():
    base = PipelineConfig()
    return dataclasses.replace(
        base, duration_model=TINY_DM, lf0_model=TINY_LF0, acoustic_model=TINY_AM
    )


def make_vocab():
    entries = [ScoreEntry(t, "C4", 0.1) for t in ("a", "i", "u")]
    intervals = [
        IntervalEntry(t, i * 0.1, (i + 1) * 0.1)
        for i, t in enumerate(("a", "i", "u"))
    ]
    return build_vocabulary(
        [Utterance("u0", "singing", "spk", entries, intervals)]
    )


DM_STATS = {
    "note_dur_log_mean": -1.5,
    "note_dur_log_std": 0.6,
    "dur_mean": 16.0,
    "dur_std": 6.0,
}
LF0_STATS = {"lf0_mean": 5.4, "lf0_std": 0.25}


def am_stats(n_mels):
    return {
        "mel_mean": [0.0] * n_mels,
        "mel_std": [1.0] * n_mels,
        "lf0_mean": 5.4,
        "lf0_std": 0.25,
    }


class TestRoundTrip:
    def test_duration_model(self, tmp_path):
        cfg = small_cfg()
        vocab = make_vocab()
        torch.manual_seed(0)
        model = DurationModel(len(vocab), cfg.duration_model, DM_STATS)
        path = save_checkpoint(tmp_path / "dm.pt", model, "dm", cfg, vocab, DM_STATS)
        assert sidecar_path(path).exists()

        loaded, meta = load_duration_model(path, cfg)
        assert meta["kind"] == "dm"
        assert meta["vocab_hash"] == vocab.hash()
        for (na, a), (nb, b) in zip(
            model.state_dict().items(), loaded.state_dict().items()
        ):
            assert na == nb
            assert torch.equal(a, b), na

    def test_lf0_model(self, tmp_path):
        cfg = small_cfg()
        vocab = make_vocab()
        torch.manual_seed(0)
        model = Lf0Model(len(vocab), cfg.lf0_model, LF0_STATS)
        path = save_checkpoint(tmp_path / "lf0.pt", model, "lf0", cfg, vocab, LF0_STATS)
        loaded, _ = load_lf0_model(path, cfg)
        model.eval()  # loaded side is eval; batch norm must match
        x = torch.zeros(1, 7, 4)
        x[..., 0] = 2
        a = model(x)
        b = loaded(x)
        assert torch.equal(a.weights, b.weights)
        assert torch.equal(a.means, b.means)

    def test_acoustic_model(self, tmp_path):
        cfg = small_cfg()
        vocab = make_vocab()
        stats = am_stats(cfg.audio.n_mels)
        torch.manual_seed(0)
        model = AcousticModel(len(vocab), 2, cfg.acoustic_model, stats,
                              n_mels=cfg.audio.n_mels)
        path = save_checkpoint(
            tmp_path / "am.pt", model, "am", cfg, vocab, stats,
            extra={"n_speakers": 2, "grl_scale": 1.0, "l2_weight": 1e-6},
        )
        loaded, meta = load_acoustic_model(path, cfg)
        assert meta["n_speakers"] == 2
        for (na, a), (nb, b) in zip(
            model.state_dict().items(), loaded.state_dict().items()
        ):
            assert torch.equal(a, b), na

    def test_loaded_model_in_eval_mode(self, tmp_path):
        cfg = small_cfg()
        vocab = make_vocab()
        model = DurationModel(len(vocab), cfg.duration_model, DM_STATS)
        model.train()
        path = save_checkpoint(tmp_path / "dm.pt", model, "dm", cfg, vocab, DM_STATS)
        loaded, _ = load_duration_model(path, cfg)
        assert not loaded.training


class TestFailClosed:
    def make_dm(self, tmp_path, cfg=None):
        cfg = cfg or small_cfg()
        vocab = make_vocab()
        model = DurationModel(len(vocab), cfg.duration_model, DM_STATS)
        return save_checkpoint(tmp_path / "dm.pt", model, "dm", cfg, vocab, DM_STATS)

    def test_missing_blob(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_duration_model(tmp_path / "nope.pt", small_cfg())

    def test_missing_sidecar(self, tmp_path):
        path = self.make_dm(tmp_path)
        sidecar_path(path).unlink()
        with pytest.raises(MissingArtifactError, match="sidecar"):
            load_duration_model(path, small_cfg())

    def test_kind_mismatch(self, tmp_path):
        path = self.make_dm(tmp_path)
        with pytest.raises(ValidationError, match="expected 'lf0'"):
            load_lf0_model(path, small_cfg())

    def test_unknown_kind_rejected_on_save(self, tmp_path):
        vocab = make_vocab()
        model = DurationModel(len(vocab), small_cfg().duration_model, DM_STATS)
        with pytest.raises(ValidationError, match="kind"):
            save_checkpoint(tmp_path / "x.pt", model, "vocoder",
                            small_cfg(), vocab, DM_STATS)

    def test_config_hash_mismatch_fails(self, tmp_path):
        path = self.make_dm(tmp_path)
        other = dataclasses.replace(
            small_cfg(),
            audio=dataclasses.replace(small_cfg().audio, n_mels=40),
        )
        with pytest.raises(ValidationError, match="config hash"):
            load_duration_model(path, other)

    def test_training_section_does_not_invalidate(self, tmp_path):
        path = self.make_dm(tmp_path)
        other = dataclasses.replace(
            small_cfg(),
            training=dataclasses.replace(small_cfg().training, dm_steps=5),
        )
        loaded, _ = load_duration_model(path, other)
        assert loaded is not None

    def test_force_overrides_hash_mismatch(self, tmp_path):
        path = self.make_dm(tmp_path)
        other = dataclasses.replace(
            small_cfg(),
            audio=dataclasses.replace(small_cfg().audio, n_mels=40),
        )
        loaded, _ = load_duration_model(path, other, force=True)
        assert loaded is not None


class TestCrossConsistency:
    def test_agreeing_metas_pass(self):
        metas = [
            {"config_hash": "h1", "vocab_hash": "v1"},
            {"config_hash": "h1", "vocab_hash": "v1"},
        ]
        check_cross_consistency(metas)

    def test_config_disagreement_fails(self):
        metas = [
            {"config_hash": "h1", "vocab_hash": "v1"},
            {"config_hash": "h2", "vocab_hash": "v1"},
        ]
        with pytest.raises(ValidationError, match="disagree"):
            check_cross_consistency(metas)

    def test_vocab_disagreement_fails(self):
        metas = [
            {"config_hash": "h1", "vocab_hash": "v1"},
            {"config_hash": "h1", "vocab_hash": "v2"},
        ]
        with pytest.raises(ValidationError, match="disagree"):
            check_cross_consistency(metas)

    def test_force_tolerates_disagreement(self):
        metas = [
            {"config_hash": "h1", "vocab_hash": "v1"},
            {"config_hash": "h2", "vocab_hash": "v2"},
        ]
        check_cross_consistency(metas, force=True)
