"""Score, transcript and alignment parsing.

A corpus mixes two utterance styles: "singing" items carry a musical
score (phoneme, pitch, duration, slur), "speaking" items carry only a
phoneme transcript. Both come with phoneme interval files giving the
aligned start/end times. Everything is normalized into one Utterance
type so downstream feature assembly has a single code path.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError, MissingArtifactError

STYLE_SINGING = "singing"
STYLE_SPEAKING = "speaking"
STYLES = (STYLE_SINGING, STYLE_SPEAKING)
# Fixed style-tag ids shared by training and inference.
STYLE_IDS = {STYLE_SINGING: 0, STYLE_SPEAKING: 1}

REST = "REST"
REST_MIDI = 0  # distinguished id, outside the playable range below
MIDI_MIN = 21
MIDI_MAX = 108

PAD_TOKEN = "<pad>"
SIL_TOKEN = "<sil>"

_NOTE_OFFSETS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_PITCH_RE = re.compile(r"^([A-G])([#b]?)(-?\d+)$")


def pitch_to_midi(pitch: str) -> int:
    """Map scientific pitch notation to a MIDI note number.

    "C4" -> 60, "A4" -> 69. The token "REST" maps to the reserved id
    REST_MIDI which is not a note number. Anything else outside
    [MIDI_MIN, MIDI_MAX] or unparseable raises ParseError.
    """
    if pitch == REST:
        return REST_MIDI
    m = _PITCH_RE.match(pitch)
    if m is None:
        raise ParseError(f"unknown note name {pitch!r}")
    letter, accidental, octave = m.groups()
    midi = 12 * (int(octave) + 1) + _NOTE_OFFSETS[letter]
    if accidental == "#":
        midi += 1
    elif accidental == "b":
        midi -= 1
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise ParseError(f"pitch {pitch!r} (MIDI {midi}) outside [{MIDI_MIN}, {MIDI_MAX}]")
    return midi


def midi_to_hz(midi: int) -> float:
    """Equal-tempered frequency of a MIDI note, A4 = 440 Hz."""
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


@dataclass
class ScoreEntry:
    """One phoneme-level score row."""

    phoneme: str
    pitch: str  # scientific notation or REST
    note_dur: float  # seconds
    slur: bool = False


@dataclass
class IntervalEntry:
    """One aligned phoneme interval, times in seconds."""

    phoneme: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Utterance:
    """A corpus item normalized across singing and speaking styles."""

    utt_id: str
    style: str
    speaker: str
    entries: list[ScoreEntry]
    intervals: list[IntervalEntry]
    audio_path: Path | None = None

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValidationError(f"{self.utt_id}: unknown style {self.style!r}")
        got = [iv.phoneme for iv in self.intervals]
        want = [e.phoneme for e in self.entries]
        if got != want:
            raise ValidationError(
                f"{self.utt_id}: phoneme sequence mismatch between score/transcript "
                f"{want} and intervals {got}"
            )


_BPM_RE = re.compile(r"^#BPM\s+(\S+)\s*$")


def parse_score(path) -> list[ScoreEntry]:
    """Parse a score TSV: phoneme, pitch, duration, slur per line.

    An optional first header line "#BPM <float>" switches the duration
    column from seconds to beat counts (seconds = 60 / BPM * beats).
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"score file not found: {path}")
    entries = []
    beat_seconds = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _BPM_RE.match(line)
                if m is None or entries or beat_seconds is not None:
                    raise ParseError(f"{path}:{lineno}: unexpected header {line!r}")
                try:
                    bpm = float(m.group(1))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad BPM value {m.group(1)!r}")
                if bpm <= 0:
                    raise ParseError(f"{path}:{lineno}: BPM must be positive, got {bpm}")
                beat_seconds = 60.0 / bpm
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            phoneme, pitch, dur_text, slur_text = fields
            try:
                dur = float(dur_text)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad duration {dur_text!r}")
            if beat_seconds is not None:
                dur *= beat_seconds
            if not dur > 0:
                raise ParseError(f"{path}:{lineno}: duration must be positive, got {dur}")
            if slur_text not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: slur must be 0 or 1, got {slur_text!r}")
            try:
                pitch_to_midi(pitch)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}")
            entries.append(ScoreEntry(phoneme, pitch, dur, slur_text == "1"))
    return entries


def write_score(entries: list[ScoreEntry], path) -> None:
    """Serialize score entries to TSV with round-trippable durations."""
    with open(path, "w") as f:
        for e in entries:
            f.write(f"{e.phoneme}\t{e.pitch}\t{e.note_dur!r}\t{int(e.slur)}\n")


def parse_intervals(path, frame_period: float = 0.0125) -> list[IntervalEntry]:
    """Parse an interval TSV: phoneme, start, end per line.

    Intervals must be in order, non-empty, and contiguous: any overlap
    or gap larger than one frame period is a validation error.
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"interval file not found: {path}")
    intervals = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            phoneme, start_text, end_text = fields
            try:
                start, end = float(start_text), float(end_text)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad times {start_text!r} {end_text!r}")
            if end <= start:
                raise ParseError(f"{path}:{lineno}: end {end} not after start {start}")
            if start < 0:
                raise ParseError(f"{path}:{lineno}: negative start {start}")
            if intervals and abs(start - intervals[-1].end) > frame_period:
                raise ValidationError(
                    f"{path}:{lineno}: interval starts at {start} but previous ends at "
                    f"{intervals[-1].end}; gap/overlap exceeds one frame period"
                )
            intervals.append(IntervalEntry(phoneme, start, end))
    return intervals


def write_intervals(intervals: list[IntervalEntry], path) -> None:
    """Serialize intervals to TSV with 6-decimal second precision."""
    with open(path, "w") as f:
        for iv in intervals:
            f.write(f"{iv.phoneme}\t{iv.start:.6f}\t{iv.end:.6f}\n")


def parse_transcript(path) -> list[str]:
    """Read a whitespace-separated phoneme transcript."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"transcript file not found: {path}")
    return path.read_text().split()


class PhonemeVocabulary:
    """Bidirectional phoneme/id map with reserved ids.

    Id 0 is padding and id 1 is the silence/rest token; real phonemes
    get dense ids from 2 upward. Both styles share one table.
    """

    def __init__(self, tokens):
        tokens = list(tokens)
        seen = set()
        for t in tokens:
            if t in (PAD_TOKEN, SIL_TOKEN):
                raise ValidationError(f"token {t!r} collides with a reserved id")
            if t in seen:
                raise ValidationError(f"duplicate token {t!r}")
            seen.add(t)
        self._tokens = [PAD_TOKEN, SIL_TOKEN, *tokens]
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, PhonemeVocabulary) and self._tokens == other._tokens

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def sil_id(self) -> int:
        return 1

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise ValidationError(f"phoneme {token!r} not in vocabulary")

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise ValidationError(f"phoneme id {idx} out of range")
        return self._tokens[idx]

    def tokens(self) -> list[str]:
        """All tokens including the reserved ones, in id order."""
        return list(self._tokens)

    def to_json(self) -> list[str]:
        return self._tokens[2:]

    @classmethod
    def from_json(cls, tokens) -> "PhonemeVocabulary":
        return cls(tokens)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self._tokens).encode()).hexdigest()


def build_vocabulary(utterances) -> PhonemeVocabulary:
    """Collect every phoneme over all utterances into one shared table.

    Token order is sorted for determinism, so the same corpus always
    yields the same ids.
    """
    tokens = set()
    for utt in utterances:
        tokens.update(e.phoneme for e in utt.entries)
    return PhonemeVocabulary(sorted(tokens))


MANIFEST_KEYS = ("id", "style", "speaker", "score_path", "interval_path", "audio_path")


def load_manifest(path) -> list[dict]:
    """Read a JSON-lines corpus manifest, one record per utterance."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"manifest not found: {path}")
    records = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: bad JSON record: {exc}")
            missing = [k for k in MANIFEST_KEYS if k not in rec]
            if missing:
                raise ParseError(f"{path}:{lineno}: record missing keys {missing}")
            records.append(rec)
    return records


def write_manifest(records: list[dict], path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_utterance(record: dict, base_dir, frame_period: float = 0.0125) -> Utterance:
    """Build an Utterance from one manifest record.

    Singing items parse their score; speaking items take phonemes from
    the transcript (or, when score_path is null, from the interval file)
    and are normalized to pitch=REST, slur=false, note_dur equal to the
    aligned interval duration. Phoneme mismatches between the two files
    are hard errors.
    """
    base_dir = Path(base_dir)
    style = record["style"]
    utt_id = record["id"]
    if style not in STYLES:
        raise ValidationError(f"{utt_id}: unknown style {style!r}")
    intervals = parse_intervals(base_dir / record["interval_path"], frame_period)
    if style == STYLE_SINGING:
        entries = parse_score(base_dir / record["score_path"])
    else:
        if record["score_path"]:
            phonemes = parse_transcript(base_dir / record["score_path"])
        else:
            phonemes = [iv.phoneme for iv in intervals]
        if len(phonemes) != len(intervals):
            raise ValidationError(
                f"{utt_id}: transcript has {len(phonemes)} phonemes but interval "
                f"file has {len(intervals)}"
            )
        entries = [
            ScoreEntry(p, REST, iv.duration, False)
            for p, iv in zip(phonemes, intervals)
        ]
    audio_path = base_dir / record["audio_path"] if record["audio_path"] else None
    return Utterance(
        utt_id=utt_id,
        style=style,
        speaker=str(record["speaker"]),
        entries=entries,
        intervals=intervals,
        audio_path=audio_path,
    )
