"""Shared fixtures.

The small corpus here (4 singing + 4 speaking utterances) backs the
unit tests; the acceptance module builds its own full-size one. Both
come from the same generator with fixed seeds, so everything in the
suite is reproducible from a clean checkout.
"""

import shutil
from pathlib import Path

import pytest

from singsynth.config import load_config
from singsynth.pipeline import prepare
from singsynth.toydata import make_toy_corpus

TOY_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "toy.json"


@pytest.fixture(scope="session")
def toy_cfg():
    return load_config(TOY_CONFIG)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def small_corpus(toy_cfg, tmp_path_factory):
    """4+4 utterance corpus shared by the unit tests (read-only)."""
    root = tmp_path_factory.mktemp("small_corpus")
    manifest = make_toy_corpus(root, toy_cfg, n_singing=4, n_speaking=4, seed=7)
    return manifest


@pytest.fixture(scope="session")
def small_cache(toy_cfg, small_corpus, tmp_path_factory):
    """Prepared feature cache over the small corpus (read-only)."""
    outdir = tmp_path_factory.mktemp("small_cache")
    prepare(small_corpus, toy_cfg, outdir)
    return outdir


@pytest.fixture()
def scratch_corpus(toy_cfg, small_corpus, tmp_path):
    """Private mutable copy of the small corpus for tests that edit files."""
    dst = tmp_path / "corpus"
    shutil.copytree(small_corpus.parent, dst)
    return dst / "manifest.jsonl"


# The acceptance module registers one entry per criterion here; a verdict
# line per entry is printed after the run so the result survives pytest's
# output capture. Entries: number -> (label, passed, detail).
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        label, passed, detail = ACCEPTANCE_RESULTS[number]
        verdict = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"[{verdict}] {number:2d}. {label}{suffix}")
