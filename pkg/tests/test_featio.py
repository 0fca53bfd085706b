"""Binary feature file and F0 text file round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from singsynth.errors import ParseError, ValidationError
from singsynth.featio import (
    UNVOICED,
    read_f0_file,
    read_feature_file,
    write_f0_file,
    write_feature_file,
)


class TestFeatureFiles:
    def test_roundtrip_2d(self, tmp_path):
        data = np.random.default_rng(0).normal(size=(17, 80)).astype(np.float32)
        path = tmp_path / "x.bin"
        write_feature_file(path, data)
        back = read_feature_file(path)
        np.testing.assert_array_equal(back, data)
        assert back.dtype == np.float32

    def test_1d_stored_as_single_column(self, tmp_path):
        data = np.arange(5, dtype=np.float32)
        path = tmp_path / "x.bin"
        write_feature_file(path, data)
        assert read_feature_file(path).shape == (5, 1)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(ParseError):
            read_feature_file(path)

    def test_truncated_payload_rejected(self, tmp_path):
        data = np.ones((4, 3), dtype=np.float32)
        path = tmp_path / "x.bin"
        write_feature_file(path, data)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(ParseError):
            read_feature_file(path)

    @given(
        hnp.arrays(
            dtype=np.float32,
            shape=hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=20),
            elements=st.floats(-1e6, 1e6, width=32),
        )
    )
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_any_matrix(self, tmp_path_factory, data):
        path = tmp_path_factory.mktemp("feat") / "x.bin"
        write_feature_file(path, data)
        np.testing.assert_array_equal(read_feature_file(path), data)


class TestF0Files:
    def test_roundtrip_with_unvoiced(self, tmp_path):
        f0 = np.array([220.0, UNVOICED, 247.5, UNVOICED], dtype=np.float64)
        path = tmp_path / "f0.txt"
        write_f0_file(path, f0, voiced_mask=f0 > 0)
        back, voiced = read_f0_file(path)
        np.testing.assert_allclose(back[voiced], [220.0, 247.5], atol=1e-6)
        np.testing.assert_array_equal(voiced, [True, False, True, False])

    def test_nonpositive_value_rejected(self, tmp_path):
        path = tmp_path / "f0.txt"
        path.write_text("220.0\n0.0\n")
        with pytest.raises(ParseError):
            read_f0_file(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "f0.txt"
        path.write_text("220.0\nhello\n")
        with pytest.raises(ParseError):
            read_f0_file(path)
