import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointsal.data import (
    DatasetManifest,
    PNMParseError,
    generate_dataset,
    generate_synthetic,
    read_image,
    read_mask,
    read_pnm,
    render_example,
    write_image,
    write_pnm,
)
from pointsal.seeding import rng_for


class TestImageIO:
    def test_zeros_round_trip(self, tmp_path):
        img = np.zeros((8, 8))
        write_image(tmp_path / "z.pgm", img)
        assert np.array_equal(read_image(tmp_path / "z.pgm"), img)

    def test_ones_round_trip(self, tmp_path):
        img = np.ones((8, 8, 3))
        write_image(tmp_path / "o.ppm", img)
        assert np.array_equal(read_image(tmp_path / "o.ppm"), img)

    def test_random_round_trip_quantization_bound(self, tmp_path):
        img = rng_for(0, "io").uniform(size=(13, 9, 3))
        write_image(tmp_path / "r.ppm", img)
        back = read_image(tmp_path / "r.ppm")
        assert np.max(np.abs(back - img)) <= 1.0 / 65535

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, tmp_path_factory, seed):
        tmp = tmp_path_factory.mktemp("io")
        img = rng_for(seed, "ioprop").uniform(size=(8, 8))
        write_image(tmp / "p.pgm", img)
        assert np.max(np.abs(read_image(tmp / "p.pgm") - img)) <= 1.0 / 65535

    def test_header_comments_supported(self, tmp_path):
        path = tmp_path / "c.pgm"
        payload = np.arange(4, dtype=">u2").tobytes()
        path.write_bytes(b"P5\n# a comment\n2 2\n65535\n" + payload)
        values, maxval = read_pnm(path)
        assert maxval == 65535
        assert values.shape == (2, 2)

    def test_bad_magic_reports_offset(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n....")
        with pytest.raises(PNMParseError) as err:
            read_pnm(path)
        assert err.value.offset == 0

    def test_truncated_payload_reports_offset(self, tmp_path):
        path = tmp_path / "trunc.pgm"
        path.write_bytes(b"P5\n4 4\n65535\n" + b"\x00" * 7)
        with pytest.raises(PNMParseError, match="truncated"):
            read_pnm(path)

    def test_8bit_maxval_supported(self, tmp_path):
        write_pnm(tmp_path / "t.pgm", np.array([[0, 128], [255, 0]]), maxval=255)
        values, maxval = read_pnm(tmp_path / "t.pgm")
        assert maxval == 255
        assert values[1, 0] == 255


class TestGenerator:
    def test_same_seed_bitwise_identical(self):
        a_img, a_mask = render_example(7, 3, 32)
        b_img, b_mask = render_example(7, 3, 32)
        assert np.array_equal(a_img, b_img)
        assert np.array_equal(a_mask, b_mask)

    def test_different_indices_differ(self):
        a_img, _ = render_example(7, 0, 32)
        b_img, _ = render_example(7, 1, 32)
        assert not np.array_equal(a_img, b_img)

    def test_count_zero_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic(0, 0, 32, tmp_path)

    def test_small_size_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic(0, 1, 8, tmp_path)

    def test_salient_fraction_bounds_over_generated_set(self, tmp_path):
        manifest = generate_synthetic(7, 50, 64, tmp_path, split="train")
        for entry in manifest.entries:
            frac = manifest.load_mask(entry).mean()
            assert 0.05 <= frac <= 0.5, entry.image_id

    def test_blob_values_brighter_than_background(self):
        img, mask = render_example(3, 1, 32)
        assert img[mask].mean() > img[~mask].mean() + 0.1

    def test_manifest_round_trip(self, tmp_path):
        manifest = generate_synthetic(5, 3, 32, tmp_path, split="test")
        loaded = DatasetManifest.load(tmp_path / "manifest_test.tsv")
        assert loaded.split == "test"
        assert loaded.generator_seed == 5
        assert loaded.image_ids() == manifest.image_ids()
        for entry in loaded.entries:
            img = loaded.load_image(entry)
            assert img.shape == (32, 32, 3)
            assert loaded.load_mask(entry).dtype == bool

    def test_two_splits_disjoint_streams(self, tmp_path):
        train, test = generate_dataset(tmp_path, 11, 2, 2, 32)
        t0 = train.load_image(train.entries[0])
        e0 = test.load_image(test.entries[0])
        assert not np.array_equal(t0, e0)
