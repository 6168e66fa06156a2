"""Square synthesis, PPM/PGM codecs, bilinear resize, manifest splits."""

import numpy as np
import numpy.testing as npt
import pytest

from pbgdnet.data import (DataError, DatasetManifest, ManifestDataset,
                          PnmFormatError, SquareConfig, compute_avg_pixels,
                          load_manifest, load_pgm, load_ppm, normalize_minmax,
                          read_pnm_size, render_square_sample, resize_bilinear,
                          save_pgm, save_ppm, split, synth_square)

from oracles import resize_bilinear_pointwise


def _bbox_of_rect(img: np.ndarray):
    """Recover the drawn rectangle by scanning for the non-background color.

    The background is the majority color by construction (the rectangle
    covers well under half the image).
    """
    c, h, w = img.shape
    flat = img.reshape(3, -1)
    colors, counts = np.unique(flat.T, axis=0, return_counts=True)
    bg = colors[counts.argmax()]
    mask = np.any(np.abs(img - bg[:, None, None]) > 1e-9, axis=0)
    ys, xs = np.nonzero(mask)
    return xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1


class TestSynthSquare:
    def test_deterministic_under_seed(self, tmp_path):
        cfg = SquareConfig(count=20, seed=5)
        m1 = synth_square(cfg, tmp_path / "a")
        m2 = synth_square(cfg, tmp_path / "b")
        for e1, e2 in zip(m1.entries, m2.entries):
            assert (e1.label, e1.width, e1.height) == (e2.label, e2.width, e2.height)
            a = load_ppm(tmp_path / "a" / e1.path)
            b = load_ppm(tmp_path / "b" / e2.path)
            assert np.array_equal(a, b)

    def test_balanced_classes(self, tmp_path):
        m = synth_square(SquareConfig(count=30, seed=1), tmp_path)
        counts = m.class_counts()
        assert counts[0] == counts[1] == 15

    def test_odd_count_rejected(self, tmp_path):
        with pytest.raises(DataError):
            synth_square(SquareConfig(count=7, seed=1), tmp_path)

    def test_label_soundness_by_pixel_scan(self, tmp_path):
        """A brute-force scan recovers each rectangle and confirms the label."""
        m = synth_square(SquareConfig(count=60, seed=9), tmp_path)
        for e in m.entries:
            img = load_ppm(tmp_path / e.path)
            x, y, w, h = _bbox_of_rect(img)
            assert (w == h) == (e.label == 1), e.path
            # filled: every pixel inside the box is the same color
            box = img[:, y:y + h, x:x + w]
            assert np.all(np.abs(box - box[:, :1, :1]) < 1e-9)

    def test_square_samples_have_equal_sides(self):
        rng = np.random.default_rng(77)
        cfg = SquareConfig(count=2, seed=0)
        for _ in range(20):
            _, geom = render_square_sample(rng, cfg, label=1)
            _, _, rw, rh = geom["rect"]
            assert rw == rh

    def test_nonsquare_aspect_outside_band(self):
        rng = np.random.default_rng(78)
        cfg = SquareConfig(count=2, seed=0)
        lo, hi = cfg.exclusion_band
        for _ in range(50):
            _, geom = render_square_sample(rng, cfg, label=0)
            _, _, rw, rh = geom["rect"]
            assert rw / rh < lo or rw / rh > hi

    def test_image_geometry_ranges(self):
        rng = np.random.default_rng(79)
        cfg = SquareConfig(count=2, seed=0)
        for label in (0, 1):
            for _ in range(40):
                img, geom = render_square_sample(rng, cfg, label)
                w, h = geom["size"]
                assert cfg.side_range[0] <= w <= cfg.side_range[1]
                assert cfg.side_range[0] <= h <= cfg.side_range[1]
                # generator never paints a label-revealing border
                assert np.array_equal(img[:, 0, 0], geom["bg"])

    def test_resize_scrambles_square_aspect(self, tmp_path):
        """Squares in non-square images stop being squares on a fixed canvas."""
        rng = np.random.default_rng(80)
        cfg = SquareConfig(count=2, seed=0)
        checked = 0
        while checked < 10:
            img, geom = render_square_sample(rng, cfg, label=1)
            w, h = geom["size"]
            if abs(w / h - 1.0) < 0.15:
                continue
            resized = resize_bilinear(img, 64, 64).data
            x, y, rw, rh = geom["rect"]
            new_w, new_h = rw * 64 / w, rh * 64 / h
            assert abs(new_w / new_h - 1.0) > 0.05  # geometric damage
            # and the rendered pixels agree: measured box is anisotropic
            bx, by, bw, bh = _bbox_of_rect(np.round(resized * 255) / 255)
            assert bw != bh or abs(new_w - new_h) < 2.0
            checked += 1


class TestResize:
    def test_identity_resize(self):
        rng = np.random.default_rng(40)
        img = rng.uniform(size=(3, 6, 9))
        npt.assert_array_equal(resize_bilinear(img, 6, 9).data, img)

    def test_constant_maps_to_constant(self):
        img = np.full((3, 5, 7), 0.37)
        out = resize_bilinear(img, 11, 4).data
        npt.assert_allclose(out, 0.37, atol=1e-15)

    def test_matches_pointwise_oracle(self):
        rng = np.random.default_rng(41)
        img = rng.uniform(size=(3, 5, 7))
        out = resize_bilinear(img, 3, 4).data
        npt.assert_allclose(out, resize_bilinear_pointwise(img, 3, 4),
                            atol=1e-12, rtol=0)

    def test_nonpositive_target_rejected(self):
        with pytest.raises(DataError):
            resize_bilinear(np.zeros((3, 4, 4)), 0, 5)


class TestPnmCodecs:
    def test_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(42)
        img = rng.integers(0, 256, size=(3, 9, 4)).astype(np.float64) / 255.0
        p = tmp_path / "t.ppm"
        save_ppm(p, img)
        npt.assert_array_equal(load_ppm(p), img)

    def test_extremes_map_to_unit_range(self, tmp_path):
        img = np.zeros((3, 2, 2))
        img[:, 0, 0] = 1.0
        p = tmp_path / "e.ppm"
        save_ppm(p, img)
        back = load_ppm(p)
        assert back[0, 0, 0] == 1.0 and back[0, 1, 1] == 0.0

    def test_random_roundtrip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(43)
        img = rng.uniform(size=(3, 8, 8))
        p = tmp_path / "q.ppm"
        save_ppm(p, img)
        err = np.abs(load_ppm(p) - img)
        assert err.max() <= 1.0 / 510.0 + 1e-12

    def test_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(44)
        img = rng.integers(0, 256, size=(5, 6)).astype(np.float64) / 255.0
        p = tmp_path / "t.pgm"
        save_pgm(p, img)
        npt.assert_array_equal(load_pgm(p), img)
        assert read_pnm_size(p) == (6, 5)

    def test_header_comments_supported(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
        img = load_ppm(p)
        assert img.shape == (3, 1, 2)
        assert img[0, 0, 0] == 1.0 and img[1, 0, 1] == 1.0

    def test_malformed_inputs_rejected(self, tmp_path):
        bad_magic = tmp_path / "m.ppm"
        bad_magic.write_bytes(b"P3\n2 2\n255\n")
        with pytest.raises(PnmFormatError):
            load_ppm(bad_magic)
        truncated = tmp_path / "t.ppm"
        truncated.write_bytes(b"P6\n4 4\n255\n\x00\x00")
        with pytest.raises(PnmFormatError):
            load_ppm(truncated)
        maxval = tmp_path / "x.ppm"
        maxval.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
        with pytest.raises(PnmFormatError):
            load_ppm(maxval)

    def test_minmax_normalization(self):
        npt.assert_allclose(normalize_minmax(np.array([[1.0, 3.0]])), [[0.0, 1.0]])
        npt.assert_array_equal(normalize_minmax(np.zeros((2, 2))), np.full((2, 2), 0.5))


class TestSplitAndStats:
    def _manifest(self, tmp_path, count=10, seed=3):
        return synth_square(SquareConfig(count=count, seed=seed), tmp_path)

    def test_eighty_twenty_of_ten(self, tmp_path):
        m = self._manifest(tmp_path)
        split(m, (0.8, 0.2), seed=0)
        assert len(m.tagged("train")) == 8
        assert len(m.tagged("val")) == 2

    def test_stratified_within_one_per_class(self, tmp_path):
        m = self._manifest(tmp_path, count=50, seed=6)
        split(m, (0.8, 0.2), seed=1)
        for tag, frac in (("train", 0.8), ("val", 0.2)):
            entries = m.tagged(tag)
            per_class = {0: 0, 1: 0}
            for e in entries:
                per_class[e.label] += 1
            assert abs(per_class[0] - 25 * frac) <= 1
            assert abs(per_class[1] - 25 * frac) <= 1

    def test_split_deterministic(self, tmp_path):
        m1 = self._manifest(tmp_path / "a")
        m2 = self._manifest(tmp_path / "b")
        split(m1, (0.8, 0.2), seed=7)
        split(m2, (0.8, 0.2), seed=7)
        assert [e.split for e in m1.entries] == [e.split for e in m2.entries]

    def test_fraction_validation(self, tmp_path):
        m = self._manifest(tmp_path)
        with pytest.raises(DataError):
            split(m, (0.8, 0.1), seed=0)
        with pytest.raises(DataError):
            split(m, (1.0, 0.0), seed=0)  # empty val split

    def test_avg_pixels_mean(self):
        from pbgdnet.data import ManifestEntry
        m = DatasetManifest(root=None, entries=[
            ManifestEntry("a", 0, 6, 6), ManifestEntry("b", 1, 8, 8)])
        assert compute_avg_pixels(m) == 50.0

    def test_avg_pixels_uses_training_split_only(self):
        from pbgdnet.data import ManifestEntry
        m = DatasetManifest(root=None, entries=[
            ManifestEntry("a", 0, 6, 6, split="train"),
            ManifestEntry("b", 1, 8, 8, split="val")])
        assert compute_avg_pixels(m) == 36.0

    def test_manifest_roundtrip_and_dataset(self, tmp_path):
        m = self._manifest(tmp_path)
        loaded = load_manifest(tmp_path / "manifest.csv")
        assert [e.path for e in loaded.entries] == [e.path for e in m.entries]
        assert [e.label for e in loaded.entries] == [e.label for e in m.entries]
        ds = ManifestDataset(loaded)
        s = ds.sample(0)
        assert s.pixels.shape[0] == 3
        w, h = ds.dims(0)
        assert s.pixels.shape == (3, h, w)
        assert np.all(s.pixels.data >= 0) and np.all(s.pixels.data <= 1)

    def test_manifest_header_required(self, tmp_path):
        bad = tmp_path / "m.csv"
        bad.write_text("file,cls\nx.ppm,0\n")
        with pytest.raises(DataError):
            load_manifest(bad)
