"""Scene model, cube assembly, synthesis, and cube file I/O."""

import numpy as np
import pytest

from snapspec.errors import FormatError
from snapspec.scene import (
    SceneModel,
    assemble_cube,
    cube_intensity,
    read_cube,
    read_image,
    scene_from_cube,
    synth_random_scene,
    write_cube,
    write_image,
)


class TestSceneModel:
    def test_rejects_unnormalized_spectra(self):
        with pytest.raises(ValueError):
            SceneModel(np.ones((3, 3)), np.full((3, 4), 0.3))

    def test_rejects_negative(self):
        spectra = np.full((3, 4), 0.25)
        bad = np.ones((3, 3))
        bad[0, 0] = -1.0
        with pytest.raises(ValueError):
            SceneModel(bad, spectra)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            SceneModel(np.ones((3, 4)), np.full((4, 4), 0.25))


class TestAssemble:
    def test_uniform_scene_constant_cube(self):
        m = 5
        sc = SceneModel(np.ones((3, 3)), np.full((3, m), 1.0 / m))
        cube = assemble_cube(sc)
        np.testing.assert_allclose(cube, 1.0 / m)

    def test_single_pixel_product(self):
        intensity = np.zeros((2, 2))
        intensity[0, 0] = 5.0
        sc = SceneModel(intensity, np.array([[0.4, 0.6], [0.5, 0.5]]))
        cube = assemble_cube(sc)
        np.testing.assert_allclose(cube[0, 0], [2.0, 3.0])

    def test_intensity_round_trip(self):
        sc = synth_random_scene(7, 6, blobs=3, seed=1)
        cube = assemble_cube(sc)
        np.testing.assert_allclose(cube_intensity(cube), sc.intensity, atol=1e-12)

    def test_cube_intensity_zeros(self):
        assert cube_intensity(np.zeros((3, 3, 4))).sum() == 0.0

    def test_cube_intensity_matches_naive_loop(self):
        rng = np.random.default_rng(3)
        cube = rng.uniform(size=(5, 5, 7))
        out = cube_intensity(cube)
        for i in range(5):
            for j in range(5):
                acc = 0.0
                for lam in range(7):
                    acc += cube[i, j, lam]
                assert out[i, j] == pytest.approx(acc, abs=0)

    def test_scene_from_cube_recovers_model(self):
        sc = synth_random_scene(11, 5, blobs=2, seed=9)
        back = scene_from_cube(assemble_cube(sc))
        np.testing.assert_allclose(back.intensity, sc.intensity, atol=1e-12)
        np.testing.assert_allclose(back.spectra, sc.spectra, atol=1e-12)

    def test_jitter_breaks_and_preserves(self):
        sc = synth_random_scene(7, 6, blobs=2, seed=4)
        cube = assemble_cube(sc, jitter=0.2, seed=5)
        assert not np.allclose(cube, assemble_cube(sc))
        # intensity is preserved: per-pixel spectra are renormalized
        np.testing.assert_allclose(cube_intensity(cube), sc.intensity, atol=1e-9)
        with pytest.raises(ValueError):
            assemble_cube(sc, jitter=0.2)


class TestSynth:
    def test_determinism(self):
        a = synth_random_scene(7, 8, blobs=3, seed=123)
        b = synth_random_scene(7, 8, blobs=3, seed=123)
        np.testing.assert_array_equal(a.intensity, b.intensity)
        np.testing.assert_array_equal(a.spectra, b.spectra)

    def test_zero_blobs_uniform(self):
        sc = synth_random_scene(7, 4, blobs=0, seed=1)
        assert np.unique(sc.intensity).size == 1

    def test_invariants_hold(self):
        for seed in range(8):
            sc = synth_random_scene(15, 8, blobs=4, seed=seed)
            assert sc.intensity.min() >= 0.05 * sc.intensity.max() - 1e-12
            assert (sc.spectra >= 0).all()
            np.testing.assert_allclose(sc.spectra.sum(axis=1), 1.0, atol=1e-9)

    def test_floor_knob(self):
        sc = synth_random_scene(7, 4, blobs=3, seed=2, floor=0.3)
        assert sc.intensity.min() >= 0.3 - 1e-12

    def test_unsupported_order_rejected(self):
        with pytest.raises(ValueError):
            synth_random_scene(8, 4, blobs=1, seed=0)


class TestCubeIO:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        cube = rng.uniform(size=(4, 5, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "c.hcube"
        write_cube(cube, path)
        back = read_cube(path)
        np.testing.assert_array_equal(back, cube)
        # file-level fixpoint: write(read(file)) reproduces the bytes
        path2 = tmp_path / "c2.hcube"
        write_cube(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_header_and_layout(self, tmp_path):
        cube = np.arange(12, dtype=np.float64).reshape(2, 2, 3)
        path = tmp_path / "h.hcube"
        write_cube(cube, path)
        raw = path.read_bytes()
        assert raw.startswith(b"HCUBE1 2 2 3\n")
        vals = np.frombuffer(raw[raw.find(b"\n") + 1:], dtype="<f4")
        np.testing.assert_array_equal(vals, np.arange(12, dtype=np.float32))

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.hcube"
        write_cube(np.ones((2, 2, 3)), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(FormatError, match="size mismatch"):
            read_cube(path)

    def test_dims_2x2x3_with_12_samples_accepted(self, tmp_path):
        path = tmp_path / "ok.hcube"
        payload = np.arange(12, dtype="<f4").tobytes()
        path.write_bytes(b"HCUBE1 2 2 3\n" + payload)
        cube = read_cube(path)
        assert cube.shape == (2, 2, 3)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.hcube"
        path.write_bytes(b"NOTACUBE 2 2 3\n" + b"\x00" * 48)
        with pytest.raises(FormatError, match="header"):
            read_cube(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "nan.hcube"
        data = np.full(12, np.nan, dtype="<f4")
        path.write_bytes(b"HCUBE1 2 2 3\n" + data.tobytes())
        with pytest.raises(FormatError, match="non-finite"):
            read_cube(path)

    def test_image_helpers(self, tmp_path):
        img = np.arange(6, dtype=np.float64).reshape(2, 3)
        path = tmp_path / "img.hcube"
        write_image(img, path)
        np.testing.assert_array_equal(read_image(path), img)
