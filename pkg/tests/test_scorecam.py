import numpy as np
import pytest

import covct.scorecam as sc
from covct.errors import ShapeMismatch, UnknownColormap
from covct.nn import build_micronet, forward, forward_array
from covct.raster import BinaryMask, Raster, resize_array
from covct.scorecam import (
    COLORMAPS,
    CamConfig,
    colorize,
    compose_overlay,
    expected_forward_passes,
    masked_score,
    normalize_map,
    partition_work,
    score_masked_input,
    scorecam,
    select_maps,
)


@pytest.fixture(scope="module")
def net():
    return build_micronet(16, seed=42)


@pytest.fixture(scope="module")
def img():
    yy, xx = np.mgrid[0:64, 0:64]
    return Raster.gray8(np.clip(128 + 90 * np.sin(xx / 6.0) * np.cos(yy / 9.0), 0, 255))


def brute_force_cam(model, img, stride=1, target=0):
    x = img.pixels / 255.0
    maps = forward_array(model, x).last_conv
    h, w, _ = model.input_dims
    raw = np.zeros((h, w))
    for k in range(0, maps.shape[0], stride):
        a = maps[k]
        norm = np.zeros_like(a) if a.max() == a.min() else (a - a.min()) / (a.max() - a.min())
        up = resize_array(norm, w, h)
        s = forward_array(model, x * up).probs[target]
        raw += s * up
    raw = np.maximum(raw, 0)
    if raw.max() == raw.min():
        return raw, np.zeros((h, w), np.uint8)
    q = np.floor((raw - raw.min()) / (raw.max() - raw.min()) * 255 + 0.5)
    return raw, q.astype(np.uint8)


class TestSelection:
    def test_examples(self):
        assert select_maps(320, 4) == list(range(0, 320, 4)) and len(select_maps(320, 4)) == 80
        assert select_maps(7, 1) == list(range(7))
        assert select_maps(10, 4) == [0, 4, 8]

    @pytest.mark.parametrize("k, s", [(1, 1), (5, 8), (64, 4), (63, 4), (312, 4)])
    def test_count(self, k, s):
        assert len(select_maps(k, s)) == expected_forward_passes(k, s) == -(-k // s)

    def test_partition_examples(self):
        assert [len(c) for c in partition_work(range(80), 8)] == [10] * 8
        assert [len(c) for c in partition_work(range(10), 3)] == [4, 3, 3]
        assert partition_work(range(5), 8) == [[0], [1], [2], [3], [4], [], [], []]

    @pytest.mark.parametrize("n, w", [(0, 3), (17, 4), (80, 16), (3, 1)])
    def test_partition_contiguous_balanced(self, n, w):
        chunks = partition_work(list(range(n)), w)
        sizes = [len(c) for c in chunks]
        assert sum(chunks, []) == list(range(n)) and len(chunks) == w
        assert max(sizes) - min(sizes) <= 1 and sizes == sorted(sizes, reverse=True)


class TestNormalize:
    def test_examples(self):
        assert np.all(normalize_map(np.full((3, 3), 4.2)) == 0)
        np.testing.assert_array_equal(normalize_map(np.array([0.0, 5.0, 10.0])), [0, 0.5, 1])

    def test_unit_range(self):
        a = normalize_map(np.random.default_rng(0).normal(size=(9, 9)) * 1e3)
        assert a.min() == 0 and a.max() == 1


class TestMaskedScore:
    def test_constant_map_scores_zero_image(self, net, img):
        want = forward(net, Raster.gray8(np.zeros((64, 64)))).probs[0]
        assert masked_score(net, img, np.full((16, 16), 3.0)) == want

    def test_identity_mask(self, net, img):
        s = score_masked_input(net, img.pixels / 255.0, np.ones((64, 64)), 1)
        assert s == forward(net, img).probs[1]
        assert 0 < s < 1


class TestScoreCam:
    def test_stride_one_matches_brute_force(self, net, img):
        cam = scorecam(net, img, CamConfig(stride=1, workers=3))
        raw, q = brute_force_cam(net, img)
        np.testing.assert_allclose(cam.raw, raw, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(cam.values.pixels, q)

    def test_stride_selects_expected_maps(self, net, img):
        cam = scorecam(net, img, CamConfig(stride=4, workers=2))
        assert cam.selected_indices == tuple(select_maps(16, 4)) and len(cam.weights) == 4
        np.testing.assert_array_equal(cam.values.pixels, brute_force_cam(net, img, stride=4)[1])

    def test_worker_invariance(self, net, img):
        ref = scorecam(net, img, CamConfig(stride=1, workers=1))
        for w in range(2, 17):
            cam = scorecam(net, img, CamConfig(stride=1, workers=w))
            assert np.array_equal(cam.raw, ref.raw) and cam.values == ref.values
            assert np.array_equal(cam.weights, ref.weights)

    @pytest.mark.parametrize("stride, workers", [(1, 1), (1, 8), (4, 8), (3, 5)])
    def test_forward_pass_count(self, net, img, monkeypatch, stride, workers):
        calls = []
        real = sc.score_masked_input

        def counting(*args):
            calls.append(1)
            return real(*args)

        monkeypatch.setattr(sc, "score_masked_input", counting)
        scorecam(net, img, CamConfig(stride=stride, workers=workers))
        assert len(calls) == expected_forward_passes(16, stride)

    def test_single_map_collapses(self, img):
        model = build_micronet(1, seed=5)
        cam = scorecam(model, img, CamConfig(stride=1, workers=1))
        a = forward(model, img).last_conv[0]
        up = resize_array(normalize_map(a), 64, 64)
        np.testing.assert_array_equal(cam.values.pixels, np.floor(normalize_map(up) * 255 + 0.5))

    def test_value_range(self, net, img):
        cam = scorecam(net, img)
        assert np.all(cam.raw >= 0)
        v = cam.values.pixels
        assert np.all(v == 0) or (v.min() == 0 and v.max() == 255)

    def test_reuses_activations(self, net, img):
        act = forward(net, img)
        a = scorecam(net, img, CamConfig(), activations=act)
        b = scorecam(net, img, CamConfig())
        assert a.values == b.values

    def test_sidecar(self, net, img):
        cfg = CamConfig(stride=4, workers=8)
        side = scorecam(net, img, cfg).sidecar(cfg)
        assert side["selected_indices"] == [0, 4, 8, 12] and side["workers"] == 8 and len(side["weights"]) == 4

    def test_wrong_size(self, net):
        with pytest.raises(ShapeMismatch):
            scorecam(net, Raster.gray8(np.zeros((32, 32))))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CamConfig(stride=0)
        with pytest.raises(ValueError):
            CamConfig(workers=0)


class TestColorize:
    def test_endpoints(self):
        out = colorize(Raster.gray8([[0, 255]])).pixels
        np.testing.assert_array_equal(out[0, 0], COLORMAPS["bcyr"][0])
        np.testing.assert_array_equal(out[0, 1], COLORMAPS["bcyr"][255])
        assert tuple(COLORMAPS["bcyr"][0]) == (0, 0, 255) and tuple(COLORMAPS["bcyr"][255]) == (255, 0, 0)

    def test_monotone_along_table(self):
        # blue->cyan->yellow->red: the "warmth" red - blue never decreases
        lut = COLORMAPS["bcyr"].astype(int)
        assert np.all(np.diff(lut[:, 0] - lut[:, 2]) >= 0)
        gray = COLORMAPS["gray"].astype(int)
        assert np.all(np.diff(gray[:, 0]) >= 0) and len({tuple(c) for c in lut}) > 200

    def test_unknown(self):
        with pytest.raises(UnknownColormap):
            colorize(Raster.gray8([[1]]), "viridis")


class TestOverlay:
    ct = Raster.gray8([[10, 200], [90, 30]])
    heat = Raster.rgb8([[[255, 0, 0], [0, 0, 255]], [[0, 255, 0], [100, 100, 100]]])
    mask = BinaryMask(np.array([[True, False], [True, True]]))

    def test_c_zero_full_image(self):
        out = compose_overlay(self.ct, self.heat, self.mask, c=0.0, full_image=True).pixels
        np.testing.assert_array_equal(out, np.repeat(self.ct.pixels[..., None], 3, axis=-1))

    def test_c_zero_masked(self):
        out = compose_overlay(self.ct, self.heat, self.mask, c=0.0).pixels
        assert np.all(out[0, 1] == 0) and np.all(out[0, 0] == 10) and np.all(out[1, 1] == 30)

    def test_half_blend(self):
        out = compose_overlay(self.ct, self.heat, self.mask, c=0.5, full_image=True).pixels.astype(int)
        ct_rgb = np.repeat(self.ct.pixels[..., None].astype(int), 3, axis=-1)
        np.testing.assert_array_equal(out, np.floor((ct_rgb + self.heat.pixels) / 2 + 0.5))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            compose_overlay(self.ct, Raster.rgb8(np.zeros((3, 3, 3))), self.mask)
