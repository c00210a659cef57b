import json
from datetime import datetime

import numpy as np
import pytest

from daylight_net import features
from daylight_net.dataset import Sample
from daylight_net.errors import ConfigError, DataError, DimensionError, FitError, ValidationError

FULL_FRAME = [[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]]
LEFT_HALF = [[[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0]]]


class TestEncodeTime:
    @pytest.mark.parametrize(
        "hh,mm,exp_sin,exp_cos",
        [
            (0, 0, 0.0, 1.0),
            (6, 0, 1.0, 0.0),
            (12, 0, 0.0, -1.0),
            # 08:40 -> t=520, angle 130 degrees
            (8, 40, 0.766044443118978, -0.642787609686539),
        ],
    )
    def test_reference_points(self, hh, mm, exp_sin, exp_cos):
        s, c = features.encode_time(datetime(2024, 5, 1, hh, mm))
        assert s == pytest.approx(exp_sin, abs=1e-9)
        assert c == pytest.approx(exp_cos, abs=1e-9)

    def test_unit_circle_all_minutes(self):
        for t in range(1440):
            s, c = features.encode_minutes(t)
            assert abs(s * s + c * c - 1.0) < 1e-12

    def test_periodicity(self):
        for t in (0, 47, 519, 1439):
            a = features.encode_minutes(t)
            b = features.encode_minutes(t + 1440)
            assert a[0] == pytest.approx(b[0], abs=1e-9)
            assert a[1] == pytest.approx(b[1], abs=1e-9)


class TestPreprocessImage:
    def test_all_black_maps_to_minus_one(self):
        raw = np.zeros((16, 16), dtype=np.uint8)
        out = features.preprocess_image(raw, FULL_FRAME, size=16)
        assert out.shape == (1, 16, 16)
        assert np.all(out == -1.0)

    def test_all_white_full_mask_maps_to_plus_one(self):
        raw = np.full((16, 16), 255, dtype=np.uint8)
        out = features.preprocess_image(raw, FULL_FRAME, size=16)
        assert np.all(out == 1.0)

    def test_half_mask_splits_exactly(self):
        raw = np.full((8, 8), 255, dtype=np.uint8)
        out = features.preprocess_image(raw, LEFT_HALF, size=8)[0]
        assert np.all(out[:, :4] == 1.0)
        assert np.all(out[:, 4:] == -1.0)

    def test_rgb_luma_weights(self):
        raw = np.zeros((4, 4, 3), dtype=np.uint8)
        raw[..., 0] = 255  # pure red
        out = features.preprocess_image(raw, FULL_FRAME, size=4)
        assert np.allclose(out, 0.299 * 255 / 127.5 - 1.0, atol=1e-6)

    def test_range_and_masked_region(self):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=(32, 32), dtype=np.uint8).astype(np.uint8)
        out = features.preprocess_image(raw, LEFT_HALF, size=32)[0]
        assert out.min() >= -1.0 and out.max() <= 1.0
        # columns well outside the polygon (margin > 1 source pixel) are exactly -1
        assert np.all(out[:, 17:] == -1.0)

    def test_pipeline_order_masking_precedes_normalization(self):
        raw = np.full((8, 8), 255, dtype=np.uint8)
        pipeline = features.preprocess_image(raw, LEFT_HALF, size=8)[0]
        # the wrong order (normalize, then zero the masked region) leaves 0.0
        wrong = (features._resize_bilinear(raw.astype(np.float64), 8, 8) / 127.5 - 1.0)
        wrong[:, 4:] = 0.0
        assert np.all(pipeline[:, 4:] == -1.0)
        assert np.all(wrong[:, 4:] == 0.0)
        assert not np.allclose(pipeline, wrong)

    def test_zero_area_mask_rejected(self):
        raw = np.zeros((8, 8), dtype=np.uint8)
        sliver = [[[0.0, 0.0], [1e-06, 0.0], [1e-6, 1e-6], [0.0, 1e-6]]]
        with pytest.raises(ConfigError):
            features.preprocess_image(raw, sliver, size=8)

    def test_undecodable_input_rejected(self):
        with pytest.raises(DataError):
            features.preprocess_image(np.zeros((4, 4), dtype=np.float32), FULL_FRAME, size=4)

    def test_resize_is_exact_identity_at_same_size(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 255, size=(12, 12))
        assert np.array_equal(features._resize_bilinear(img, 12, 12), img)

    def test_resize_preserves_constant(self):
        img = np.full((16, 16), 80.0)
        assert np.allclose(features._resize_bilinear(img, 7, 7), 80.0)


class TestScaler:
    def test_population_formula(self):
        p = features.fit_scaler(np.array([1.0, 2.0, 3.0]))
        assert p.mean[0] == pytest.approx(2.0)
        assert p.std[0] == pytest.approx(0.816496580927726)
        assert p.fitted_on == "train"

    def test_already_standardized(self):
        x = np.array([-1.2247448, 0.0, 1.2247448])
        p = features.fit_scaler(x)
        assert p.mean[0] == pytest.approx(0.0, abs=1e-7)
        assert p.std[0] == pytest.approx(1.0, rel=1e-6)

    def test_forward_of_mean_is_zero(self):
        p = features.fit_scaler(np.array([[1.0, 4.0], [3.0, 8.0]]))
        out = features.apply_scaler(p.mean, p)
        assert np.allclose(out, 0.0)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        data = rng.normal(3.0, 2.5, size=(50, 4))
        p = features.fit_scaler(data)
        x = rng.normal(size=(20, 4))
        back = features.apply_scaler(features.apply_scaler(x, p), p, direction="inverse")
        assert np.allclose(back, x, atol=1e-9)

    def test_forward_standardizes_own_data(self):
        x = np.array([1.0, 2.0, 3.0])
        p = features.fit_scaler(x)
        z = features.apply_scaler(x[:, None], p)
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std() == pytest.approx(1.0, rel=1e-12)

    def test_constant_column_named_in_error(self):
        data = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
        with pytest.raises(FitError, match="d"):
            features.fit_scaler(data, names=("x", "d"))

    def test_column_count_mismatch(self):
        p = features.fit_scaler(np.random.default_rng(3).normal(size=(10, 3)))
        with pytest.raises(DimensionError):
            features.apply_scaler(np.zeros((5, 2)), p)

    def test_leakage_detector_on_corpus(self, tiny_samples):
        # fitting on train only vs train+holdout must give different params
        targets = np.array([[s.eh, s.es, s.ee] for s in tiny_samples])
        half = len(targets) // 2
        p_train = features.fit_scaler(targets[:half], source="train")
        p_leaky = features.fit_scaler(targets, source="train+test")
        assert not np.allclose(p_train.mean, p_leaky.mean)
        assert p_leaky.fitted_on != "train"


class TestFeatureVector:
    def _sample(self, hh, mm):
        ts = datetime(2024, 5, 2, hh, mm)
        return Sample(ts, 13, 5.8, 6.0, "img.pgm", 10.0, 20.0, 5.0)

    def test_noon(self):
        v = features.build_feature_vector(self._sample(12, 0))
        assert v == pytest.approx([0.0, -1.0, 5.8, 6.0], abs=1e-9)

    def test_six_am(self):
        v = features.build_feature_vector(self._sample(6, 0))
        assert v == pytest.approx([1.0, 0.0, 5.8, 6.0], abs=1e-9)

    def test_order_is_frozen(self):
        assert features.FEATURE_NAMES == ("tod_sin", "tod_cos", "x", "d")
        v = features.build_feature_vector(self._sample(6, 0))
        assert v.shape == (4,)
        assert v[2] == 5.8 and v[3] == 6.0

    def test_missing_field_rejected(self):
        s = self._sample(9, 0)
        s.x = None
        with pytest.raises(ValidationError, match="x"):
            features.build_feature_vector(s)


class TestMaskConfig:
    def test_load_round_trip(self, tmp_path):
        path = tmp_path / "mask.json"
        path.write_text(json.dumps({"polygons": LEFT_HALF}))
        polys = features.load_mask_config(path)
        assert polys == [[(0.0, 0.0), (0.5, 0.0), (0.5, 1.0), (0.0, 1.0)]]

    def test_rejects_out_of_range_vertex(self, tmp_path):
        path = tmp_path / "mask.json"
        path.write_text(json.dumps({"polygons": [[[0, 0], [2.0, 0], [1, 1]]]}))
        with pytest.raises(ConfigError):
            features.load_mask_config(path)

    def test_rejects_missing_key(self, tmp_path):
        path = tmp_path / "mask.json"
        path.write_text("{}")
        with pytest.raises(ConfigError):
            features.load_mask_config(path)
