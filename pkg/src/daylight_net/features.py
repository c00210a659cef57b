"""Deterministic transformation of raw observations into model inputs.

Covers the four feature stages: window-region masking + grayscale + resize +
normalization for images, sinusoidal time-of-day encoding, the ordered
(tod_sin, tod_cos, x, d) structured vector, and leakage-safe z-score
standardization fitted on the training split only.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DimensionError, FitError, ValidationError
from .pgm import load_image

MINUTES_PER_DAY = 1440

FEATURE_NAMES = ("tod_sin", "tod_cos", "x", "d")
TARGET_NAMES = ("eh", "es", "ee")


# ---------------------------------------------------------------------------
# temporal encoding
# ---------------------------------------------------------------------------

def encode_minutes(t):
    """Cyclic encoding of minutes-since-midnight: (sin, cos) of 2*pi*t/1440."""
    angle = 2.0 * math.pi * t / MINUTES_PER_DAY
    return math.sin(angle), math.cos(angle)


def encode_time(timestamp):
    """Cyclic time-of-day encoding of a datetime, at minute resolution."""
    return encode_minutes(timestamp.hour * 60 + timestamp.minute)


def build_feature_vector(sample):
    """Ordered structured features (tod_sin, tod_cos, x, d); order is frozen."""
    for name in ("timestamp", "x", "d"):
        if getattr(sample, name, None) is None:
            raise ValidationError(f"sample is missing field '{name}'")
    tod_sin, tod_cos = encode_time(sample.timestamp)
    return np.array([tod_sin, tod_cos, sample.x, sample.d], dtype=np.float64)


# ---------------------------------------------------------------------------
# window mask
# ---------------------------------------------------------------------------

def load_mask_config(path):
    """Read a mask file: JSON with ``polygons`` in normalized [0,1]^2 coords."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read mask config {path}: {exc}") from exc
    if not isinstance(doc, dict) or "polygons" not in doc:
        raise ConfigError(f"{path}: mask config must contain a 'polygons' list")
    return validate_polygons(doc["polygons"])


def validate_polygons(polygons):
    out = []
    for p, poly in enumerate(polygons):
        pts = [(float(x), float(y)) for x, y in poly]
        if len(pts) < 3:
            raise ConfigError(f"mask polygon {p} has fewer than 3 vertices")
        for x, y in pts:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ConfigError(f"mask polygon {p} has vertex ({x}, {y}) outside [0,1]^2")
        out.append(pts)
    return out


def _points_in_polygon(px, py, poly):
    """Even-odd rule containment for arrays of points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 <= py) != (y2 <= py)
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
    return inside


_mask_cache = {}


def window_mask(shape, polygons):
    """Boolean keep-mask for an image of ``shape``; pixel centers inside any
    polygon are kept."""
    key = (shape, tuple(tuple((float(x), float(y)) for x, y in poly) for poly in polygons))
    cached = _mask_cache.get(key)
    if cached is not None:
        return cached
    h, w = shape
    py, px = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    keep = np.zeros(shape, dtype=bool)
    for poly in polygons:
        keep |= _points_in_polygon(px, py, poly)
    if len(_mask_cache) > 64:
        _mask_cache.clear()
    _mask_cache[key] = keep
    return keep


# ---------------------------------------------------------------------------
# image pipeline: mask -> grayscale -> resize -> normalize
# ---------------------------------------------------------------------------

_LUMA = (0.299, 0.587, 0.114)


def _to_grayscale(img):
    if img.ndim == 2:
        return img.astype(np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def _resize_bilinear(img, out_h, out_w):
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = (1.0 - wx) * img[np.ix_(y0, x0)] + wx * img[np.ix_(y0, x1)]
    bot = (1.0 - wx) * img[np.ix_(y1, x0)] + wx * img[np.ix_(y1, x1)]
    return (1.0 - wy) * top + wy * bot


def preprocess_image(raw, polygons, size=128):
    """Run the fixed pipeline mask -> grayscale -> resize -> normalize.

    ``raw`` is an 8-bit image, [H, W] grayscale or [H, W, 3] RGB; pixels whose
    center falls outside every polygon are zeroed before conversion, which
    maps them to exactly -1 after p/127.5 - 1 normalization.  Returns a
    float32 [1, size, size] tensor with values in [-1, 1].
    """
    raw = np.asarray(raw)
    if raw.dtype != np.uint8 or raw.ndim not in (2, 3) or (raw.ndim == 3 and raw.shape[2] != 3):
        raise DataError(f"expected an 8-bit [H,W] or [H,W,3] image, got {raw.dtype} {raw.shape}")
    keep = window_mask(raw.shape[:2], polygons)
    if not keep.any():
        raise ConfigError("mask has zero area for this image size")
    masked = raw * (keep if raw.ndim == 2 else keep[:, :, None])
    gray = _to_grayscale(masked)
    resized = _resize_bilinear(gray, size, size)
    return (resized / 127.5 - 1.0).astype(np.float32)[None, :, :]


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass
class ScalerParams:
    """Per-column mean/std (population convention) plus fit provenance."""

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str

    def to_dict(self):
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            fitted_on=str(d["fitted_on"]),
        )


def fit_scaler(columns, source="train", names=None):
    """Fit per-column mean/std (divide by N) and record the source split.

    Rejects constant columns, naming the offender.  The pipeline only accepts
    scalers with ``fitted_on == 'train'``; other sources are permitted here so
    leakage can be demonstrated and tested.
    """
    x = np.asarray(columns, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise FitError(f"need at least 2 rows to fit a scaler, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=0)
    for i, s in enumerate(std):
        if s == 0.0:
            label = names[i] if names is not None else f"column {i}"
            raise FitError(f"constant column '{label}' cannot be standardized")
    return ScalerParams(mean=mean, std=std, fitted_on=source)


def apply_scaler(values, params, direction="forward"):
    """Standardize (``forward``) or de-standardize (``inverse``) columns."""
    x = np.asarray(values)
    k = params.mean.shape[0]
    if x.shape[-1] != k:
        raise DimensionError(f"scaler expects {k} columns, got {x.shape[-1]}")
    if direction == "forward":
        return (x - params.mean) / params.std
    if direction == "inverse":
        return x * params.std + params.mean
    raise ValueError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# corpus assembly
# ---------------------------------------------------------------------------

@dataclass
class AssembledData:
    """Model-ready arrays for a cleaned corpus.

    Images are deduplicated (all sensors at a tick share one frame) and
    stored NHWC; ``image_index`` maps each sample row to its frame.
    """

    images: np.ndarray
    image_index: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    targets_lux: np.ndarray
    timestamps: list
    sensor_ids: np.ndarray
    input_scaler: ScalerParams
    target_scaler: ScalerParams
    mask_polygons: list = field(default_factory=list)

    @property
    def n_samples(self):
        return self.features.shape[0]


def assemble_corpus(samples, polygons, image_size, train_indices=None,
                    input_scaler=None, target_scaler=None):
    """Preprocess a sample list into AssembledData.

    Scalers are fitted on ``train_indices`` unless already provided (the
    evaluate/predict path reuses checkpoint scalers instead of refitting).
    """
    if not samples:
        raise DataError("cannot assemble an empty corpus")
    raw_feats = np.stack([build_feature_vector(s) for s in samples])
    raw_targets = np.array([[s.eh, s.es, s.ee] for s in samples], dtype=np.float64)

    if input_scaler is None or target_scaler is None:
        if train_indices is None:
            raise ValidationError("train_indices required when scalers are not supplied")
        idx = np.asarray(train_indices)
        input_scaler = fit_scaler(raw_feats[idx], source="train", names=FEATURE_NAMES)
        target_scaler = fit_scaler(raw_targets[idx], source="train", names=TARGET_NAMES)

    refs = sorted({s.image_ref for s in samples})
    ref_pos = {r: i for i, r in enumerate(refs)}
    frames = np.empty((len(refs), image_size, image_size, 1), dtype=np.float32)
    for i, ref in enumerate(refs):
        tensor = preprocess_image(load_image(ref), polygons, size=image_size)
        frames[i] = tensor.transpose(1, 2, 0)

    return AssembledData(
        images=frames,
        image_index=np.array([ref_pos[s.image_ref] for s in samples], dtype=np.int64),
        features=apply_scaler(raw_feats, input_scaler).astype(np.float32),
        targets=apply_scaler(raw_targets, target_scaler).astype(np.float32),
        targets_lux=raw_targets,
        timestamps=[s.timestamp for s in samples],
        sensor_ids=np.array([s.sensor_id for s in samples], dtype=np.int64),
        input_scaler=input_scaler,
        target_scaler=target_scaler,
        mask_polygons=polygons,
    )
