"""Metrics, correlation analysis and plot-ready evaluation exports.

Regression metrics are computed per target column in both standardized units
and lux (after the checkpoint's inverse transform); exports are CSV matrices
for the error heatmap, per-sensor day series and measured-vs-predicted
scatter data.
"""

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DataError, DimensionError, FitError
from .features import FEATURE_NAMES, TARGET_NAMES, apply_scaler

logger = logging.getLogger(__name__)

CORRELATION_COLUMNS = FEATURE_NAMES + TARGET_NAMES
TARGET_LABELS = ("Eh", "Es", "Ee")


class ZeroVarianceError(FitError):
    """R^2 is undefined for a constant truth column; carries partial metrics."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _column_metrics(y_true, y_pred):
    err = y_pred - y_true
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return None, mae, rmse
    r2 = 1.0 - float((err * err).sum()) / ss_tot
    return r2, mae, rmse


def compute_metrics(y_true, y_pred, labels=TARGET_LABELS):
    """Per-column (R^2, MAE, RMSE) for [N, K] arrays.

    Raises :class:`ZeroVarianceError` if a truth column is constant; the
    exception's ``partial`` attribute still carries every MAE/RMSE.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.ndim != 2 or y_true.shape[0] < 2:
        raise DimensionError("metrics need an [N, K] array with N >= 2")
    out = {}
    degenerate = None
    for k, label in enumerate(labels[: y_true.shape[1]]):
        r2, mae, rmse = _column_metrics(y_true[:, k], y_pred[:, k])
        out[label] = {"r2": r2, "mae": mae, "rmse": rmse}
        if r2 is None and degenerate is None:
            degenerate = label
    if degenerate is not None:
        raise ZeroVarianceError(
            f"R^2 undefined: truth column '{degenerate}' has zero variance", partial=out
        )
    return out


def pearson_matrix(samples):
    """Pearson correlations over (tod_sin, tod_cos, x, d, Eh, Es, Ee)."""
    from .features import build_feature_vector

    if len(samples) < 2:
        raise DimensionError("need at least 2 samples for correlations")
    feats = np.stack([build_feature_vector(s) for s in samples])
    targets = np.array([[s.eh, s.es, s.ee] for s in samples])
    table = np.column_stack([feats, targets])
    stds = table.std(axis=0)
    for i, s in enumerate(stds):
        if s == 0.0:
            raise FitError(f"column '{CORRELATION_COLUMNS[i]}' is constant; correlation undefined")
    return np.corrcoef(table, rowvar=False)


def least_squares_line(x, y):
    """Slope/intercept of the least-squares line of y on x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    denom = ((x - xm) ** 2).sum()
    if denom == 0.0:
        raise FitError("regression line undefined: x values are constant")
    slope = float(((x - xm) * (y - ym)).sum() / denom)
    return slope, float(ym - slope * xm)


# ---------------------------------------------------------------------------
# split evaluation
# ---------------------------------------------------------------------------

def predict_split(model, data, indices, batch_size=256):
    """Eval-mode predictions (standardized units) for the given sample rows."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.empty((idx.size, 3), dtype=np.float64)
    with nn.no_grad():
        for a in range(0, idx.size, batch_size):
            sel = idx[a:a + batch_size]
            pred = model.forward(data.images[data.image_index[sel]], data.features[sel])
            out[a:a + sel.size] = pred.data
    return out


@dataclass
class EvalReport:
    split: str
    n_samples: int
    standardized: dict
    lux: dict

    def to_dict(self):
        return {
            "split": self.split,
            "n_samples": self.n_samples,
            "standardized": self.standardized,
            "lux": self.lux,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")


def evaluate(checkpoint, data, indices, split_name, predictions=None):
    """EvalReport for one split: metrics in standardized units and in lux.

    ``predictions`` (standardized) can be injected for oracle tests;
    otherwise the checkpoint's model is run in eval mode.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise DataError(f"split '{split_name}' is empty")
    if predictions is None:
        predictions = predict_split(checkpoint.build_model(), data, idx)
    y_true_std = apply_scaler(data.targets_lux[idx], checkpoint.target_scaler)
    y_pred_lux = apply_scaler(predictions, checkpoint.target_scaler, direction="inverse")
    return EvalReport(
        split=split_name,
        n_samples=int(idx.size),
        standardized=compute_metrics(y_true_std, predictions),
        lux=compute_metrics(data.targets_lux[idx], y_pred_lux),
    )


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _day_frame(data, indices, y_pred_lux):
    """Rows of (timestamp, sensor_id, truth, pred) sorted by time then sensor."""
    order = sorted(range(len(indices)), key=lambda i: (data.timestamps[indices[i]], data.sensor_ids[indices[i]]))
    rows = []
    for i in order:
        j = indices[i]
        rows.append((data.timestamps[j], int(data.sensor_ids[j]), data.targets_lux[j], y_pred_lux[i]))
    return rows


def error_heatmap(data, indices, y_pred_lux, hours=range(8, 18)):
    """Mean absolute lux error per (sensor, hour) cell, one matrix per target.

    Returns {target: [16 x n_hours] arrays with NaN for missing cells}.
    """
    idx = np.asarray(indices, dtype=np.int64)
    abs_err = np.abs(y_pred_lux - data.targets_lux[idx])
    hours = list(hours)
    hour_pos = {h: k for k, h in enumerate(hours)}
    sums = np.zeros((3, 16, len(hours)))
    counts = np.zeros((16, len(hours)), dtype=np.int64)
    for row, j in enumerate(idx):
        h = data.timestamps[j].hour
        if h not in hour_pos:
            continue
        s = int(data.sensor_ids[j]) - 1
        counts[s, hour_pos[h]] += 1
        sums[:, s, hour_pos[h]] += abs_err[row]
    with np.errstate(invalid="ignore"):
        cells = sums / counts
    missing = int((counts == 0).sum())
    if missing:
        logger.warning("error heatmap: %d sensor-hour cells have no samples", missing)
    return {label: cells[k] for k, label in enumerate(TARGET_LABELS)}, hours


def write_heatmap_csv(path, matrix, hours):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sensor"] + [f"{h:02d}:00" for h in hours])
        for s in range(16):
            row = [s + 1]
            for v in matrix[s]:
                row.append("" if np.isnan(v) else f"{v:.6f}")
            writer.writerow(row)


def time_series_export(data, indices, y_pred_lux, sensor_ids, out_dir):
    """Per-sensor CSV of measured vs predicted lux over the split's day."""
    known = set(int(s) for s in data.sensor_ids[np.asarray(indices, dtype=np.int64)])
    for sid in sensor_ids:
        if sid not in known:
            raise DataError(f"sensor {sid} not present in the split")
    rows = _day_frame(data, list(indices), y_pred_lux)
    paths = []
    for sid in sensor_ids:
        path = out_dir / f"timeseries_sensor{sid:02d}.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["time", "Eh_meas", "Eh_pred", "Es_meas", "Es_pred", "Ee_meas", "Ee_pred"])
            for ts, s, truth, pred in rows:
                if s != sid:
                    continue
                writer.writerow(
                    [ts.strftime("%H:%M")]
                    + [f"{v:.6f}" for pair in zip(truth, pred) for v in pair]
                )
        paths.append(path)
    return paths


def scatter_export(data, indices, y_pred_lux, out_dir):
    """Per-target (measured, predicted) pairs plus the fitted line."""
    idx = np.asarray(indices, dtype=np.int64)
    truth = data.targets_lux[idx]
    fits = {}
    for k, label in enumerate(TARGET_LABELS):
        path = out_dir / f"scatter_{label}.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["measured", "predicted"])
            for m, p in zip(truth[:, k], y_pred_lux[:, k]):
                writer.writerow([f"{m:.6f}", f"{p:.6f}"])
        slope, intercept = least_squares_line(truth[:, k], y_pred_lux[:, k])
        fits[label] = {"slope": slope, "intercept": intercept}
    with open(out_dir / "scatter_fit.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["target", "slope", "intercept"])
        for label in TARGET_LABELS:
            writer.writerow([label, f"{fits[label]['slope']:.8f}", f"{fits[label]['intercept']:.8f}"])
    return fits
