"""Training loop with Adam, early stopping and the six-configuration sweep."""

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, NumericError, ValidationError
from .evaluation import predict_split
from .model import Checkpoint, ModelConfig, build_model

logger = logging.getLogger(__name__)

# (name, mlp_hidden, dropout); learning rate is 0.001 throughout
SWEEP_GRID = (
    ("A", (64, 32), 0.0),
    ("B", (64, 32), 0.3),
    ("C", (128, 64, 32), 0.0),
    ("D", (128, 64, 32), 0.3),
    ("E", (256, 128, 64), 0.3),
    ("F", (256, 128, 64), 0.5),
)

SWEEP_COLUMNS = ("model", "mlp", "dropout", "lr", "val_mse", "val_r2", "best_epoch")


def sweep_configs(image_size, base_seed=0, max_epochs=200, batch_size=64):
    """The six candidate configurations, one isolated seed each."""
    configs = []
    for i, (name, hidden, rate) in enumerate(SWEEP_GRID):
        configs.append(ModelConfig(
            mlp_hidden=list(hidden),
            dropout=rate,
            lr=0.001,
            batch_size=batch_size,
            max_epochs=max_epochs,
            seed=base_seed + i,
            image_size=image_size,
            name=name,
        ))
    return configs


def model_c_config(image_size, seed=0, **overrides):
    """The selected configuration: [128, 64, 32] head without dropout."""
    base = dict(mlp_hidden=[128, 64, 32], dropout=0.0, lr=0.001,
                image_size=image_size, seed=seed, name="C")
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    epoch_seconds: list = field(default_factory=list)

    @property
    def last_epoch(self):
        return len(self.val_mse) - 1


def _gather(data, sel):
    return data.images[data.image_index[sel]], data.features[sel], data.targets[sel]


def _validation_mse(model, data, val_idx):
    preds = predict_split(model, data, val_idx)
    err = preds - data.targets[val_idx].astype(np.float64)
    return float((err * err).mean())


def train(model, data, splits, config, curves_path=None):
    """Minimize the standardized-target MSE; keep the best-validation weights.

    Stops when the validation MSE has not strictly improved for
    ``config.patience`` consecutive epochs, or at ``config.max_epochs``.
    Returns (Checkpoint, TrainHistory); the checkpoint (and the model, which
    is restored in place) holds the best-epoch weights.
    """
    if not splits.train or not splits.val:
        raise ConfigError("train and val splits must be non-empty")
    for scaler, label in ((data.input_scaler, "input"), (data.target_scaler, "target")):
        if scaler.fitted_on != "train":
            raise ValidationError(f"{label} scaler fitted on '{scaler.fitted_on}'; refusing to train")

    train_idx = np.asarray(splits.train, dtype=np.int64)
    val_idx = np.asarray(splits.val, dtype=np.int64)
    model.reseed_dropout(config.seed)
    opt = nn.Adam(model.parameters(), lr=config.lr)

    history = TrainHistory()
    best_val = np.inf
    best_weights = model.get_weights()
    for epoch in range(config.max_epochs):
        started = time.time()
        perm = np.random.default_rng(np.random.SeedSequence([config.seed, 1, epoch]))
        order = train_idx[perm.permutation(train_idx.size)]
        sse, seen = 0.0, 0
        for batch_no, a in enumerate(range(0, order.size, config.batch_size)):
            sel = order[a:a + config.batch_size]
            images, feats, targets = _gather(data, sel)
            out = model.forward(images, feats, training=True)
            loss = nn.mse_loss(out, targets)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {batch_no}")
            opt.zero_grad()
            nn.backward(loss)
            opt.step()
            sse += value * sel.size
            seen += sel.size
        history.train_mse.append(sse / seen)
        val_mse = _validation_mse(model, data, val_idx)
        history.val_mse.append(val_mse)
        history.epoch_seconds.append(time.time() - started)
        if val_mse < best_val:
            best_val = val_mse
            history.best_epoch = epoch
            best_weights = model.get_weights()
        elif epoch - history.best_epoch >= config.patience:
            history.stopped_early = True
            logger.info("early stop at epoch %d (best %d, val %.6f)", epoch, history.best_epoch, best_val)
            break
        logger.debug("epoch %d: train %.6f val %.6f", epoch, history.train_mse[-1], val_mse)

    model.set_weights(best_weights)
    if curves_path is not None:
        write_curves(curves_path, history)
    checkpoint = Checkpoint(
        config=config,
        input_scaler=data.input_scaler,
        target_scaler=data.target_scaler,
        mask_polygons=data.mask_polygons,
        best_epoch=history.best_epoch,
        best_val_mse=best_val,
        weights=best_weights,
    )
    return checkpoint, history


def write_curves(path, history):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for e, (tr, va) in enumerate(zip(history.train_mse, history.val_mse)):
            writer.writerow([e, f"{tr:.10f}", f"{va:.10f}"])


def _uniform_r2(y_true, y_pred):
    """Mean per-column R^2 (standardized space)."""
    scores = []
    for k in range(y_true.shape[1]):
        ss_res = float(((y_pred[:, k] - y_true[:, k]) ** 2).sum())
        ss_tot = float(((y_true[:, k] - y_true[:, k].mean()) ** 2).sum())
        scores.append(1.0 - ss_res / ss_tot)
    return float(np.mean(scores))


def run_sweep(data, splits, out_dir, base_seed=0, smoke=False, batch_size=64):
    """Train the six candidates and emit sweep.csv plus per-model curves.

    A failing run is recorded as a row with empty metrics and the sweep
    continues.  ``smoke`` caps every run at 20 epochs.
    """
    image_size = data.images.shape[1]
    configs = sweep_configs(image_size, base_seed=base_seed,
                            max_epochs=20 if smoke else 200, batch_size=batch_size)
    rows = []
    histories = {}
    for config in configs:
        mlp_label = "x".join(str(h) for h in config.mlp_hidden)
        try:
            model = build_model(config)
            checkpoint, history = train(
                model, data, splits, config,
                curves_path=out_dir / f"curves_{config.name}.csv",
            )
            val_idx = np.asarray(splits.val, dtype=np.int64)
            preds = predict_split(model, data, val_idx)
            r2 = _uniform_r2(data.targets[val_idx].astype(np.float64), preds)
            rows.append((config.name, mlp_label, config.dropout, config.lr,
                         checkpoint.best_val_mse, r2, history.best_epoch))
            histories[config.name] = history
        except Exception:
            logger.exception("sweep run %s failed", config.name)
            rows.append((config.name, mlp_label, config.dropout, config.lr, "", "", ""))
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for name, mlp, rate, lr, mse, r2, best in rows:
            writer.writerow([
                name, mlp, rate, lr,
                f"{mse:.10f}" if mse != "" else "",
                f"{r2:.10f}" if r2 != "" else "",
                best,
            ])
    return rows, histories
