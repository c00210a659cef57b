"""Multimodal CNN-MLP assembly and the binary checkpoint format.

Architecture: four conv blocks (3x3, pad 1, stride 1 -> relu -> maxpool 2)
whose channel widths come from the config, global average pooling to a
128-dim image embedding, a dense+relu projection of the 4 structured features
to 32 dims, concatenation to a 160-dim fused vector, then a dense head with
relu and (inverted) dropout after each hidden layer and a linear 3-output
regression layer.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigError, DataError, DimensionError, ValidationError
from .features import ScalerParams

CHECKPOINT_MAGIC = b"DLNC"
CHECKPOINT_VERSION = 1

N_TARGETS = 3
N_STRUCT_FEATURES = 4


@dataclass
class ModelConfig:
    mlp_hidden: list
    dropout: float = 0.0
    cnn_channels: list = field(default_factory=lambda: [16, 32, 64, 128])
    struct_embed_dim: int = 32
    lr: float = 0.001
    batch_size: int = 64
    patience: int = 12
    max_epochs: int = 200
    seed: int = 0
    image_size: int = 128
    name: str = "model"

    def __post_init__(self):
        if len(self.cnn_channels) != 4:
            raise ConfigError(f"cnn_channels must have 4 entries, got {len(self.cnn_channels)}")
        if any(c < 1 for c in self.cnn_channels):
            raise ConfigError("cnn_channels must be positive")
        if not self.mlp_hidden:
            raise ConfigError("mlp_hidden must not be empty")
        if any(h < 1 for h in self.mlp_hidden):
            raise ConfigError("mlp_hidden widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.image_size % 16 != 0 or self.image_size < 16:
            raise ConfigError("image_size must be a positive multiple of 16 (four pooling halvings)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must all be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model config fields: {sorted(extra)}")
        if "mlp_hidden" not in d:
            raise ConfigError("model config requires mlp_hidden")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model config {path}: {exc}") from exc

    def fused_width(self):
        return self.cnn_channels[-1] + self.struct_embed_dim


def layer_param_shapes(config):
    """Ordered (name, shape) pairs of every trainable tensor."""
    shapes = OrderedDict()
    c_in = 1
    for i, c_out in enumerate(config.cnn_channels, start=1):
        shapes[f"conv{i}.w"] = (c_out, c_in, 3, 3)
        shapes[f"conv{i}.b"] = (c_out,)
        c_in = c_out
    shapes["struct.w"] = (config.struct_embed_dim, N_STRUCT_FEATURES)
    shapes["struct.b"] = (config.struct_embed_dim,)
    width = config.fused_width()
    for i, hidden in enumerate(config.mlp_hidden, start=1):
        shapes[f"head{i}.w"] = (hidden, width)
        shapes[f"head{i}.b"] = (hidden,)
        width = hidden
    shapes["out.w"] = (N_TARGETS, width)
    shapes["out.b"] = (N_TARGETS,)
    return shapes


def count_params(config):
    """Total trainable scalars plus the per-layer decomposition."""
    breakdown = OrderedDict()
    for name, shape in layer_param_shapes(config).items():
        layer = name.rsplit(".", 1)[0]
        breakdown[layer] = breakdown.get(layer, 0) + int(np.prod(shape))
    return sum(breakdown.values()), breakdown


class MultimodalNet:
    """The fusion regressor; owns its parameters and the dropout stream."""

    def __init__(self, config, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        self.params = OrderedDict()
        for name, shape in layer_param_shapes(config).items():
            if name.endswith(".b"):
                data = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = np.sqrt(6.0 / fan_in)
                data = rng.uniform(-bound, bound, size=shape).astype(dtype)
            self.params[name] = nn.Tensor(data, requires_grad=True)
        self.reseed_dropout(config.seed)

    def reseed_dropout(self, seed):
        self.dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    def named_parameters(self):
        return list(self.params.items())

    def parameters(self):
        return list(self.params.values())

    def get_weights(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def set_weights(self, weights):
        for name, tensor in self.params.items():
            if name not in weights:
                raise ValidationError(f"missing weight tensor '{name}'")
            arr = np.asarray(weights[name], dtype=self.dtype)
            if arr.shape != tensor.data.shape:
                raise DimensionError(
                    f"weight '{name}' has shape {arr.shape}, expected {tensor.data.shape}"
                )
            tensor.data = arr.copy()

    def _prepare(self, images, feats):
        img = images.data if isinstance(images, nn.Tensor) else np.asarray(images)
        ft = feats.data if isinstance(feats, nn.Tensor) else np.asarray(feats)
        if img.ndim != 4 or img.shape[3] != 1:
            raise DimensionError(f"images must be [B, H, W, 1], got {img.shape}")
        s = self.config.image_size
        if img.shape[1] != s or img.shape[2] != s:
            raise DimensionError(f"images must be {s}x{s}, got {img.shape[1]}x{img.shape[2]}")
        if ft.ndim != 2 or ft.shape[1] != N_STRUCT_FEATURES:
            raise DimensionError(f"features must be [B, {N_STRUCT_FEATURES}], got {ft.shape}")
        if img.shape[0] != ft.shape[0]:
            raise DimensionError(f"batch mismatch: {img.shape[0]} images vs {ft.shape[0]} feature rows")
        to = lambda a: a.astype(self.dtype) if a.dtype != self.dtype else a
        return nn.Tensor(to(img)), nn.Tensor(to(ft))

    def forward(self, images, feats, training=False, probe=None):
        """Predict standardized targets for a batch; [B,H,W,1]+[B,4] -> [B,3]."""
        x, ft = self._prepare(images, feats)
        p = self.params
        if probe is not None:
            probe["spatial"] = [x.data.shape[1]]
        for i in range(1, 5):
            x = nn.conv2d(x, p[f"conv{i}.w"], p[f"conv{i}.b"], padding=1, stride=1)
            x = nn.relu(x)
            x = nn.maxpool2d(x, 2).check_finite(f"conv{i}")
            if probe is not None:
                probe["spatial"].append(x.data.shape[1])
        emb = nn.global_avg_pool(x)
        s = nn.relu(nn.dense(ft, p["struct.w"], p["struct.b"])).check_finite("struct")
        fused = nn.concat([emb, s], axis=1)
        if probe is not None:
            probe["embedding"] = emb.data.shape[1]
            probe["struct_embed"] = s.data.shape[1]
            probe["fused"] = fused.data.shape[1]
        h = fused
        for i in range(1, len(self.config.mlp_hidden) + 1):
            h = nn.relu(nn.dense(h, p[f"head{i}.w"], p[f"head{i}.b"])).check_finite(f"head{i}")
            h = nn.dropout(h, self.config.dropout, training, self.dropout_rng)
        out = nn.dense(h, p["out.w"], p["out.b"]).check_finite("out")
        if probe is not None:
            probe["output"] = out.data.shape[1]
        return out

    def forward_probe(self, images, feats):
        """Eval-mode forward that also reports the stage widths."""
        probe = {}
        with nn.no_grad():
            out = self.forward(images, feats, training=False, probe=probe)
        return out, probe


def build_model(config, dtype=np.float32):
    return MultimodalNet(config, dtype=dtype)


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    """Weights + scalers + preprocessing config: everything inference needs."""

    config: ModelConfig
    input_scaler: ScalerParams
    target_scaler: ScalerParams
    mask_polygons: list
    best_epoch: int
    best_val_mse: float
    weights: "OrderedDict[str, np.ndarray]"
    version: int = CHECKPOINT_VERSION

    def _validate(self):
        for scaler, label in ((self.input_scaler, "input"), (self.target_scaler, "target")):
            if scaler.fitted_on != "train":
                raise ValidationError(f"{label} scaler was fitted on '{scaler.fitted_on}', not 'train'")
        expected = layer_param_shapes(self.config)
        if list(self.weights) != list(expected):
            raise ValidationError("weight manifest does not match the config-derived architecture")
        for name, shape in expected.items():
            if tuple(self.weights[name].shape) != shape:
                raise DimensionError(f"weight '{name}' has shape {self.weights[name].shape}, expected {shape}")

    def save(self, path):
        self._validate()
        header = {
            "config": self.config.to_dict(),
            "input_scaler": self.input_scaler.to_dict(),
            "target_scaler": self.target_scaler.to_dict(),
            "mask_polygons": [[[float(x), float(y)] for x, y in poly] for poly in self.mask_polygons],
            "best_epoch": int(self.best_epoch),
            "best_val_mse": float(self.best_val_mse),
            "weights": [{"name": k, "shape": list(v.shape)} for k, v in self.weights.items()],
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", self.version))
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            for arr in self.weights.values():
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as f:
                raw = f.read()
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
        if raw[:4] != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        version = struct.unpack_from("<I", raw, 4)[0]
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        hlen = struct.unpack_from("<I", raw, 8)[0]
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        offset = 12 + hlen
        weights = OrderedDict()
        for item in header["weights"]:
            shape = tuple(item["shape"])
            n = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
            weights[item["name"]] = arr.copy()
            offset += 4 * n
        if offset != len(raw):
            raise DataError(f"{path}: trailing bytes after weight blobs")
        ckpt = cls(
            config=ModelConfig.from_dict(header["config"]),
            input_scaler=ScalerParams.from_dict(header["input_scaler"]),
            target_scaler=ScalerParams.from_dict(header["target_scaler"]),
            mask_polygons=[[(float(x), float(y)) for x, y in poly] for poly in header["mask_polygons"]],
            best_epoch=int(header["best_epoch"]),
            best_val_mse=float(header["best_val_mse"]),
            weights=weights,
            version=version,
        )
        ckpt._validate()
        return ckpt

    def build_model(self):
        model = MultimodalNet(self.config, dtype=np.float32)
        model.set_weights(self.weights)
        return model
