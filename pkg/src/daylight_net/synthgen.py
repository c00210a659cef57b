"""Deterministic closed-form daylight generator.

Renders window frames and consistent (Eh, Es, Ee) triples on the 4x4 sensor
grid, standing in for a field dataset.  Targets follow a separable model:
diurnal sine bell, per-day cloud modulation, inverse-square depth decay and a
mild lateral falloff; the rendered window brightness tracks the same sun *
cloud signal so the images carry the information the CNN must recover.

Every stream (cloud phases, target noise, pixel noise) derives from
(seed, date), so output is bit-reproducible and day-order independent.
"""

import json
import time
from dataclasses import dataclass, field, asdict
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParameterError
from .pgm import write_pgm

ROOM_WIDTH = 8.9  # meters along the window wall

# window rectangles in normalized (x0, y0, x1, y1) image coordinates
WINDOW_RECTS = ((0.10, 0.30, 0.45, 0.75), (0.55, 0.30, 0.90, 0.75))

SENSOR_X = (5.8, 4.3, 2.8, 1.3)  # west-wall distance, descending within a row
SENSOR_D = (1.5, 3.0, 4.5, 6.0)  # window distance, one grid row per value


def sensor_grid():
    """sensor_id -> (x, d) for the 16-point grid; ids 1-4 sit nearest the
    window and ids 13-16 deepest in the room."""
    grid = {}
    sid = 1
    for d in SENSOR_D:
        for x in SENSOR_X:
            grid[sid] = (x, d)
            sid += 1
    return grid


@dataclass
class SynthConfig:
    sunrise: float = 360.0
    sunset: float = 1080.0
    peak_south_lux: float = 2000.0
    depth_coeff: float = 0.6       # per meter, inverse-square attenuation
    lateral_coeff: float = 0.03    # per meter, linear falloff
    exp_south: float = 1.2
    exp_horizontal: float = 1.0
    exp_east: float = 1.1
    ratio_horizontal: float = 0.45
    ratio_east: float = 0.35
    noise_sigma: float = 0.02
    cloud_min: float = 0.3
    cloud_max: float = 1.0
    image_size: int = 128
    cadence_minutes: int = 5
    day_start_minute: int = 480    # 08:00
    day_end_minute: int = 1020     # 17:00
    clear_sky: bool = False
    start_date: date = field(default_factory=lambda: date(2024, 3, 4))
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.start_date, str):
            self.start_date = date.fromisoformat(self.start_date)
        if not (self.sunrise < self.day_start_minute <= self.day_end_minute < self.sunset):
            raise ConfigError("daylight must span the working window")
        for name in ("peak_south_lux", "depth_coeff", "lateral_coeff",
                     "exp_south", "exp_horizontal", "exp_east",
                     "ratio_horizontal", "ratio_east"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lateral_coeff * max(SENSOR_X) >= 1.0:
            raise ConfigError("lateral falloff would reach zero inside the room")
        if not 0.0 < self.cloud_min <= self.cloud_max <= 1.0:
            raise ConfigError("cloud bounds must satisfy 0 < min <= max <= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")

    def ticks(self):
        return range(self.day_start_minute, self.day_end_minute + 1, self.cadence_minutes)


def sun_factor(t, config):
    """Diurnal bell in [0, 1]: sine arc between sunrise and sunset, 0 at night."""
    if t < config.sunrise or t > config.sunset:
        return 0.0
    phase = (t - config.sunrise) / (config.sunset - config.sunrise)
    return float(np.clip(np.sin(np.pi * phase), 0.0, 1.0))


def day_phases(seed, day):
    """Cloud-wave phases for one calendar day, from the (seed, date) stream."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, day.toordinal(), 1]))
    return tuple(rng.uniform(0.0, 2.0 * np.pi, size=2))


def cloud_factor(t, config, phases):
    """Cloud transmission in [cloud_min, cloud_max]; 1 in clear-sky mode."""
    if config.clear_sky:
        return 1.0
    p1, p2 = phases
    wave = np.sin(2.0 * np.pi * 3.0 * t / 1440.0 + p1) * np.sin(2.0 * np.pi * 7.0 * t / 1440.0 + p2)
    return float(np.clip(0.65 + 0.35 * wave, config.cloud_min, config.cloud_max))


def oracle_illuminance(t, x, d, c, config, rng=None):
    """Ground-truth (Eh, Es, Ee) in lux at minute ``t`` and position (x, d).

    With ``rng`` supplied and noise_sigma > 0, each value gets multiplicative
    gaussian noise (1 + sigma*eta) and is clamped at zero.
    """
    s = sun_factor(t, config)
    depth = 1.0 / (1.0 + config.depth_coeff * d) ** 2
    lateral = 1.0 - config.lateral_coeff * x
    lateral_e = 1.0 - config.lateral_coeff * (ROOM_WIDTH - x)
    e0 = config.peak_south_lux
    es = e0 * s ** config.exp_south * c * depth * lateral
    eh = config.ratio_horizontal * e0 * s ** config.exp_horizontal * c * depth * lateral
    ee = config.ratio_east * e0 * s ** config.exp_east * c * depth * lateral_e
    values = np.array([eh, es, ee])
    if rng is not None and config.noise_sigma > 0:
        values = values * (1.0 + config.noise_sigma * rng.standard_normal(3))
        values = np.maximum(values, 0.0)
    return float(values[0]), float(values[1]), float(values[2])


def render_window_image(t, c, config, rng=None):
    """8-bit grayscale frame: dark canvas with two bright window rectangles.

    The window base intensity is round(255 * min(1, 0.15 + 0.85*S*c)),
    modulated by a +-10% top-to-bottom gradient; optional gaussian pixel
    noise (sigma 2) is added when ``rng`` is given.
    """
    p = config.image_size
    img = np.full((p, p), 10.0)
    signal = sun_factor(t, config) * c
    base = 0.15 + 0.85 * signal
    centers = (np.arange(p) + 0.5) / p
    for x0, y0, x1, y1 in WINDOW_RECTS:
        rows = np.nonzero((centers >= y0) & (centers < y1))[0]
        cols = np.nonzero((centers >= x0) & (centers < x1))[0]
        if rows.size == 0 or cols.size == 0:
            continue
        if rows.size > 1:
            factor = 1.1 - 0.2 * (np.arange(rows.size) / (rows.size - 1))
        else:
            factor = np.ones(1)
        values = np.rint(255.0 * np.minimum(1.0, base * factor))
        img[np.ix_(rows, cols)] = values[:, None]
    if rng is not None:
        img = img + rng.normal(0.0, 2.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def window_polygons():
    """The window rectangles as mask polygons (normalized coordinates)."""
    polys = []
    for x0, y0, x1, y1 in WINDOW_RECTS:
        polys.append([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    return polys


def _format_row(ts, sid, x, d, targets):
    # 10 decimals keep the CSV equal to the oracle well below 1e-9 lux
    return "%s,%d,%.1f,%.1f,%.10f,%.10f,%.10f" % (
        ts.strftime("%Y-%m-%d %H:%M"), sid, x, d, targets[0], targets[1], targets[2],
    )


def generate_corpus(days, config, out_dir):
    """Write ``days`` of synchronized CSV rows and window frames.

    Layout: ``samples.csv``, ``images/img_YYYYMMDD_HHMM.pgm``, ``mask.json``
    and ``manifest.json`` under ``out_dir``.  One frame per tick is shared by
    all 16 sensors.  Fully deterministic for a given config.
    """
    if days < 1:
        raise ParameterError(f"days must be >= 1, got {days}")
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()

    grid = sensor_grid()
    ticks = list(config.ticks())
    lines = ["timestamp,sensor_id,X,D,Eh,Es,Ee"]
    n_images = 0
    for day_idx in range(days):
        day = config.start_date + timedelta(days=day_idx)
        phases = day_phases(config.seed, day)
        base = np.random.SeedSequence([config.seed, day.toordinal(), 2])
        pixel_ss, target_ss = base.spawn(2)
        pixel_rng = np.random.default_rng(pixel_ss)
        target_rng = np.random.default_rng(target_ss) if config.noise_sigma > 0 else None
        for t in ticks:
            ts = datetime(day.year, day.month, day.day, t // 60, t % 60)
            c = cloud_factor(t, config, phases)
            frame = render_window_image(t, c, config, rng=pixel_rng)
            write_pgm(image_dir / f"img_{ts.strftime('%Y%m%d_%H%M')}.pgm", frame)
            n_images += 1
            for sid in sorted(grid):
                x, d = grid[sid]
                targets = oracle_illuminance(t, x, d, c, config, rng=target_rng)
                lines.append(_format_row(ts, sid, x, d, targets))

    csv_path = out_dir / "samples.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    with open(out_dir / "mask.json", "w", encoding="utf-8") as f:
        json.dump({"polygons": window_polygons()}, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")

    cfg = asdict(config)
    cfg["start_date"] = config.start_date.isoformat()
    manifest = {
        "command": "synth",
        "config": cfg,
        "days": days,
        "seed": config.seed,
        "rows": len(lines) - 1,
        "images": n_images,
        "wall_time_s": round(time.time() - started, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    return len(lines) - 1, n_images
