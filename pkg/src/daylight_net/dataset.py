"""Corpus ingestion, cleaning and the deterministic four-way split.

CSV schema (header required)::

    timestamp,sensor_id,X,D,Eh,Es,Ee

with ``timestamp`` as ``YYYY-MM-DD HH:MM`` and empty cells meaning missing.
Images follow the ``img_YYYYMMDD_HHMM.<ext>`` convention inside the image
directory; all sensors at a tick share one frame.
"""

import csv
import json
import logging
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .features import load_mask_config

logger = logging.getLogger(__name__)

_HEADER = ["timestamp", "sensor_id", "x", "d", "eh", "es", "ee"]
_IMAGE_EXTENSIONS = (".pgm", ".png", ".jpg", ".jpeg")

TRAIN_FRACTION = 0.70


@dataclass
class Sample:
    """One synchronized observation: frame reference plus measured targets."""

    timestamp: datetime
    sensor_id: int
    x: float
    d: float
    image_ref: str
    eh: float
    es: float
    ee: float

    def sort_key(self):
        return (self.timestamp, self.sensor_id)


@dataclass
class SplitIndices:
    """Disjoint index lists over the canonical (timestamp, sensor_id) order."""

    train: list
    val: list
    test1: list
    test2: list
    seed: int
    holdout_day: date

    def to_dict(self):
        return {
            "seed": self.seed,
            "holdout_day": self.holdout_day.isoformat(),
            "train": list(self.train),
            "val": list(self.val),
            "test1": list(self.test1),
            "test2": list(self.test2),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            train=list(d["train"]),
            val=list(d["val"]),
            test1=list(d["test1"]),
            test2=list(d["test2"]),
            seed=int(d["seed"]),
            holdout_day=date.fromisoformat(d["holdout_day"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, separators=(",", ":"))
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def subset(self, name):
        return {"train": self.train, "val": self.val, "test1": self.test1, "test2": self.test2}[name]


def _parse_row(row, path, line_no):
    def fail(msg):
        raise DataError(f"{path}:{line_no}: {msg}")

    if len(row) != 7:
        fail(f"expected 7 fields, got {len(row)}")
    ts_raw, sid_raw, x_raw, d_raw = (c.strip() for c in row[:4])
    targets_raw = [c.strip() for c in row[4:]]
    try:
        ts = datetime.strptime(ts_raw, "%Y-%m-%d %H:%M")
    except ValueError:
        fail(f"bad timestamp {ts_raw!r}, expected YYYY-MM-DD HH:MM")
    try:
        sid = int(sid_raw)
        x = float(x_raw)
        d = float(d_raw)
    except ValueError:
        fail(f"bad sensor_id/X/D in {row!r}")
    if not 1 <= sid <= 16:
        fail(f"sensor_id {sid} outside 1..16")
    if any(t == "" for t in targets_raw):
        return ts, sid, x, d, None  # missing measurement: cleaned out
    try:
        targets = [float(t) for t in targets_raw]
    except ValueError:
        fail(f"bad illuminance value in {row!r}")
    if any(t < 0 for t in targets):
        fail("negative illuminance")
    return ts, sid, x, d, targets


def _find_image(image_dir, ts):
    stem = f"img_{ts.strftime('%Y%m%d_%H%M')}"
    for ext in _IMAGE_EXTENSIONS:
        candidate = Path(image_dir) / (stem + ext)
        if candidate.exists():
            return str(candidate)
    return None


def load_corpus(csv_paths, image_dir, mask_config=None):
    """Load, clean and join CSV rows with their frames.

    Rows with a missing target are dropped (and counted in the log), as are
    rows whose frame is absent from ``image_dir``.  Returns samples in
    canonical (timestamp, sensor_id) order.
    """
    if mask_config is not None:
        load_mask_config(mask_config)  # fail early on a bad mask file
    if isinstance(csv_paths, (str, Path)):
        csv_paths = [csv_paths]

    samples = []
    positions = {}  # sensor_id -> (x, d)
    n_missing = 0
    n_no_image = 0
    image_cache = {}
    for path in csv_paths:
        try:
            f = open(path, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise DataError(f"cannot open {path}: {exc}") from exc
        with f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip().lower() for h in header] != _HEADER:
                raise DataError(f"{path}: expected header timestamp,sensor_id,X,D,Eh,Es,Ee")
            for line_no, row in enumerate(reader, start=2):
                if not row or all(c.strip() == "" for c in row):
                    continue
                ts, sid, x, d, targets = _parse_row(row, path, line_no)
                if targets is None:
                    n_missing += 1
                    continue
                known = positions.setdefault(sid, (x, d))
                if known != (x, d):
                    raise DataError(
                        f"{path}:{line_no}: sensor {sid} at ({x}, {d}) but previously seen at {known}"
                    )
                if ts not in image_cache:
                    image_cache[ts] = _find_image(image_dir, ts)
                ref = image_cache[ts]
                if ref is None:
                    n_no_image += 1
                    logger.warning("no image for %s, dropping sample (sensor %d)", ts, sid)
                    continue
                samples.append(Sample(ts, sid, x, d, ref, *targets))

    if n_missing or n_no_image:
        logger.info(
            "cleaned corpus: kept %d samples, dropped %d with missing targets, %d without image",
            len(samples), n_missing, n_no_image,
        )
    samples.sort(key=Sample.sort_key)
    return samples


def _allocate_train(strata_sizes, total_train):
    """Per-stratum train quotas: floor(0.7*n) plus largest-remainder top-up."""
    floors = {}
    remainders = []
    for sid, n in strata_sizes.items():
        ideal = TRAIN_FRACTION * n
        floors[sid] = int(ideal)
        remainders.append((-(ideal - int(ideal)), sid))
    extras = total_train - sum(floors.values())
    for _, sid in sorted(remainders)[:extras]:
        floors[sid] += 1
    return floors


def split(samples, seed, holdout_day):
    """Deterministic temporal-holdout + stratified 70/15/15 split.

    All samples dated ``holdout_day`` form test2.  The remainder is shuffled
    per sensor stratum with the seeded generator and divided so that train
    gets exactly floor(0.70*M) samples overall while each stratum stays
    within one sample of 70%; leftovers split evenly between val and test1
    with any odd stratum's extra alternating to test1 first.
    """
    if isinstance(holdout_day, str):
        holdout_day = date.fromisoformat(holdout_day)
    order = sorted(range(len(samples)), key=lambda i: samples[i].sort_key())

    test2 = [i for i in order if samples[i].timestamp.date() == holdout_day]
    if not test2:
        raise ConfigError(f"no samples dated {holdout_day} for the holdout set")
    rest = [i for i in order if samples[i].timestamp.date() != holdout_day]
    if not rest:
        raise ConfigError("no samples left outside the holdout day")

    strata = {}
    for i in rest:
        strata.setdefault(samples[i].sensor_id, []).append(i)
    total_train = int(TRAIN_FRACTION * len(rest))
    quotas = _allocate_train({sid: len(v) for sid, v in strata.items()}, total_train)

    rng = np.random.default_rng(seed)
    train, val, test1 = [], [], []
    odd_rank = 0
    for sid in sorted(strata):
        members = strata[sid]
        shuffled = [members[j] for j in rng.permutation(len(members))]
        q = quotas[sid]
        train.extend(shuffled[:q])
        leftover = shuffled[q:]
        n_val = len(leftover) // 2
        if len(leftover) % 2 == 1:
            # alternate the odd sample: test1 first, then val
            if odd_rank % 2 == 1:
                n_val += 1
            odd_rank += 1
        val.extend(leftover[:n_val])
        test1.extend(leftover[n_val:])

    return SplitIndices(
        train=sorted(train),
        val=sorted(val),
        test1=sorted(test1),
        test2=sorted(test2),
        seed=seed,
        holdout_day=holdout_day,
    )
