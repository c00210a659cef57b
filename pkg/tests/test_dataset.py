import logging
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from daylight_net import dataset, synthgen
from daylight_net.dataset import Sample, SplitIndices, load_corpus, split
from daylight_net.errors import ConfigError, DataError
from daylight_net.pgm import write_pgm

HEADER = "timestamp,sensor_id,X,D,Eh,Es,Ee"


def _write_corpus(tmp_path, rows, image_minutes):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text("\n".join([HEADER] + rows) + "\n")
    image_dir = tmp_path / "images"
    image_dir.mkdir(exist_ok=True)
    for hhmm in image_minutes:
        name = f"img_20240401_{hhmm}.pgm"
        write_pgm(image_dir / name, np.zeros((4, 4), dtype=np.uint8))
    return csv_path, image_dir


def _rows(ticks, sensors=16):
    grid = synthgen.sensor_grid()
    rows = []
    for hhmm in ticks:
        for sid in range(1, sensors + 1):
            x, d = grid[sid]
            rows.append(f"2024-04-01 {hhmm[:2]}:{hhmm[2:]},{sid},{x},{d},10.0,20.0,5.0")
    return rows


class TestLoadCorpus:
    def test_join_arithmetic(self, tmp_path):
        ticks = ["0800", "0805", "0810"]
        csv_path, image_dir = _write_corpus(tmp_path, _rows(ticks), ticks)
        samples = load_corpus(csv_path, image_dir)
        assert len(samples) == 48  # 3 ticks x 16 sensors

    def test_missing_target_rows_are_dropped(self, tmp_path):
        rows = _rows(["0800"])
        rows[4] = rows[4].rsplit(",", 2)[0] + ",,5.0"  # blank Es
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800"])
        samples = load_corpus(csv_path, image_dir)
        assert len(samples) == 15

    def test_clean_corpus_keeps_every_row(self, tmp_path):
        rows = _rows(["0800", "0805"])
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800", "0805"])
        assert len(load_corpus(csv_path, image_dir)) == len(rows)

    def test_missing_image_drops_with_warning(self, tmp_path, caplog):
        rows = _rows(["0800", "0805"])
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800"])  # no 08:05 frame
        with caplog.at_level(logging.WARNING):
            samples = load_corpus(csv_path, image_dir)
        assert len(samples) == 16
        assert any("no image" in r.message for r in caplog.records)

    def test_malformed_row_reports_line_number(self, tmp_path):
        rows = _rows(["0800"])
        rows[2] = "not-a-date,1,5.8,1.5,1,2,3"
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800"])
        with pytest.raises(DataError, match=":4:"):  # header + 2 good rows before it
            load_corpus(csv_path, image_dir)

    def test_negative_lux_rejected(self, tmp_path):
        rows = _rows(["0800"])
        rows[0] = rows[0].rsplit(",", 3)[0] + ",-1.0,2.0,3.0"
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800"])
        with pytest.raises(DataError, match="negative"):
            load_corpus(csv_path, image_dir)

    def test_sensor_position_must_be_consistent(self, tmp_path):
        rows = _rows(["0800"])
        rows.append("2024-04-01 08:05,1,9.9,1.5,1,2,3")
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800", "0805"])
        with pytest.raises(DataError, match="sensor 1"):
            load_corpus(csv_path, image_dir)

    def test_bad_header_rejected(self, tmp_path):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("a,b,c\n")
        with pytest.raises(DataError, match="header"):
            load_corpus(csv_path, tmp_path)

    def test_out_of_range_sensor_rejected(self, tmp_path):
        rows = ["2024-04-01 08:00,17,1.0,1.0,1,2,3"]
        csv_path, image_dir = _write_corpus(tmp_path, rows, ["0800"])
        with pytest.raises(DataError, match="17"):
            load_corpus(csv_path, image_dir)

    def test_canonical_ordering(self, tiny_samples):
        keys = [s.sort_key() for s in tiny_samples]
        assert keys == sorted(keys)


def _synthetic_samples(days, per_day_ticks=109, drop_first=0):
    """In-memory corpus shaped like the field campaign, no files needed."""
    grid = synthgen.sensor_grid()
    samples = []
    start = date(2024, 4, 1)
    for day_idx in range(days):
        day = start + timedelta(days=day_idx)
        for tick in range(per_day_ticks):
            minute = 480 + 5 * tick
            ts = datetime(day.year, day.month, day.day, minute // 60, minute % 60)
            for sid in range(1, 17):
                x, d = grid[sid]
                samples.append(Sample(ts, sid, x, d, "none", 1.0, 2.0, 3.0))
    return samples[drop_first:]


class TestSplit:
    def test_field_campaign_counts(self):
        # 10 days minus 96 rows = 17,344 samples with an intact 1,744 final day
        samples = _synthetic_samples(10, drop_first=96)
        assert len(samples) == 17_344
        idx = split(samples, seed=42, holdout_day=date(2024, 4, 10))
        assert len(idx.train) == 10_920
        assert len(idx.val) == 2_340
        assert len(idx.test1) == 2_340
        assert len(idx.test2) == 1_744

    def test_partition_is_disjoint_and_complete(self, tiny_samples):
        idx = split(tiny_samples, seed=1, holdout_day=date(2024, 3, 5))
        parts = [idx.train, idx.val, idx.test1, idx.test2]
        union = sorted(i for p in parts for i in p)
        assert union == list(range(len(tiny_samples)))

    def test_holdout_purity(self, tiny_samples):
        holdout = date(2024, 3, 5)
        idx = split(tiny_samples, seed=1, holdout_day=holdout)
        assert all(tiny_samples[i].timestamp.date() == holdout for i in idx.test2)
        for part in (idx.train, idx.val, idx.test1):
            assert all(tiny_samples[i].timestamp.date() != holdout for i in part)

    def test_stratification_within_one_sample(self, tiny_samples):
        idx = split(tiny_samples, seed=3, holdout_day=date(2024, 3, 5))
        in_train = set(idx.train)
        rest = [s for i, s in enumerate(tiny_samples) if s.timestamp.date() != date(2024, 3, 5)]
        for sid in range(1, 17):
            total = sum(1 for s in rest if s.sensor_id == sid)
            got = sum(1 for i in idx.train if tiny_samples[i].sensor_id == sid)
            assert abs(got - 0.70 * total) <= 1.0

    def test_same_seed_is_identical(self, tiny_samples):
        a = split(tiny_samples, seed=7, holdout_day=date(2024, 3, 5))
        b = split(tiny_samples, seed=7, holdout_day=date(2024, 3, 5))
        assert a == b

    def test_different_seeds_differ(self, tiny_samples):
        a = split(tiny_samples, seed=7, holdout_day=date(2024, 3, 5))
        b = split(tiny_samples, seed=8, holdout_day=date(2024, 3, 5))
        assert a.train != b.train

    def test_empty_holdout_rejected(self, tiny_samples):
        with pytest.raises(ConfigError):
            split(tiny_samples, seed=0, holdout_day=date(2030, 1, 1))

    def test_single_day_corpus_leaves_no_remainder(self):
        samples = _synthetic_samples(1)
        with pytest.raises(ConfigError, match="left"):
            split(samples, seed=0, holdout_day=date(2024, 4, 1))

    def test_save_load_round_trip(self, tiny_samples, tmp_path):
        idx = split(tiny_samples, seed=5, holdout_day=date(2024, 3, 5))
        path = tmp_path / "splits.json"
        idx.save(path)
        assert SplitIndices.load(path) == idx
        # byte-identical when rewritten
        text = path.read_bytes()
        idx.save(path)
        assert path.read_bytes() == text
