#!/usr/bin/env python3
"""
Plot Tests - box statistics and byte-stable SVG output
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from jamgrip.errors import DomainError  # noqa: E402
from jamgrip.harness import TrialRecord  # noqa: E402
from jamgrip.plots import (  # noqa: E402
    PlotKind,
    box_stats,
    emit_plots,
    heatmap_svg,
    relaxation_table,
)
from jamgrip.stats import pairwise_matrix  # noqa: E402


GOLDEN_DIR = Path(__file__).parent / "golden"


def _record(plan, condition_id, cycle, push, holding, valid=True):
    return TrialRecord(
        plan=plan,
        condition_id=condition_id,
        batch_id=0,
        cycle=cycle,
        seed=cycle,
        push_force_n=push,
        holding_force_n=holding,
        interlock_n=None,
        valid=valid,
        trace_path="",
        wall_s=0.0,
    )


def tone_records():
    records = []
    for index, condition_id in enumerate(["tone-50Hz", "tone-200Hz", "tone-800Hz"]):
        for cycle in range(5):
            records.append(
                _record(
                    "FreqTone",
                    condition_id,
                    cycle,
                    10.0 + index + 0.1 * cycle,
                    2.0 * index + 0.3 * cycle,
                )
            )
    return records


def relaxation_records():
    records = []
    for height in (30, 40, 50):
        records.append(_record("HeightRelaxation", f"h{height}-vib", 0, 4.0, 10.0))
        records.append(
            _record("HeightRelaxation", f"h{height}-silent", 0, 8.0, 10.0)
        )
    return records


def volume_records():
    # multiples of 2.5 N on a 0-20 N axis land on exact pixel values
    groups = {
        "vol-0pct": ([10.0, 12.5, 15.0, 17.5, 20.0], [0.0, 2.5, 2.5, 5.0, 7.5]),
        "vol-150pct": ([7.5, 10.0, 12.5, 15.0, 17.5], [5.0, 7.5, 7.5, 10.0, 20.0]),
    }
    records = []
    for condition_id, (push, holding) in groups.items():
        for cycle, (p, h) in enumerate(zip(push, holding)):
            records.append(_record("VolTone", condition_id, cycle, p, h))
    return records


class TestBoxStats(unittest.TestCase):
    def test_plain_sample(self):
        self.assertEqual(
            box_stats(range(1, 10)), (1.0, 3.0, 5.0, 7.0, 9.0)
        )

    def test_outlier_beyond_whisker(self):
        low, _, _, _, high = box_stats(list(range(1, 10)) + [100])
        self.assertEqual(low, 1.0)
        self.assertEqual(high, 9.0)

    def test_empty(self):
        with self.assertRaises(DomainError):
            box_stats([])


class TestFigures(unittest.TestCase):
    def test_boxplot_is_byte_identical(self):
        records = tone_records()
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            first = emit_plots(records, PlotKind.BOX_BY_CONDITION, a)
            second = emit_plots(records, "BoxByCondition", b)
            self.assertEqual(first[0].name, "FreqTone_boxplot.svg")
            self.assertEqual(first[0].read_bytes(), second[0].read_bytes())
            text = first[0].read_text()
        self.assertTrue(text.startswith("<svg") or text.startswith("<?xml"))
        self.assertIn("tone-200Hz", text)
        self.assertIn("push force", text)
        self.assertIn("holding force", text)

    def test_boxplot_matches_golden(self):
        golden = GOLDEN_DIR / "VolTone_boxplot.svg"
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_plots(volume_records(), PlotKind.BOX_BY_CONDITION, tmp)[0]
            self.assertEqual(path.name, golden.name)
            self.assertEqual(path.read_text(), golden.read_text())

    def test_labels_replace_condition_ids(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_plots(
                tone_records(),
                PlotKind.BOX_BY_CONDITION,
                tmp,
                labels={"tone-50Hz": "fifty"},
            )[0]
            self.assertIn("fifty", path.read_text())

    def test_heatmap(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_plots(tone_records(), PlotKind.HEATMAP, tmp)
            self.assertEqual(paths[0].name, "FreqTone_holding_force_heatmap.svg")
            self.assertIn("<rect", paths[0].read_text())

    def test_heatmap_svg_deterministic(self):
        matrix = pairwise_matrix({"a": [1, 2, 3], "b": [4, 5, 6], "c": [2, 4, 6]})
        self.assertEqual(heatmap_svg(matrix), heatmap_svg(matrix))

    def test_relaxation(self):
        records = relaxation_records()
        heights, table = relaxation_table(records)
        self.assertEqual(heights, [30.0, 40.0, 50.0])
        self.assertEqual(table["vib"][30.0], (10.0, 4.0))
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_plots(records, PlotKind.RELAXATION_BY_HEIGHT, tmp)
            self.assertEqual(paths[0].name, "HeightRelaxation_relaxation.svg")
            self.assertIn("Reduction (%)", paths[0].read_text())

    def test_relaxation_skips_invalid(self):
        records = [_record("HeightRelaxation", "h30-vib", 0, 1.0, 2.0, valid=False)]
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DomainError):
                emit_plots(records, PlotKind.RELAXATION_BY_HEIGHT, tmp)

    def test_empty_records_write_nothing(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DomainError):
                emit_plots([], PlotKind.BOX_BY_CONDITION, tmp)
            self.assertEqual(list(Path(tmp).iterdir()), [])


if __name__ == "__main__":
    unittest.main()
