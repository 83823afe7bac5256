#!/usr/bin/env python3
"""
Harness Tests - plan expansion, seeded schedules, record persistence, summaries
"""

import json
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from jamgrip.errors import ConfigurationError, DomainError  # noqa: E402
from jamgrip.harness import (  # noqa: E402
    RECORD_COLUMNS,
    ExperimentKind,
    ExperimentPlan,
    RecordWriter,
    TrialRecord,
    batch_config,
    build_plan,
    cycle_order,
    read_records,
    run_plan,
    schedule,
    summarize,
    trial_seed,
    write_records,
    write_summary,
)

SHORT_CYCLE = {
    "start_height": 60.0,
    "push_height": 45.0,
    "lift_height": 55.0,
    "axis_speed": 150.0,
    "vacuum_hold": 0.1,
    "dwell_duration": 0.01,
    "release_pulse_count": 1,
    "release_pulse_duration": 0.02,
    "pre_grip_duration": 0.01,
}
SMALL_PACK = {"grain_count": 60, "growth_time": 0.01, "settle_max_time": 0.05}


def fake_trial(plan, job):
    """Deterministic stand-in for a simulated trial."""
    return TrialRecord(
        plan=plan.name,
        condition_id=job.condition_id,
        batch_id=job.batch,
        cycle=job.cycle,
        seed=job.seed,
        push_force_n=float(job.condition_index + 1),
        holding_force_n=float(job.condition_index + 1) + 0.5 * job.cycle,
        interlock_n=None,
        valid=not (job.batch == 0 and job.cycle == 0 and job.condition_index == 0),
        trace_path="",
        wall_s=0.0,
    )


class TestPlanConstruction(unittest.TestCase):
    def test_frequency_tone_table(self):
        plan = build_plan(ExperimentKind.FREQ_TONE)
        self.assertEqual(len(plan.conditions), 12)
        self.assertEqual(plan.batch_count, 5)
        self.assertEqual(plan.replicates, 10)
        self.assertEqual(plan.trial_count, 600)
        self.assertEqual(plan.conditions[0].condition_id, "tone-10Hz")
        self.assertEqual(plan.grip_cycle.push_height, 29.0)

    def test_chirp_tables(self):
        sweep = build_plan("FreqSweep")
        pulse = build_plan("FreqPulse")
        self.assertEqual(len(sweep.conditions), 8)
        self.assertEqual(sweep.conditions[0].condition_id, "sweep-1-100Hz")
        self.assertEqual(pulse.conditions[0].condition_id, "pulse-1-100Hz")
        self.assertEqual(sweep.batch_count, 3)

    def test_volume_tables(self):
        tones = build_plan(ExperimentKind.VOL_TONE)
        ramps = build_plan(ExperimentKind.VOL_SWEEP)
        self.assertEqual(len(tones.conditions), 7)
        self.assertEqual(tones.conditions[-1].condition_id, "vol-150pct")
        self.assertEqual(len(ramps.conditions), 6)

    def test_relaxation_table(self):
        plan = build_plan(ExperimentKind.HEIGHT_RELAXATION)
        self.assertEqual(len(plan.conditions), 86)
        self.assertEqual(plan.replicates, 1)
        self.assertEqual(plan.batch_count, 1)
        self.assertEqual(plan.trial_count, 86)
        self.assertEqual(plan.conditions[0].condition_id, "h27-vib")
        self.assertEqual(plan.conditions[1].condition_id, "h27-silent")

    def test_levels_subset(self):
        plan = build_plan(
            ExperimentKind.FREQ_SWEEP, levels=[[100, 200]], replicates=2
        )
        self.assertEqual(len(plan.conditions), 1)
        self.assertEqual(plan.conditions[0].label, "100-200Hz")
        with self.assertRaises(DomainError):
            build_plan(ExperimentKind.FREQ_TONE, levels=[])

    def test_unknown_experiment(self):
        with self.assertRaises(ValueError):
            build_plan("Juggling")

    def test_plan_validation(self):
        plan = build_plan(ExperimentKind.FREQ_TONE, levels=[200])
        with self.assertRaises(ConfigurationError):
            plan.with_overrides(jitter=0.5)
        with self.assertRaises(ConfigurationError):
            plan.with_overrides(conditions=plan.conditions * 2)

    def test_json_round_trip(self):
        plan = build_plan(ExperimentKind.VOL_PULSE, levels=[[0, 150]])
        again = ExperimentPlan.from_json(plan.to_json())
        self.assertEqual(again.to_json(), plan.to_json())


class TestSchedule(unittest.TestCase):
    def setUp(self):
        self.plan = build_plan(
            ExperimentKind.FREQ_TONE,
            levels=[50, 200, 800],
            replicates=3,
            batch_count=2,
            rng_seed=7,
        )

    def test_seed_depends_on_every_identifier(self):
        base = trial_seed(7, 0, 0, 0)
        self.assertEqual(base, trial_seed(7, 0, 0, 0))
        self.assertNotEqual(base, trial_seed(8, 0, 0, 0))
        self.assertNotEqual(base, trial_seed(7, 1, 0, 0))
        self.assertNotEqual(base, trial_seed(7, 0, 1, 0))
        self.assertNotEqual(base, trial_seed(7, 0, 0, 1))

    def test_each_condition_once_per_cycle(self):
        for batch in range(2):
            for cycle in range(3):
                order = cycle_order(self.plan, batch, cycle)
                self.assertEqual(sorted(order), [0, 1, 2])

    def test_schedule_is_reproducible(self):
        jobs = schedule(self.plan)
        self.assertEqual(len(jobs), self.plan.trial_count)
        self.assertEqual(jobs, schedule(self.plan))
        keys = {(j.condition_id, j.batch, j.cycle) for j in jobs}
        self.assertEqual(len(keys), len(jobs))

    def test_batches_differ(self):
        first = batch_config(self.plan, 0)
        second = batch_config(self.plan, 1)
        self.assertNotEqual(first.rng_seed, second.rng_seed)
        self.assertEqual(first.mount_height, self.plan.grip_cycle.start_height)
        ratio = first.contact.k_n / self.plan.sim.contact.k_n
        self.assertLessEqual(abs(ratio - 1.0), self.plan.jitter + 1e-12)


class TestRecords(unittest.TestCase):
    def _record(self, **changes):
        fields = dict(
            plan="FreqTone",
            condition_id="tone-200Hz",
            batch_id=0,
            cycle=1,
            seed=42,
            push_force_n=12.5,
            holding_force_n=3.25,
            interlock_n=None,
            valid=True,
            trace_path="traces/b0_c1_tone-200Hz.csv",
            wall_s=1.5,
        )
        fields.update(changes)
        return TrialRecord(**fields)

    def test_write_and_read(self):
        records = [self._record(), self._record(cycle=2, interlock_n=1.75)]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records(records, Path(tmp) / "records.csv")
            header = path.read_text().splitlines()[0]
            again = read_records(path)
        self.assertEqual(header, ",".join(RECORD_COLUMNS))
        self.assertEqual(again, records)

    def test_invalid_record_keeps_blank_metrics(self):
        record = self._record(
            valid=False, push_force_n=math.nan, holding_force_n=math.nan
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records([record], Path(tmp) / "records.csv")
            again = read_records(path)[0]
        self.assertFalse(again.valid)
        self.assertTrue(math.isnan(again.push_force_n))

    def test_writer_appends(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "records.csv"
            with RecordWriter(path) as writer:
                writer.write(self._record())
            with RecordWriter(path) as writer:
                writer.write(self._record(cycle=5))
            self.assertEqual(len(read_records(path)), 2)
            self.assertEqual(len(path.read_text().splitlines()), 3)

    def test_missing_file_reads_empty(self):
        self.assertEqual(read_records("/nonexistent/records.csv"), [])

    def test_foreign_csv_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "other.csv"
            path.write_text("a,b\n1,2\n")
            with self.assertRaises(DomainError):
                read_records(path)

    def test_torn_last_row_dropped(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records([self._record()], Path(tmp) / "records.csv")
            with open(path, "a") as f:
                f.write("FreqTone,tone-200Hz,0,2,7,12.5,3.25,,1,traces")
            size = path.stat().st_size
            self.assertEqual(read_records(path), [self._record()])
            self.assertEqual(path.stat().st_size, size)
            self.assertEqual(read_records(path, repair=True), [self._record()])
            self.assertTrue(path.read_text().endswith("\n"))
            self.assertEqual(len(path.read_text().splitlines()), 2)

    def test_short_last_row_dropped(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records([self._record()], Path(tmp) / "records.csv")
            with open(path, "a") as f:
                f.write("FreqTone,tone-200Hz,0,2,7,12.5,3\n")
            self.assertEqual(read_records(path, repair=True), [self._record()])
            self.assertEqual(len(path.read_text().splitlines()), 2)

    def test_torn_header_reads_empty(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "records.csv"
            path.write_text("plan,condition_id,bat")
            self.assertEqual(read_records(path, repair=True), [])
            self.assertEqual(path.stat().st_size, 0)

    def test_malformed_row_rejected(self):
        good = ",".join(self._record().to_row())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "records.csv"
            path.write_text(
                ",".join(RECORD_COLUMNS)
                + "\nFreqTone,tone-200Hz,0,x,7,12.5,3.25,,1,,0.0\n"
                + good
                + "\n"
            )
            with self.assertRaises(DomainError):
                read_records(path)

    def test_writer_cuts_partial_row(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records([self._record()], Path(tmp) / "records.csv")
            with open(path, "a") as f:
                f.write("FreqTone,tone-200Hz,0,2,7,12.5,3")
            with RecordWriter(path) as writer:
                writer.write(self._record(cycle=3))
            lines = path.read_text().splitlines()
            self.assertEqual(len(lines), 3)
            self.assertEqual(lines[-1], ",".join(self._record(cycle=3).to_row()))
            self.assertEqual(
                [r.cycle for r in read_records(path)], [1, 3]
            )

    def test_comparable_ignores_wall_time(self):
        self.assertEqual(
            self._record(wall_s=1.0).comparable(),
            self._record(wall_s=9.0).comparable(),
        )


class TestRunPlan(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.plan = build_plan(
            ExperimentKind.FREQ_TONE,
            levels=[50, 200],
            replicates=2,
            batch_count=1,
            output_dir=self.tmp.name,
        )

    def tearDown(self):
        self.tmp.cleanup()

    def test_records_in_schedule_order(self):
        with patch("jamgrip.harness.execute_trial", side_effect=fake_trial):
            records = run_plan(self.plan, workers=1, resume=False)
        jobs = schedule(self.plan)
        self.assertEqual(
            [r.key for r in records],
            [(j.condition_id, j.batch, j.cycle) for j in jobs],
        )
        self.assertEqual(read_records(self.plan.records_path), records)
        self.assertTrue((self.plan.directory / "plan.json").exists())

    def test_resume_skips_recorded_trials(self):
        with patch(
            "jamgrip.harness.execute_trial", side_effect=fake_trial
        ) as first:
            run_plan(self.plan, workers=1, resume=False)
        self.assertEqual(first.call_count, 4)
        with patch(
            "jamgrip.harness.execute_trial", side_effect=fake_trial
        ) as second:
            records = run_plan(self.plan, workers=1, resume=True)
        self.assertEqual(second.call_count, 0)
        self.assertEqual(len(records), 4)
        self.assertEqual(len(read_records(self.plan.records_path)), 4)

    def test_resume_after_interrupted_write(self):
        with patch("jamgrip.harness.execute_trial", side_effect=fake_trial):
            run_plan(self.plan, workers=1, resume=False)
        data = self.plan.records_path.read_bytes()
        self.plan.records_path.write_bytes(data[:-6])
        with patch(
            "jamgrip.harness.execute_trial", side_effect=fake_trial
        ) as rerun:
            records = run_plan(self.plan, workers=1, resume=True)
        self.assertEqual(rerun.call_count, 1)
        self.assertEqual(read_records(self.plan.records_path), records)
        self.assertEqual(
            len(self.plan.records_path.read_text().splitlines()), 5
        )

    def test_fresh_run_discards_old_records(self):
        with patch("jamgrip.harness.execute_trial", side_effect=fake_trial):
            run_plan(self.plan, workers=1, resume=False)
            run_plan(self.plan, workers=1, resume=False)
        self.assertEqual(len(read_records(self.plan.records_path)), 4)


class TestSummaries(unittest.TestCase):
    def setUp(self):
        self.plan = build_plan(
            ExperimentKind.FREQ_TONE,
            levels=[50, 200, 800],
            replicates=4,
            batch_count=1,
        )
        self.records = [fake_trial(self.plan, job) for job in schedule(self.plan)]

    def test_validity_and_quartiles(self):
        summary = summarize(self.records, self.plan)
        rows = {v.condition_id: v for v in summary.validity}
        self.assertEqual(rows["tone-50Hz"].planned, 4)
        self.assertEqual(rows["tone-50Hz"].valid, 3)
        self.assertEqual(rows["tone-200Hz"].sampled, 4)
        first = summary.conditions[0]
        self.assertEqual(first.condition_id, "tone-50Hz")
        self.assertEqual(first.push.median, 1.0)

    def test_comparison_matrix(self):
        summary = summarize(self.records, self.plan, metric="push_force")
        self.assertEqual(
            summary.matrix.labels, [c.condition_id for c in self.plan.conditions]
        )
        self.assertEqual(summary.matrix.u[0, 1], 0.0)

    def test_down_sampling(self):
        summary = summarize(self.records, self.plan, sampled_per_condition=2)
        self.assertTrue(all(c.n == 2 for c in summary.conditions))

    def test_single_condition_gives_empty_matrix(self):
        only = [r for r in self.records if r.condition_id == "tone-200Hz"]
        summary = summarize(only)
        self.assertEqual(summary.matrix.pair_count, 0)

    def test_bad_input(self):
        with self.assertRaises(DomainError):
            summarize([])
        with self.assertRaises(DomainError):
            summarize(self.records, metric="interlock")

    def test_write_summary(self):
        summary = summarize(self.records, self.plan)
        with tempfile.TemporaryDirectory() as tmp:
            directory = write_summary(summary, tmp)
            data = json.loads((directory / "summary.json").read_text())
            validity = (directory / "validity.csv").read_text().splitlines()
            self.assertTrue(
                (directory / "comparisons_holding_force.csv").exists()
            )
        self.assertEqual(data["metric"], "holding_force")
        self.assertEqual(
            validity[0], "condition_id,planned,executed,valid,sampled"
        )
        self.assertEqual(len(validity), 4)


class TestRealTrial(unittest.TestCase):
    """One short simulated trial through the whole pipeline."""

    def test_single_trial(self):
        with tempfile.TemporaryDirectory() as tmp:
            plan = build_plan(
                ExperimentKind.FREQ_TONE,
                levels=[200],
                replicates=1,
                batch_count=1,
                output_dir=tmp,
                cycle_overrides=SHORT_CYCLE,
                sim_overrides=SMALL_PACK,
            )
            records = run_plan(plan, workers=1, resume=False)
            self.assertEqual(len(records), 1)
            record = records[0]
            if record.valid:
                self.assertTrue((plan.directory / record.trace_path).exists())
                self.assertTrue(math.isfinite(record.push_force_n))
                self.assertGreaterEqual(record.holding_force_n, 0.0)
            self.assertEqual(read_records(plan.records_path)[0].key, record.key)


if __name__ == "__main__":
    unittest.main()
