#!/usr/bin/env python3
"""
Acceptance Tests - full-size simulated experiments

These take tens of minutes on a workstation and only run with
JAMGRIP_ACCEPTANCE=1. Absolute forces are not calibrated, so every check is
about direction and effect existence.
"""

import os
import sys
import tempfile
import unittest

import numpy as np

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from jamgrip.dem_core import SimConfig, build_world  # noqa: E402
from jamgrip.harness import (  # noqa: E402
    ExperimentKind,
    build_plan,
    run_plan,
    summarize,
    write_summary,
)
from jamgrip.invariants import (  # noqa: E402
    OVERLAP_LIMIT,
    check_mann_whitney_oracle,
    check_metric_oracle,
    check_protocol_timings,
    run_invariant_suite,
)
from jamgrip.membrane import PressureState  # noqa: E402
from jamgrip.plots import PlotKind, emit_plots  # noqa: E402
from jamgrip.rig import (  # noqa: E402
    GripCycleConfig,
    Phase,
    RelaxationConfig,
    indentation_stiffness,
    object_contact_count,
    relaxation_protocol,
    relaxation_residuals,
    run_grip_cycle,
)
from jamgrip.waveform import WaveformSpec  # noqa: E402

ACCEPTANCE = os.getenv("JAMGRIP_ACCEPTANCE") == "1"
RELAXATION_HEIGHTS = (35.0, 40.0, 45.0, 50.0, 55.0)


def seeded_world(seed: int, mount_height: float = 100.0):
    sim = SimConfig.from_config().with_overrides(
        rng_seed=seed, mount_height=mount_height
    )
    return build_world(sim)


@unittest.skipUnless(ACCEPTANCE, "set JAMGRIP_ACCEPTANCE=1 to run")
class TestExperimentTrends(unittest.TestCase):
    """Trend-level outcomes of the simulated experiments."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_volume_raises_holding_force(self):
        plan = build_plan(
            ExperimentKind.VOL_TONE,
            levels=[0.0, 75.0, 150.0],
            replicates=10,
            batch_count=3,
            output_dir=self.tmp.name,
        )
        records = run_plan(plan, resume=False)
        self.assertTrue(all(r.valid for r in records))
        summary = summarize(records, plan, sampled_per_condition=0)
        write_summary(summary, plan.directory)
        medians = {c.condition_id: c.holding.median for c in summary.conditions}
        self.assertGreater(medians["vol-150pct"], medians["vol-0pct"])
        labels = summary.matrix.labels
        i, j = labels.index("vol-0pct"), labels.index("vol-150pct")
        self.assertLess(summary.matrix.p[i, j], 0.05)

    def test_vibration_relaxes_residual_force(self):
        cycle = GripCycleConfig.from_config()
        relax = RelaxationConfig.from_config()
        reductions = []
        lower = 0
        for height in RELAXATION_HEIGHTS:
            residual = {True: [], False: []}
            for seed in range(5):
                lift = max(cycle.lift_height, height + 1.0)
                start = max(cycle.start_height, lift + 1.0)
                base = seeded_world(seed, mount_height=start)
                for vibrate in (True, False):
                    trace = relaxation_protocol(
                        base.copy(), height, vibrate, cycle, relax
                    )
                    result = relaxation_residuals(
                        trace, height, vibrate, relax.residual_window
                    )
                    residual[vibrate].append(result.residual_after)
            vibrated = float(np.median(residual[True]))
            silent = float(np.median(residual[False]))
            if vibrated < silent:
                lower += 1
            if silent > 0:
                reductions.append((silent - vibrated) / silent)
        self.assertGreaterEqual(lower, 4)
        self.assertGreaterEqual(float(np.mean(reductions)), 0.2)

    def test_vibration_grows_contact_area(self):
        cycle = GripCycleConfig.from_config().with_overrides(push_height=29.0)
        vacuum = PressureState.from_dict({})
        tone = WaveformSpec.tone(200.0, 150.0)
        wins = 0
        for seed in range(10):
            base = seeded_world(seed, mount_height=cycle.start_height)
            counts = []
            for waveform in (tone, None):
                world = base.copy()
                run_grip_cycle(world, cycle, waveform, vacuum, stop_after=Phase.DWELL)
                self.assertLessEqual(world.max_overlap_ratio, OVERLAP_LIMIT)
                counts.append(object_contact_count(world).grains)
            if counts[0] > counts[1]:
                wins += 1
        self.assertGreaterEqual(wins, 8)

    def test_vacuum_jams_the_pack(self):
        vacuum = PressureState.from_dict({})
        for seed in range(10):
            with self.subTest(seed=seed):
                world = seeded_world(seed)
                jammed = indentation_stiffness(world, vacuum)
                loose = indentation_stiffness(world, None)
                self.assertGreaterEqual(jammed, 2.0 * loose)

    def test_frequency_band_report(self):
        plan = build_plan(
            ExperimentKind.FREQ_TONE,
            levels=[25.0, 150.0, 800.0],
            replicates=5,
            batch_count=2,
            output_dir=self.tmp.name,
        )
        records = run_plan(plan, resume=False)
        summary = summarize(records, plan, sampled_per_condition=0)
        write_summary(summary, plan.directory)
        paths = emit_plots(records, PlotKind.BOX_BY_CONDITION, plan.directory)
        self.assertTrue(all(p.exists() for p in paths))
        order = sorted(
            summary.conditions, key=lambda c: c.holding.median, reverse=True
        )
        print(
            "\nFrequency band ordering by median holding force: "
            + ", ".join(f"{c.condition_id} {c.holding.median:.3f}" for c in order)
        )


@unittest.skipUnless(ACCEPTANCE, "set JAMGRIP_ACCEPTANCE=1 to run")
class TestSelfChecks(unittest.TestCase):
    """Oracle comparisons, DEM invariants and protocol timings."""

    def test_metric_oracle(self):
        check_metric_oracle(count=50)

    def test_mann_whitney_oracle(self):
        check_mann_whitney_oracle(count=200)

    def test_invariant_suite(self):
        failed = [r for r in run_invariant_suite() if not r.passed]
        self.assertEqual(failed, [], [f"{r.name}: {r.detail}" for r in failed])

    def test_protocol_timings(self):
        self.assertIn("2.333", check_protocol_timings())


if __name__ == "__main__":
    unittest.main()
