#!/usr/bin/env python3
"""
DEM Core Tests - contact law, stability bound, neighbor search, determinism
"""

import json
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import from tests
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from jamgrip.dem_core import (  # noqa: E402
    ContactParams,
    Geometry,
    SimConfig,
    build_world,
    contact_force,
    kinetic_energy,
    make_world,
    neighbor_pairs,
    packing_fraction,
    run_block,
    save_snapshot,
    snapshot,
    stability_limit,
    step,
    world_from_snapshot,
)
from jamgrip.errors import (  # noqa: E402
    ConfigurationError,
    DomainError,
    NumericalBlowupError,
)
from jamgrip.invariants import (  # noqa: E402
    check_determinism,
    check_momentum,
    check_neighbor_grid,
    small_config,
)
from jamgrip.membrane import membrane_grain_contacts  # noqa: E402
from jamgrip.oracles import brute_force_pairs  # noqa: E402

FREE_SPACE = Geometry(object_enabled=False, floor_enabled=False)


class TestContactLaw(unittest.TestCase):
    """Single-contact force evaluation."""

    def setUp(self):
        self.params = ContactParams()

    def test_static_overlap_is_spring_only(self):
        force = contact_force(0.1, (0.0, 0.0), (0.0, 1.0), self.params)
        np.testing.assert_allclose(force, [0.0, 1.6], atol=1e-12)

    def test_approach_adds_damping(self):
        still = contact_force(0.1, (0.0, 0.0), (0.0, 1.0), self.params)
        closing = contact_force(0.1, (0.0, -10.0), (0.0, 1.0), self.params)
        self.assertGreater(closing[1], still[1])

    def test_normal_force_never_attractive(self):
        force = contact_force(0.001, (0.0, 1e6), (0.0, 1.0), self.params)
        np.testing.assert_allclose(force, [0.0, 0.0], atol=1e-12)

    def test_tangential_force_capped_by_friction(self):
        force = contact_force(
            0.1, (0.0, 0.0), (0.0, 1.0), self.params, slip=(10.0, 0.0)
        )
        self.assertAlmostEqual(force[1], 1.6)
        self.assertAlmostEqual(abs(force[0]), self.params.mu * 1.6)

    def test_negative_overlap_rejected(self):
        with self.assertRaises(DomainError):
            contact_force(-0.1, (0.0, 0.0), (0.0, 1.0), self.params)

    def test_params_validation(self):
        with self.assertRaises(ConfigurationError):
            ContactParams(k_n=0.0)
        with self.assertRaises(ConfigurationError):
            ContactParams(damping_ratio=1.5)

    def test_scaled(self):
        scaled = self.params.scaled(stiffness=1.1)
        self.assertAlmostEqual(scaled.k_n, 17.6)
        self.assertAlmostEqual(scaled.k_t, 13.2)
        self.assertEqual(scaled.mu, self.params.mu)


class TestSimConfig(unittest.TestCase):
    """Configuration validation and serialization."""

    def test_default_timestep_is_stable(self):
        config = SimConfig()
        self.assertLessEqual(config.dt, config.stability_limit())
        config.validate()

    def test_stability_limit_formula(self):
        self.assertAlmostEqual(
            stability_limit(0.0576, 16.0), 0.2 * math.sqrt(0.0576 / 16.0) * 1e-3
        )

    def test_large_timestep_rejected(self):
        with self.assertRaises(ConfigurationError):
            SimConfig(dt=1e-4).validate()

    def test_bad_radius_distribution(self):
        with self.assertRaises(ConfigurationError):
            SimConfig(radius_spread=1.0).validate()

    def test_json_round_trip(self):
        config = SimConfig(grain_count=123, rng_seed=7)
        again = SimConfig.from_json(json.dumps(config.to_dict()))
        self.assertEqual(config, again)

    def test_world_rejects_unstable_step(self):
        world = make_world([[0.0, 10.0]], [1.0], geometry=FREE_SPACE)
        with self.assertRaises(ConfigurationError):
            run_block(world, np.zeros(1), dt=1e-3)


class TestNeighborSearch(unittest.TestCase):
    """Grid neighbor search agrees with brute force."""

    def test_matches_brute_force(self):
        check_neighbor_grid(seed=3, grains=300)

    def test_touching_is_not_overlapping(self):
        world = make_world([[0.0, 10.0], [2.0, 10.0]], [1.0, 1.0])
        self.assertEqual(neighbor_pairs(world), [])

    def test_small_overlap_found(self):
        positions = np.array([[0.0, 10.0], [1.9, 10.0], [10.0, 10.0]])
        radii = np.array([1.0, 1.0, 1.0])
        world = make_world(positions, radii)
        self.assertEqual(neighbor_pairs(world), [(0, 1)])
        self.assertEqual(brute_force_pairs(positions, radii), [(0, 1)])


class TestIntegration(unittest.TestCase):
    """Time stepping behaviour."""

    def test_momentum_conserved_without_external_forces(self):
        check_momentum(seed=1, grains=100)

    def test_free_fall(self):
        world = make_world([[0.0, 100.0]], [1.0], geometry=FREE_SPACE)
        run_block(world, np.zeros(1000))
        self.assertAlmostEqual(world.velocities[0, 1], -9810.0 * 0.01, places=6)
        self.assertAlmostEqual(world.time, 0.01)

    def test_grain_rests_on_floor(self):
        world = make_world([[30.0, 0.99]], [1.0])
        for _ in range(20):
            run_block(world, np.zeros(1000))
        self.assertGreater(world.positions[0, 1], 0.9)
        self.assertLess(abs(world.velocities[0, 1]), 1.0)

    def test_rebound_matches_dashpot_restitution(self):
        zeta = 0.05
        params = ContactParams(damping_ratio=zeta, mu=0.0)
        world = make_world(
            [[0.0, 11.0]],
            [1.0],
            params=params,
            geometry=Geometry(object_enabled=False),
        )
        block = np.zeros(10)
        rising = False
        apex = -math.inf
        for _ in range(5000):
            run_block(world, block)
            vy = world.velocities[0, 1]
            if vy > 0:
                rising = True
            if rising:
                apex = max(apex, world.positions[0, 1])
                if vy < 0:
                    break
        restitution = math.exp(-math.pi * zeta / math.sqrt(1.0 - zeta**2))
        ratio = (apex - 1.0) / 10.0
        self.assertAlmostEqual(ratio / restitution**2, 1.0, delta=0.05)

    def test_step_advances_clock(self):
        world = make_world([[0.0, 10.0]], [1.0], geometry=FREE_SPACE)
        step(world)
        self.assertEqual(world.step_index, 1)

    def test_blowup_detected(self):
        world = make_world([[0.0, 10.0]], [1.0], geometry=FREE_SPACE)
        world.velocities[0] = [np.inf, 0.0]
        with self.assertRaises(NumericalBlowupError):
            run_block(world, np.zeros(3), phase="test")

    def test_kinetic_energy_units(self):
        world = make_world(
            [[0.0, 10.0]], [1.0], masses=[1.0], velocities=[[1000.0, 0.0]]
        )
        # 1 g at 1 m/s
        self.assertAlmostEqual(kinetic_energy(world), 0.5e-3)


class TestWorldBuilding(unittest.TestCase):
    """Seeded pack construction inside the membrane."""

    @classmethod
    def setUpClass(cls):
        cls.world = build_world(small_config(seed=2, grains=60))

    def test_grains_inside_membrane(self):
        from jamgrip.membrane import grains_outside

        outside = grains_outside(self.world.membrane, self.world.positions)
        self.assertEqual(len(outside), 0)

    def test_clock_reset_after_settling(self):
        self.assertEqual(self.world.time, 0.0)
        self.assertEqual(self.world.step_index, 0)

    def test_same_seed_same_world(self):
        again = build_world(small_config(seed=2, grains=60))
        np.testing.assert_array_equal(self.world.positions, again.positions)

    def test_copy_is_independent(self):
        clone = self.world.copy()
        clone.positions[0, 0] += 1.0
        clone.membrane.positions[0, 0] += 1.0
        self.assertNotEqual(clone.positions[0, 0], self.world.positions[0, 0])
        self.assertNotEqual(
            clone.membrane.positions[0, 0], self.world.membrane.positions[0, 0]
        )

    def test_reruns_bit_identical(self):
        check_determinism(seed=2)

    def test_snapshot_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_snapshot(self.world, Path(tmp) / "snap.json")
            data = json.loads(path.read_text())
        again = world_from_snapshot(data)
        np.testing.assert_array_equal(again.positions, self.world.positions)
        self.assertEqual(snapshot(again)["mount"], snapshot(self.world)["mount"])


class TestSettledPack(unittest.TestCase):
    """A full-size pack straight out of build_world."""

    @classmethod
    def setUpClass(cls):
        cls.world = build_world(SimConfig(grain_count=300, rng_seed=0))

    def test_energy_does_not_grow_at_rest(self):
        world = self.world.copy()
        energy = kinetic_energy(world)
        for index in range(1000):
            step(world)
            now = kinetic_energy(world)
            self.assertLessEqual(now - energy, 1e-9, f"step {index}")
            energy = now

    def test_packing_fraction(self):
        fraction = packing_fraction(self.world)
        self.assertGreaterEqual(fraction, 0.70)
        self.assertLessEqual(fraction, 0.88)

    def test_single_grain_rests_on_membrane(self):
        config = SimConfig(grain_count=1, rng_seed=3)
        world = build_world(config)
        self.assertLess(float(np.linalg.norm(world.velocities[0])), 1.0)
        self.assertLess(world.positions[0, 1], config.mount_height - 15.0)
        contacts = membrane_grain_contacts(world.membrane, world)
        self.assertTrue(any(c.grain == 0 for c in contacts))


if __name__ == "__main__":
    unittest.main()
