"""Test module for the packenv module."""

import json
import os
import tempfile
import unittest

import numpy as np

from packsolver.gridgeom import INFEASIBLE
from packsolver.packenv import (
    ActionTuple, ContainerSpec, PackingEnv, PackingState, altitude_field,
    landing_altitude, place, utility,
)
from packsolver.shapelib import (
    Item, ShapeDataset, VoxelShape, emit_problem, footprint_maps, gen_polycubes,
)


def box(name, nx, ny, nz):
    return VoxelShape(name, np.ones((nx, ny, nz), dtype=bool))


def lowest_action(state, item):
    """Raster-first feasible anchor over the spins, or None."""
    scale = state.spec.scale(item.shape)
    for theta in range(state.spec.rotations):
        field = altitude_field(state.heights, item.footprint(theta, scale), state.spec.sz)
        xs, ys = np.nonzero(field != INFEASIBLE)
        if len(xs):
            first = np.lexsort((xs, ys))[0]
            lx, ly = int(xs[first]), int(ys[first])
            return ActionTuple(theta, lx, ly, int(field[lx, ly]))
    return None


class PackEnvTest(unittest.TestCase):
    """Class for testing the packenv module."""

    @classmethod
    def setUpClass(cls):
        """Create the shapes and container used by the tests."""
        cls.spec = ContainerSpec(10, 10, 10)
        cls.cube = box("cube", 2, 2, 2)
        cls.tall = box("tall", 1, 1, 3)
        cls.arch = VoxelShape.from_voxels(
            "arch", [(0, 0, 0), (2, 0, 0), (0, 0, 1), (1, 0, 1), (2, 0, 1)]
        )
        cls.tricube = VoxelShape.from_voxels("tri-l", [(0, 0, 0), (1, 0, 0), (0, 1, 0)])
        cls.polycubes = ShapeDataset(gen_polycubes())

    def test_landing_cases(self):
        """Test landing altitudes on flat and uneven floors."""
        heights = np.zeros((10, 10), dtype=np.int64)
        self.assertEqual(0, landing_altitude(heights, footprint_maps(self.cube, 0), 3, 4))

        step = np.zeros((2, 1), dtype=np.int64)
        step[1, 0] = 2
        self.assertEqual(2, landing_altitude(step, footprint_maps(box("bar", 2, 1, 1), 0), 0, 0))

        bump = np.array([[0], [3], [0]], dtype=np.int64)
        self.assertEqual(2, landing_altitude(bump, footprint_maps(self.arch, 0), 0, 0))

    def test_landing_infeasible(self):
        """Test anchors off the container or under the ceiling fail."""
        heights = np.zeros((10, 10), dtype=np.int64)
        fp = footprint_maps(self.cube, 0)
        self.assertEqual(INFEASIBLE, landing_altitude(heights, fp, 9, 0))
        self.assertEqual(INFEASIBLE, landing_altitude(heights, fp, -1, 0))
        self.assertEqual(INFEASIBLE, landing_altitude(heights, fp, 0, 0, sz=1))
        self.assertEqual(0, landing_altitude(heights, fp, 8, 8, sz=2))

    def test_altitude_field(self):
        """Test the vectorised field agrees with single drops."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            heights = rng.integers(0, 6, size=(7, 6))
            for shape in (self.arch, self.tricube, self.cube):
                for spin in range(4):
                    fp = footprint_maps(shape, 0, spin)
                    field = altitude_field(heights, fp, 8)
                    for lx in range(7):
                        for ly in range(6):
                            self.assertEqual(landing_altitude(heights, fp, lx, ly, 8), field[lx, ly])

    def test_place_cube(self):
        """Test a cube in an empty container."""
        state = PackingState(self.spec)
        after, reward, done = place(state, Item(self.cube, 0, 0), (0, 0, 0, 0))
        self.assertFalse(done)
        self.assertAlmostEqual(0.008, reward)
        self.assertEqual([[2, 2], [2, 2]], after.heights[:2, :2].tolist())
        self.assertEqual(8, after.heights.sum())
        self.assertEqual(0, state.heights.sum())
        self.assertEqual(1, len(after.placements))
        self.assertAlmostEqual(0.008, utility(after))

    def test_place_arch(self):
        """Test heights under an arch rise to its top."""
        state = PackingState(ContainerSpec(3, 1, 10))
        state.heights[:, 0] = [0, 3, 0]
        after, _, done = place(state, Item(self.arch, 0, 0), (0, 0, 0, 2))
        self.assertFalse(done)
        self.assertEqual([4, 4, 4], after.heights[:, 0].tolist())

    def test_place_failures(self):
        """Test infeasible and inconsistent actions end the episode."""
        state = PackingState(ContainerSpec(4, 4, 2))
        after, reward, done = place(state, Item(self.tall, 0, 0), (0, 0, 0, 0))
        self.assertTrue(done)
        self.assertEqual(0.0, reward)
        self.assertEqual(0, after.heights.sum())
        self.assertEqual(1, after.step)

        after, reward, done = place(state, Item(self.cube, 0, 0), (0, 0, 0, 1))
        self.assertTrue(done)
        self.assertEqual(0.0, reward)
        self.assertRaises(ValueError, place, after, Item(self.cube, 0, 0), (0, 0, 0, 0))
        self.assertRaises(TypeError, place, state, self.cube, (0, 0, 0, 0))
        self.assertRaises(TypeError, place, None, Item(self.cube, 0, 0), (0, 0, 0, 0))

    def test_env_sequence(self):
        """Test an episode ends when the stream runs out."""
        env = PackingEnv(self.spec)
        observation = env.reset([Item(self.cube, 0, 0)] * 3)
        self.assertEqual(3, observation.remaining)
        self.assertEqual(4, len(observation.footprints))
        total = 0.0
        for lx in (0, 2, 4):
            observation, reward, done = env.step((0, lx, 0, 0))
            total += reward
        self.assertTrue(done)
        self.assertIsNone(observation.item)
        self.assertEqual(3, len(env.trace))
        self.assertAlmostEqual(utility(env.state), total)
        self.assertRaises(ValueError, env.step, (0, 6, 0, 0))

    def test_env_first_action_infeasible(self):
        """Test an infeasible first action gives an empty episode."""
        env = PackingEnv(self.spec)
        env.reset([Item(self.cube, 0, 0)] * 3)
        _, reward, done = env.step((0, 9, 9, 0))
        self.assertTrue(done)
        self.assertEqual(0.0, reward)
        self.assertEqual(1, len(env.trace))
        self.assertEqual(0.0, utility(env.state))

    def test_env_empty(self):
        """Test an empty stream is over at once."""
        env = PackingEnv(self.spec)
        env.reset([])
        self.assertTrue(env.done)
        self.assertRaises(ValueError, env.step, (0, 0, 0, 0))

    def test_env_invalid(self):
        """Test the environment validates its inputs."""
        self.assertRaises(TypeError, PackingEnv, (10, 10, 10))
        env = PackingEnv(self.spec)
        self.assertRaises(TypeError, env.reset, [self.cube])
        problem = emit_problem(self.polycubes, (16, 16, 15), 0, dh=6.0)
        self.assertRaises(ValueError, env.reset, problem)

    def test_episode_invariants(self):
        """Test heights, volume and bounds along random episodes."""
        spec = ContainerSpec.desk().replace(sx=8, sy=8, sz=6)
        for seed in range(5):
            problem = emit_problem(self.polycubes, spec.dims, seed, dh=spec.dh)
            env = PackingEnv(spec)
            env.reset(problem, self.polycubes)
            while not env.done:
                before = env.state.heights.copy()
                action = lowest_action(env.state, env.current_item)
                if action is None:
                    env.terminate()
                    break
                env.step(action)
                self.assertTrue(np.all(env.state.heights >= before))
                self.assertTrue(np.all(env.state.heights <= spec.sz))
            self.assertEqual(
                env.state.packed_volume, sum(p.volume for p in env.state.placements)
            )
            self.assertLessEqual(utility(env.state), 1.0)

    def test_partial_matches_rescan(self):
        """Test partial heightmap updates equal a full rescan."""
        spec = ContainerSpec.desk().replace(sx=8, sy=8, sz=8)
        problem = emit_problem(self.polycubes, spec.dims, 3, dh=spec.dh)
        partial, full = PackingEnv(spec), PackingEnv(spec, partial=False)
        partial.reset(problem, self.polycubes)
        full.reset(problem, self.polycubes)
        while not partial.done:
            action = lowest_action(partial.state, partial.current_item)
            if action is None:
                break
            partial.step(action)
            full.step(action)
            self.assertTrue(np.array_equal(partial.state.heights, full.state.heights))
        self.assertEqual(partial.trace, full.trace)

    def test_export_trace(self):
        """Test the trace is written as JSON lines."""
        env = PackingEnv(self.spec)
        env.reset([Item(self.cube, 0, 0)] * 2)
        env.step((0, 0, 0, 0))
        env.step((1, 2, 0, 0))
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "trace.jsonl")
            env.export_trace(path)
            with open(path, "r", encoding="utf-8") as trace_file:
                records = [json.loads(line) for line in trace_file]
        self.assertEqual(2, len(records))
        self.assertEqual({"step", "shape", "spin", "lx", "ly", "lz", "reward", "utility"}, set(records[0]))
        self.assertEqual(1, records[1]["spin"])

    def test_container_spec(self):
        """Test presets and validation of container settings."""
        lab = ContainerSpec.lab()
        self.assertEqual((32, 32, 30), lab.dims)
        self.assertEqual((2, 1, 500), (lab.dg, lab.dz, lab.n_candidates))
        self.assertEqual(6, lab.scale(gen_polycubes()[0]))
        self.assertEqual(ContainerSpec(16, 16, 15, dh=6.0), ContainerSpec.desk())
        self.assertEqual(4, ContainerSpec.desk().replace(dg=4).dg)
        self.assertRaises(ValueError, lab.replace, depth=3)
        self.assertRaises(ValueError, ContainerSpec, 10, 10, 10, rotations=5)
        self.assertRaises(ValueError, ContainerSpec, 0, 10, 10)
        self.assertRaises(TypeError, ContainerSpec, 1.5, 10, 10)


if __name__ == "__main__":
    unittest.main()
