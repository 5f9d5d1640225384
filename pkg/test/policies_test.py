"""Test module for the policies module."""

import os
import unittest

import numpy as np

from packsolver.candgen import PlacementCandidate, generate_candidates
from packsolver.packenv import ContainerSpec, PackingEnv, PackingState, landing_altitude, utility
from packsolver.policies import (
    BLBFPolicy, FirstFitPolicy, RandomPolicy, hm_score, make_policy, mtpe_score,
    rollout, select_blbf, select_ff, select_hm, select_mtpe, select_random,
)
from packsolver.shapelib import (
    Item, ShapeDataset, VoxelShape, emit_problem, gen_polycubes, rotate24,
)


def box(name, nx, ny, nz):
    return VoxelShape(name, np.ones((nx, ny, nz), dtype=bool))


def candidate(theta, lx, ly, lz, tightness=0.0):
    return PlacementCandidate(theta, lx, ly, lz, 1, tightness)


def mean_utility(name, spec, dataset, seeds):
    utilities = []
    for seed in seeds:
        items = emit_problem(dataset, spec.dims, seed, dh=spec.dh).resolve(dataset)
        state, _ = rollout(spec, items, make_policy(name, spec, seed))
        utilities.append(utility(state))
    return float(np.mean(utilities))


class PoliciesTest(unittest.TestCase):
    """Class for testing the policies module."""

    @classmethod
    def setUpClass(cls):
        """Create the items and datasets used by the tests."""
        cls.spec = ContainerSpec(10, 10, 10)
        cls.cube = Item(box("cube", 2, 2, 2), 0, 0)
        cls.polycubes = ShapeDataset(gen_polycubes())
        cls.small = ContainerSpec(6, 6, 5, dh=6.0, n_candidates=200)

    def test_ff_empty(self):
        """Test first fit starts at the origin."""
        decision = select_ff(PackingState(self.spec), self.cube)
        self.assertEqual((0, 0, 0, 0), tuple(decision.action))

    def test_ff_full(self):
        """Test first fit reports a full container."""
        state = PackingState(self.spec)
        state.heights[:, :] = 10
        self.assertIsNone(select_ff(state, self.cube))

    def test_ff_bound(self):
        """Test first fit stacks 6 cm cubes into a 5 x 5 x 5 block."""
        spec = ContainerSpec.lab()
        monocube = gen_polycubes()[0]
        state, timings = rollout(spec, [Item(monocube, 0, 0)] * 126, FirstFitPolicy(spec))
        self.assertEqual(125, len(state.placements))
        self.assertAlmostEqual(27000 / 30720, utility(state))
        self.assertEqual(126, len(timings))

    def test_blbf(self):
        """Test bottom, then back, then left."""
        candidates = [candidate(0, 4, 0, 1), candidate(1, 5, 3, 0), candidate(0, 2, 3, 0)]
        self.assertEqual((0, 2, 3, 0), tuple(select_blbf(candidates).action))
        self.assertIsNone(select_blbf([]))

    def test_mtpe(self):
        """Test the lowest centre of mass wins."""
        slab = box("slab", 3, 3, 1)
        flat = Item(slab, 0, 0)
        upright = Item(slab, [i for i in range(24) if rotate24(slab, i).dims[2] == 3][0], 0)
        self.assertAlmostEqual(0.5, mtpe_score(candidate(0, 0, 0, 0), flat))
        self.assertAlmostEqual(1.5, mtpe_score(candidate(0, 0, 0, 0), upright))
        decision = select_mtpe([candidate(0, 0, 0, 4), candidate(0, 5, 5, 0)], flat)
        self.assertEqual((0, 5, 5, 0), tuple(decision.action))
        self.assertAlmostEqual(0.5, decision.score)
        self.assertIsNone(select_mtpe([], flat))

    def test_hm_pit(self):
        """Test a matching pit ties with flat ground and wins the tie-break."""
        state = PackingState(ContainerSpec(6, 6, 10))
        state.heights[:, :] = 2
        state.heights[:2, :2] = 0
        candidates = generate_candidates(state, self.cube)
        self.assertEqual(8, hm_score(state.heights, candidates[0], self.cube))
        self.assertEqual(8, hm_score(state.heights, candidate(0, 4, 4, 2), self.cube))
        decision = select_hm(state, candidates, self.cube)
        self.assertEqual((0, 0, 0, 0), tuple(decision.action))

    def test_hm_flat(self):
        """Test a flat floor falls back to the bottom-left-back corner."""
        state = PackingState(self.spec)
        decision = select_hm(state, generate_candidates(state, self.cube), self.cube)
        self.assertEqual((0, 0, 0, 0), tuple(decision.action))

    def test_hm_tower(self):
        """Test the score counts only the heightmap growth."""
        state = PackingState(self.spec)
        state.heights[0, 0] = 2
        block = Item(box("block", 2, 1, 2), 0, 0)
        self.assertEqual(4, hm_score(state.heights, candidate(0, 1, 0, 0), block))
        self.assertEqual(4, hm_score(state.heights, candidate(0, 6, 6, 0), block))

    def test_random_candidates(self):
        """Test candidate draws are uniform."""
        rng = np.random.default_rng(0)
        candidates = [candidate(0, x, 0, 0) for x in range(4)]
        counts = np.zeros(4, dtype=int)
        for _ in range(10000):
            counts[select_random(rng, "candidate", candidates=candidates).action.lx] += 1
        sigma = np.sqrt(10000 * 0.25 * 0.75)
        self.assertTrue(np.all(np.abs(counts - 2500) <= 4 * sigma))

    def test_random_grid(self):
        """Test grid draws stay feasible and follow the seed."""
        state = PackingState(ContainerSpec(2, 2, 10))
        decision = select_random(np.random.default_rng(0), "grid", state, self.cube)
        self.assertEqual((0, 0, 0), tuple(decision.action)[1:])
        self.assertEqual(4, decision.considered)
        state = PackingState(self.spec)
        first = select_random(np.random.default_rng(5), "grid", state, self.cube)
        second = select_random(np.random.default_rng(5), "grid", state, self.cube)
        self.assertEqual(first, second)
        self.assertRaises(ValueError, select_random, np.random.default_rng(0), "walk", state, self.cube)

    def test_make_policy(self):
        """Test policies are built by name."""
        for name in ("ff", "blbf", "mtpe", "hm", "random", "random-pi"):
            self.assertEqual(name, make_policy(name, self.small).name)
        self.assertTrue(make_policy("random-pi", self.small).uses_candidates)
        self.assertFalse(make_policy("random", self.small).uses_candidates)
        self.assertRaises(ValueError, make_policy, "best", self.small)
        self.assertRaises(ValueError, make_policy, "learned", self.small)
        self.assertRaises(TypeError, BLBFPolicy, (6, 6, 5))

    def test_decisions_are_feasible(self):
        """Test every policy only picks feasible placements."""
        for name in ("ff", "blbf", "mtpe", "hm", "random", "random-pi"):
            for seed in range(2):
                policy = make_policy(name, self.small, seed)
                env = PackingEnv(self.small)
                env.reset(emit_problem(self.polycubes, self.small.dims, seed, dh=6.0), self.polycubes)
                while not env.done:
                    item = env.current_item
                    decision = policy.decide(env.state, item)
                    if decision is None:
                        break
                    theta, lx, ly, lz = decision.action
                    fp = item.footprint(theta, self.small.scale(item.shape))
                    self.assertEqual(lz, landing_altitude(env.state.heights, fp, lx, ly, self.small.sz))
                    env.step(decision.action)

    def test_rollout_deterministic(self):
        """Test seeded policies replay the same episode."""
        items = emit_problem(self.polycubes, self.small.dims, 9, dh=6.0).resolve(self.polycubes)
        first, _ = rollout(self.small, items, RandomPolicy(self.small, 9))
        second, _ = rollout(self.small, items, RandomPolicy(self.small, 9))
        self.assertEqual(first.placements, second.placements)

    def test_blbf_beats_random(self):
        """Test bottom-left-back packs denser than random drops."""
        spec = ContainerSpec(8, 8, 6, dh=6.0)
        seeds = range(6)
        self.assertGreater(
            mean_utility("blbf", spec, self.polycubes, seeds),
            mean_utility("random", spec, self.polycubes, seeds),
        )

    @unittest.skipUnless(os.environ.get("PACKSOLVER_SLOW"), "slow acceptance run")
    def test_blbf_separation(self):
        """Test the bottom-left-back margin over random drops at desk scale."""
        spec = ContainerSpec.desk()
        seeds = range(200)
        self.assertGreaterEqual(
            mean_utility("blbf", spec, self.polycubes, seeds),
            mean_utility("random", spec, self.polycubes, seeds) + 0.10,
        )


if __name__ == "__main__":
    unittest.main()
