"""Test module for the learner module."""

import copy
import csv
import os
import tempfile
import threading
import unittest

from unittest import mock

import numpy as np
import torch

from packsolver import bench
from packsolver.candgen import generate_candidates
from packsolver.learner import (
    CANDIDATE_FEATURES, STATE_FEATURES, CurvePoint, DuelingRanker,
    FeatureExtractor, LearnedPolicy, ParameterServer, ReplayMemory,
    TrainConfig, Transition, evaluate, load_model, qvalues, save_model,
    select_action, td_loss, td_update, train, write_curve,
)
from packsolver.packenv import ContainerSpec, PackingEnv, landing_altitude
from packsolver.policies import make_policy
from packsolver.shapelib import ShapeDataset, emit_problem, gen_polycubes


def random_transition(rng, done=False):
    """Transition with random features, three candidates now and two
    next."""
    return Transition(
        rng.random(STATE_FEATURES), rng.random((3, CANDIDATE_FEATURES)),
        int(rng.integers(3)), float(rng.random()),
        rng.random(STATE_FEATURES),
        np.zeros((0, CANDIDATE_FEATURES)) if done else rng.random((2, CANDIDATE_FEATURES)),
        done,
    )


def small_config(**changes):
    options = dict(
        frames=48, workers=1, hidden=16, batch_size=8, learning_starts=16,
        steps_per_update=4, target_sync=5, eval_interval=24, eval_seeds=2,
        interleaved=True,
    )
    options.update(changes)
    return TrainConfig(**options)


class LearnerTest(unittest.TestCase):
    """Class for testing the learner module."""

    @classmethod
    def setUpClass(cls):
        """Create the container and dataset used by the tests."""
        cls.spec = ContainerSpec(6, 6, 5, dh=6.0, n_candidates=100)
        cls.dataset = ShapeDataset(gen_polycubes())

    def setUp(self):
        torch.manual_seed(0)

    def test_zero_init(self):
        """Test a zero model scores every candidate the same."""
        model = DuelingRanker(16, zero_init=True)
        rng = np.random.default_rng(0)
        qs = qvalues(model, rng.random(STATE_FEATURES), rng.random((5, CANDIDATE_FEATURES)))
        self.assertTrue(np.all(qs == 0))
        self.assertEqual(0, select_action(qs, 0.0))

    def test_advantage_centering(self):
        """Test shifting every advantage leaves Q unchanged."""
        model = DuelingRanker(16)
        states = torch.rand(4, STATE_FEATURES, dtype=torch.float64)
        candidates = torch.rand(4, 6, CANDIDATE_FEATURES, dtype=torch.float64)
        valid = torch.ones(4, 6, dtype=torch.bool)
        valid[1, 3:] = False
        with torch.no_grad():
            before = model(states, candidates, valid)
            model.advantage_head.bias += 5.0
            after = model(states, candidates, valid)
        self.assertTrue(torch.allclose(before, after, atol=1e-9))
        self.assertTrue(torch.equal(before.argmax(dim=1), after.argmax(dim=1)))
        self.assertTrue(torch.all(torch.isinf(after[1, 3:])))

    def test_padding_never_chosen(self):
        """Test padded entries are never selected."""
        model = DuelingRanker(8)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            width = int(rng.integers(1, 6))
            dummy = rng.random(width) < 0.5
            dummy[int(rng.integers(width))] = False
            qs = qvalues(model, rng.random(STATE_FEATURES), rng.random((width, CANDIDATE_FEATURES)), dummy)
            self.assertFalse(dummy[select_action(qs, float(rng.random()), rng)])

    def test_select_action(self):
        """Test ties, exploration and rejected inputs."""
        self.assertEqual(1, select_action([1.0, 3.0, 3.0], 0.0))
        rng = np.random.default_rng(2)
        counts = np.zeros(4, dtype=int)
        for _ in range(9000):
            counts[select_action([1.0, 2.0, 3.0, -np.inf], 1.0, rng)] += 1
        self.assertEqual(0, counts[3])
        sigma = np.sqrt(9000 / 3 * 2 / 3)
        self.assertTrue(np.all(np.abs(counts[:3] - 3000) <= 4 * sigma))
        self.assertRaises(ValueError, select_action, [-np.inf, -np.inf], 0.0)
        self.assertRaises(
            ValueError, qvalues, DuelingRanker(8), np.zeros(STATE_FEATURES),
            np.zeros((2, CANDIDATE_FEATURES)), [True, True]
        )

    def test_forward_needs_a_candidate(self):
        """Test rows without real candidates are rejected."""
        model = DuelingRanker(8)
        valid = torch.tensor([[True, False], [False, False]])
        self.assertRaises(
            ValueError, model, torch.zeros(2, STATE_FEATURES, dtype=torch.float64),
            torch.zeros(2, 2, CANDIDATE_FEATURES, dtype=torch.float64), valid
        )

    def test_terminal_target(self):
        """Test terminal transitions regress onto the reward."""
        model = DuelingRanker(8, zero_init=True)
        rng = np.random.default_rng(3)
        batch = [random_transition(rng, done=True) for _ in range(4)]
        expected = np.mean([t.reward ** 2 for t in batch])
        self.assertAlmostEqual(expected, float(td_loss(model, model, batch, 0.99)))
        live = [random_transition(rng) for _ in range(4)]
        expected = np.mean([t.reward ** 2 for t in live])
        self.assertAlmostEqual(expected, float(td_loss(model, model, live, 0.0)))

    def test_gradient_matches_finite_differences(self):
        """Test backpropagated gradients against central differences."""
        model = DuelingRanker(8)
        target = copy.deepcopy(model)
        rng = np.random.default_rng(4)
        batch = [random_transition(rng, done=bool(i % 2)) for i in range(4)]
        model.zero_grad()
        td_loss(model, target, batch, 0.9).backward()
        parameters = list(model.parameters())
        step = 1e-5
        for _ in range(10):
            parameter = parameters[int(rng.integers(len(parameters)))]
            flat = parameter.data.view(-1)
            index = int(rng.integers(flat.numel()))
            analytic = float(parameter.grad.view(-1)[index])
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + step
                plus = float(td_loss(model, target, batch, 0.9))
                flat[index] = original - step
                minus = float(td_loss(model, target, batch, 0.9))
                flat[index] = original
            numeric = (plus - minus) / (2 * step)
            scale = max(abs(analytic), abs(numeric), 1e-6)
            self.assertLessEqual(abs(analytic - numeric) / scale, 1e-4)

    def test_td_update(self):
        """Test an update step and its failure modes."""
        model = DuelingRanker(8)
        target = copy.deepcopy(model)
        rng = np.random.default_rng(5)
        batch = [random_transition(rng) for _ in range(4)]
        before = [p.detach().clone() for p in model.parameters()]
        loss = td_update(model, target, batch, 0.9, lr=1e-2)
        self.assertTrue(np.isfinite(loss))
        self.assertTrue(any(not torch.equal(a, b) for a, b in zip(before, model.parameters())))
        broken = [batch[0]._replace(reward=float("nan"))]
        self.assertRaises(FloatingPointError, td_update, model, target, broken, 0.9)
        self.assertRaises(ValueError, td_update, model, target, batch, 1.0)
        self.assertRaises(ValueError, td_update, model, target, [], 0.9)

    def test_replay_memory(self):
        """Test the memory drops its oldest entries first."""
        memory = ReplayMemory(3)
        self.assertRaises(ValueError, memory.sample, 2, np.random.default_rng(0))
        for value in range(5):
            memory.append(value)
        self.assertEqual([2, 3, 4], memory.contents())
        self.assertEqual(3, len(memory))
        self.assertTrue(set(memory.sample(20, np.random.default_rng(0))) <= {2, 3, 4})
        self.assertRaises(ValueError, ReplayMemory, 0)

    def test_parameter_snapshots(self):
        """Test snapshots never mix two published versions."""
        model = DuelingRanker(8)
        server = ParameterServer(model)

        def publish():
            for value in range(1, 201):
                with torch.no_grad():
                    for parameter in model.parameters():
                        parameter.fill_(value)
                server.publish(model)

        publisher = threading.Thread(target=publish)
        publisher.start()
        last = 0
        for _ in range(200):
            version, params = server.snapshot()
            self.assertGreaterEqual(version, last)
            last = version
            if version == 0:
                continue
            values = {float(tensor.flatten()[0]) for tensor in params.values()}
            self.assertLessEqual(len(values), 1)
            for tensor in params.values():
                self.assertTrue(torch.all(tensor == tensor.flatten()[0]))
        publisher.join()
        self.assertEqual(200, server.snapshot()[0])

    def test_features(self):
        """Test feature vectors are finite and normalised."""
        env = PackingEnv(self.spec)
        env.reset(emit_problem(self.dataset, self.spec.dims, 0, dh=6.0), self.dataset)
        extractor = FeatureExtractor(self.spec)
        for _ in range(10):
            candidates = generate_candidates(env.state, env.current_item)
            state_feat, cand_feats = extractor.features(env.state, env.current_item, candidates, 0.5)
            self.assertEqual((STATE_FEATURES,), state_feat.shape)
            self.assertEqual((len(candidates), CANDIDATE_FEATURES), cand_feats.shape)
            self.assertTrue(np.all(np.isfinite(cand_feats)))
            self.assertTrue(np.all((state_feat >= 0) & (state_feat <= 1)))
            self.assertTrue(np.all((cand_feats[:, :2] >= -1) & (cand_feats[:, :2] <= 1)))
            self.assertTrue(np.all((cand_feats[:, 2:] >= 0) & (cand_feats[:, 2:] <= 1)))
            first = candidates[0]
            env.step((first.theta, first.lx, first.ly, first.lz))

    def test_observation_noise(self):
        """Test noise perturbs the observed heights only."""
        env = PackingEnv(self.spec)
        env.reset(emit_problem(self.dataset, self.spec.dims, 1, dh=6.0), self.dataset)
        heights = env.state.heights.copy()
        noisy = FeatureExtractor(self.spec, 0.05, np.random.default_rng(0)).observe(env.state.heights)
        self.assertFalse(np.array_equal(heights, noisy))
        self.assertTrue(np.all((noisy >= 0) & (noisy <= self.spec.sz)))
        self.assertTrue(np.array_equal(heights, env.state.heights))
        self.assertTrue(np.array_equal(heights, FeatureExtractor(self.spec).observe(heights)))

    def test_epsilon_schedule(self):
        """Test exploration anneals over the first share of frames."""
        config = TrainConfig(frames=1000)
        self.assertEqual(1.0, config.epsilon(0))
        self.assertAlmostEqual(0.525, config.epsilon(100))
        self.assertAlmostEqual(0.05, config.epsilon(200))
        self.assertAlmostEqual(0.05, config.epsilon(900))

    def test_learned_policy(self):
        """Test the learned policy places feasibly."""
        model = DuelingRanker(16)
        policy = make_policy("learned", self.spec, model=model)
        self.assertIsInstance(policy, LearnedPolicy)
        env = PackingEnv(self.spec)
        env.reset(emit_problem(self.dataset, self.spec.dims, 2, dh=6.0), self.dataset)
        while not env.done:
            item = env.current_item
            decision = policy.decide(env.state, item)
            if decision is None:
                break
            theta, lx, ly, lz = decision.action
            fp = item.footprint(theta, self.spec.scale(item.shape))
            self.assertEqual(lz, landing_altitude(env.state.heights, fp, lx, ly, self.spec.sz))
            env.step(decision.action)
        score = evaluate(model, self.dataset, self.spec, range(2))
        self.assertTrue(0 < score <= 1)

    def test_train_without_frames(self):
        """Test zero frames return the initial parameters."""
        result = train(small_config(frames=0, eval_seeds=1), self.dataset, self.spec)
        torch.manual_seed(0)
        initial = DuelingRanker(16)
        for key, value in initial.state_dict().items():
            self.assertTrue(torch.equal(value, result.model.state_dict()[key]))
        self.assertFalse(result.aborted)

    def test_train_interleaved_deterministic(self):
        """Test interleaved training replays exactly."""
        first = train(small_config(), self.dataset, self.spec)
        second = train(small_config(), self.dataset, self.spec)
        self.assertEqual([24, 48], [point.frame for point in first.curve])
        np.testing.assert_array_equal(np.array(first.curve), np.array(second.curve))
        for key, value in first.model.state_dict().items():
            self.assertTrue(torch.equal(value, second.model.state_dict()[key]))

    def test_train_async(self):
        """Test the threaded loop finishes and reports stragglers."""
        stragglers = []
        config = small_config(
            frames=40, workers=2, learning_starts=8, eval_interval=1000, eval_seeds=1,
            publish_interval=1, interleaved=False, straggler_seconds=0.0,
        )
        result = train(config, self.dataset, self.spec, lambda worker, seconds: stragglers.append(worker))
        self.assertFalse(result.aborted)
        self.assertEqual(40, result.curve[-1].frame)
        self.assertTrue(stragglers)
        self.assertTrue(set(stragglers) <= {0, 1})

    def test_train_divergence(self):
        """Test a diverging loss restores the last good parameters."""
        config = small_config(frames=40, learning_starts=8, eval_interval=1000)
        with mock.patch("packsolver.learner.td_loss", return_value=torch.tensor(float("nan"))):
            result = train(config, self.dataset, self.spec)
        self.assertTrue(result.aborted)
        torch.manual_seed(0)
        initial = DuelingRanker(16)
        for key, value in initial.state_dict().items():
            self.assertTrue(torch.equal(value, result.model.state_dict()[key]))

    def test_train_invalid(self):
        """Test training rejects bad settings."""
        self.assertRaises(TypeError, train, {"frames": 10}, self.dataset, self.spec)
        self.assertRaises(TypeError, train, small_config(), self.dataset, (6, 6, 5))
        self.assertRaises(ValueError, train, small_config(workers=0), self.dataset, self.spec)

    def test_model_file(self):
        """Test models survive a write and read, other schemas do not."""
        model = DuelingRanker(16)
        rng = np.random.default_rng(6)
        state, cands = rng.random(STATE_FEATURES), rng.random((4, CANDIDATE_FEATURES))
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "model.pt")
            save_model(model, path)
            loaded = load_model(path)
            np.testing.assert_array_equal(qvalues(model, state, cands), qvalues(loaded, state, cands))

            stale = os.path.join(directory, "stale.pt")
            torch.save({"format": "packsolver-ranker", "schema": 99, "architecture": {}, "state_dict": {}}, stale)
            self.assertRaises(ValueError, load_model, stale)
            other = os.path.join(directory, "other.pt")
            torch.save({"format": "something"}, other)
            self.assertRaises(ValueError, load_model, other)

    def test_write_curve(self):
        """Test the learning curve CSV."""
        curve = [CurvePoint(10, 0.5, 0.25), CurvePoint(20, float("nan"), 0.5)]
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "curve.csv")
            write_curve(curve, path)
            with open(path, "r", newline="", encoding="utf-8") as curve_file:
                rows = list(csv.reader(curve_file))
        self.assertEqual(["frame", "loss", "eval_utility"], rows[0])
        self.assertEqual(["10", "0.5", "0.25"], rows[1])
        self.assertEqual(3, len(rows))

    @unittest.skipUnless(os.environ.get("PACKSOLVER_SLOW"), "slow acceptance run")
    def test_trained_beats_random_candidates(self):
        """Test a trained ranker outpacks random candidate choice."""
        spec = ContainerSpec.desk()
        config = TrainConfig(
            frames=20000, hidden=64, learning_starts=1000, eval_interval=5000,
            eval_seeds=5, interleaved=True,
        )
        result = train(config, self.dataset, spec)
        self.assertFalse(result.aborted)
        seeds = range(2000000, 2000020)
        learned = evaluate(result.model, self.dataset, spec, seeds)
        random_pi = bench.run_experiment("random-pi", self.dataset, spec, 20, seed_offset=2000000)
        self.assertGreaterEqual(learned, random_pi.mean_utility)


if __name__ == "__main__":
    unittest.main()
