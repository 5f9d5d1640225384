"""
    This module contains the trainable candidate ranker: handcrafted
    features, the dueling value model, masked action selection, double-DQN
    updates from a replay memory and the actor/learner training loop.
"""

import copy
import csv
import logging
import threading
import time

from collections import deque, namedtuple
from dataclasses import asdict, dataclass
from math import pi

import numpy as np
import torch

from torch import nn

from packsolver import packtools
from packsolver.candgen import CandidateGenerator
from packsolver.packenv import ActionTuple, ContainerSpec, PackingEnv, utility
from packsolver.policies import PlacementPolicy, PolicyDecision, rollout
from packsolver.shapelib import emit_problem


logger = logging.getLogger(__name__)

FEATURE_SCHEMA_VERSION = 1
STATE_FEATURES = 6
CANDIDATE_FEATURES = 10
MODEL_FORMAT = "packsolver-ranker"

Transition = namedtuple(
    "Transition",
    ["state", "candidates", "action", "reward", "next_state", "next_candidates", "done"],
)

CurvePoint = namedtuple("CurvePoint", ["frame", "loss", "eval_utility"])

TrainResult = namedtuple("TrainResult", ["model", "curve", "aborted"])


class FeatureExtractor():
    """
        Turns a state and its candidates into fixed-length feature vectors.

        Attributes:
        > spec (ContainerSpec) - the container
        > noise_sigma (float) - observed heights get Gaussian noise with
            standard deviation noise_sigma times the container diagonal
        > rng (np.random.Generator) - noise source
    """

    def __init__(self, spec, noise_sigma=0.0, rng=None):
        self.spec = spec
        self.noise_sigma = packtools.validate_number(noise_sigma, "noise_sigma", minimum=0)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def observe(self, heights):
        """Heights as seen by the ranker."""
        heights = heights.astype(np.float64)
        if self.noise_sigma > 0:
            diagonal = np.sqrt(self.spec.sx ** 2 + self.spec.sy ** 2 + self.spec.sz ** 2)
            heights = heights + self.rng.normal(0.0, self.noise_sigma * diagonal, heights.shape)
            heights = np.clip(heights, 0, self.spec.sz)
        return heights

    def features(self, state, item, candidates, remaining=1.0):
        """
            Parameters:
            > state (PackingState) - the container
            > item (Item) - the incoming item
            > candidates (CandidateSet) - its candidates
            > remaining (float) - share of the stream not yet placed

            Returns:
            > (tuple) - state vector of length 6 and a candidate matrix of
                shape (len(candidates), 10)
        """
        heights = self.observe(state.heights)
        return (
            self.state_features(state, heights, remaining),
            self.candidate_features(heights, item, candidates),
        )

    def state_features(self, state, heights, remaining):
        sz = self.spec.sz
        top = heights.max()
        return np.array([
            utility(state),
            heights.mean() / sz,
            top / sz,
            heights.std() / sz,
            np.mean(heights >= top - 1e-9),
            min(max(remaining, 0.0), 1.0),
        ], dtype=np.float64)

    def candidate_features(self, heights, item, candidates):
        spec = self.spec
        scale = spec.scale(item.shape)
        rows = np.zeros((len(candidates), CANDIDATE_FEATURES), dtype=np.float64)
        for row, candidate in enumerate(candidates):
            fp = item.footprint(candidate.theta, scale)
            mask = fp.mask.bits
            width, depth = mask.shape
            below = heights[candidate.lx:candidate.lx + width, candidate.ly:candidate.ly + depth]
            contact = np.abs(below - fp.bottom - candidate.lz)[mask] < 0.5
            raised = np.maximum(below, candidate.lz + fp.top)
            angle = candidate.theta * pi / 2
            rows[row] = [
                np.sin(angle),
                np.cos(angle),
                candidate.lx / spec.sx,
                candidate.ly / spec.sy,
                candidate.lz / spec.sz,
                max(heights.max(), candidate.lz + fp.height) / spec.sz,
                contact.mean(),
                np.sum((raised - below)[mask]) / spec.volume,
                candidate.tightness / pi,
                fp.volume / spec.volume,
            ]
        return rows


class DuelingRanker(nn.Module):
    """
        Dueling value model over candidate actions. V is read from the shared
        trunk on the state block alone, A from the trunk on the state block
        joined with one candidate block.

        Attributes:
        > hidden (int) - trunk width
    """

    def __init__(self, hidden=64, zero_init=False):
        super().__init__()
        self.hidden = hidden
        self.trunk = nn.Sequential(
            nn.Linear(STATE_FEATURES + CANDIDATE_FEATURES, hidden),
            nn.Tanh(),
            nn.Linear(hidden, hidden),
            nn.Tanh(),
        )
        self.value_head = nn.Linear(hidden, 1)
        self.advantage_head = nn.Linear(hidden, 1)
        self.double()
        if zero_init:
            with torch.no_grad():
                for parameter in self.parameters():
                    parameter.zero_()

    def descriptor(self):
        return {
            "hidden": self.hidden,
            "state_features": STATE_FEATURES,
            "candidate_features": CANDIDATE_FEATURES,
        }

    def advantages(self, states, candidates):
        """Raw advantages, shape (batch, width)."""
        width = candidates.shape[1]
        joined = torch.cat([states.unsqueeze(1).expand(-1, width, -1), candidates], dim=2)
        return self.advantage_head(self.trunk(joined)).squeeze(-1)

    def forward(self, states, candidates, valid):
        """
            Parameters:
            > states (torch.Tensor) - (batch, 6)
            > candidates (torch.Tensor) - (batch, width, 10), padded
            > valid (torch.Tensor) - (batch, width) bool, False on padding

            Returns:
            > (torch.Tensor) - (batch, width) Q values, -inf on padding
        """
        counts = valid.sum(dim=1)
        if bool((counts == 0).any()):
            raise ValueError(
                "invalid value for 'valid' parameter. "
                "Every row needs at least one real candidate."
            )
        blank = torch.zeros(states.shape[0], CANDIDATE_FEATURES, dtype=states.dtype)
        value = self.value_head(self.trunk(torch.cat([states, blank], dim=1)))
        advantage = self.advantages(states, candidates)
        mean = (advantage * valid).sum(dim=1, keepdim=True) / counts.unsqueeze(1)
        q = value + advantage - mean
        return q.masked_fill(~valid, float("-inf"))


def qvalues(model, state_feat, cand_feats, dummy_mask=None):
    """
        Q value of every candidate of one decision.

        Parameters:
        > model (DuelingRanker) - the ranker
        > state_feat (np.array) - state vector
        > cand_feats (np.array) - (width, 10) candidate matrix, padded
        > dummy_mask (np.array) - True on padding entries

        Returns:
        > (np.array) - Q values, -inf on padding
    """
    cand_feats = np.asarray(cand_feats, dtype=np.float64).reshape(-1, CANDIDATE_FEATURES)
    if dummy_mask is None:
        dummy_mask = np.zeros(len(cand_feats), dtype=bool)
    valid = ~np.asarray(dummy_mask, dtype=bool)
    if not valid.any():
        raise ValueError(
            "invalid value for 'dummy_mask' parameter. "
            "At least one candidate must be real."
        )
    with torch.no_grad():
        q = model(
            torch.as_tensor(np.asarray(state_feat, dtype=np.float64)).unsqueeze(0),
            torch.as_tensor(cand_feats).unsqueeze(0),
            torch.as_tensor(valid).unsqueeze(0),
        )
    return q.squeeze(0).numpy()


def select_action(qs, epsilon, rng=None):
    """
        Epsilon-greedy choice among the finite Q values. The greedy choice
        is the lowest index among maximisers.

        Returns:
        > (int) - chosen index
    """
    qs = np.asarray(qs, dtype=np.float64)
    valid = np.flatnonzero(np.isfinite(qs))
    if not len(valid):
        raise ValueError(
            "invalid value for 'qs' parameter. "
            "At least one Q value must be finite."
        )
    if epsilon > 0 and rng.random() < epsilon:
        return int(valid[rng.integers(len(valid))])
    return int(np.argmax(np.where(np.isfinite(qs), qs, -np.inf)))


class ReplayMemory():
    """
        Bounded first-in first-out store of transitions, safe for concurrent
        appenders and one sampler.

        Attributes:
        > capacity (int) - maximum number of transitions
    """

    def __init__(self, capacity):
        self.capacity = packtools.validate_int(capacity, "capacity", minimum=1)
        self._items = deque(maxlen=self.capacity)
        self._lock = threading.Lock()

    def __len__(self):
        with self._lock:
            return len(self._items)

    def append(self, transition):
        with self._lock:
            self._items.append(transition)

    def contents(self):
        """Snapshot of the stored transitions, oldest first."""
        with self._lock:
            return list(self._items)

    def sample(self, batch_size, rng):
        """Draws 'batch_size' transitions uniformly with replacement."""
        with self._lock:
            if not self._items:
                raise ValueError(
                    "invalid value for 'batch_size' parameter. "
                    "The memory is empty."
                )
            indices = rng.integers(len(self._items), size=batch_size)
            return [self._items[int(index)] for index in indices]


class ParameterServer():
    """
        Latest published model parameters with a version counter. Every
        snapshot is a complete copy taken under the lock.
    """

    def __init__(self, model):
        self._lock = threading.Lock()
        self._version = 0
        self._params = _clone_params(model)

    def publish(self, model):
        params = _clone_params(model)
        with self._lock:
            self._version += 1
            self._params = params
            return self._version

    def snapshot(self):
        """Returns (version, parameters)."""
        with self._lock:
            return self._version, self._params


def _clone_params(model):
    return {key: value.detach().clone() for key, value in model.state_dict().items()}


def pad_batch(transitions, next_state=False):
    """
        Stacks the current (or next) side of transitions into tensors,
        padding candidate lists to the widest one.

        Returns:
        > (tuple) - states (b, 6), candidates (b, w, 10), valid (b, w)
    """
    states = np.stack([t.next_state if next_state else t.state for t in transitions])
    lists = [t.next_candidates if next_state else t.candidates for t in transitions]
    width = max(max(len(c) for c in lists), 1)
    padded = np.zeros((len(lists), width, CANDIDATE_FEATURES), dtype=np.float64)
    valid = np.zeros((len(lists), width), dtype=bool)
    for row, cands in enumerate(lists):
        padded[row, :len(cands)] = cands
        valid[row, :len(cands)] = True
        if not len(cands):
            # Terminal rows get one blank entry so the forward pass is defined
            valid[row, 0] = True
    return (
        torch.as_tensor(states, dtype=torch.float64),
        torch.as_tensor(padded),
        torch.as_tensor(valid),
    )


def td_loss(model, target_model, batch, gamma):
    """
        Double-DQN Bellman loss over a batch of transitions.

        Returns:
        > (torch.Tensor) - mean squared TD error, differentiable in 'model'
    """
    states, candidates, valid = pad_batch(batch)
    actions = torch.as_tensor([t.action for t in batch], dtype=torch.int64).unsqueeze(1)
    rewards = torch.as_tensor([t.reward for t in batch], dtype=torch.float64)
    done = torch.as_tensor([t.done for t in batch], dtype=torch.bool)

    chosen = model(states, candidates, valid).gather(1, actions).squeeze(1)
    with torch.no_grad():
        next_states, next_candidates, next_valid = pad_batch(batch, next_state=True)
        best = model(next_states, next_candidates, next_valid).argmax(dim=1, keepdim=True)
        bootstrap = target_model(next_states, next_candidates, next_valid).gather(1, best).squeeze(1)
        target = rewards + gamma * torch.where(done, torch.zeros_like(bootstrap), bootstrap)
    return torch.mean((target - chosen) ** 2)


def td_update(model, target_model, batch, gamma, lr=1e-4, optimizer=None):
    """
        One Adam step on the Bellman loss.

        Parameters:
        > model (DuelingRanker) - online model, updated in place
        > target_model (DuelingRanker) - bootstrap model
        > batch (list) - Transition list
        > gamma (float) - discount in [0, 1)
        > lr (float) - learning rate for a fresh optimizer
        > optimizer (torch.optim.Optimizer) - optimizer to step instead

        Returns:
        > (float) - the loss before the step
    """
    gamma = packtools.validate_number(gamma, "gamma", minimum=0, below=1)
    if not batch:
        raise ValueError(
            "invalid value for 'batch' parameter. "
            "Batch must not be empty."
        )
    if optimizer is None:
        optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss = td_loss(model, target_model, batch, gamma)
    value = float(loss.item())
    if not np.isfinite(value):
        raise FloatingPointError("Bellman loss is %s" % value)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return value


class Learner():
    """
        Holds the online and target models and the optimizer state.

        Attributes:
        > model (DuelingRanker) - online model
        > target (DuelingRanker) - target model, synced every target_sync
            updates
        > updates (int) - number of steps taken
    """

    def __init__(self, model, lr=1e-4, gamma=0.99, target_sync=1000):
        self.model = model
        self.target = copy.deepcopy(model)
        self.gamma = gamma
        self.target_sync = target_sync
        self.optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        self.updates = 0

    def update(self, batch):
        loss = td_update(self.model, self.target, batch, self.gamma, optimizer=self.optimizer)
        self.updates += 1
        if self.updates % self.target_sync == 0:
            self.target.load_state_dict(self.model.state_dict())
        return loss


@dataclass
class TrainConfig():
    """Learner hyperparameters."""

    frames: int = 200000
    workers: int = 16
    hidden: int = 64
    batch_size: int = 64
    lr: float = 1e-4
    replay_capacity: int = 100000
    gamma: float = 0.99
    target_sync: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.2
    learning_starts: int = 1000
    steps_per_update: int = 4
    publish_interval: int = 10
    eval_interval: int = 10000
    eval_seeds: int = 10
    eval_seed_offset: int = 1000000
    seed: int = 0
    interleaved: bool = False
    zero_init: bool = False
    straggler_seconds: float = None
    checkpoint: str = None

    def epsilon(self, frame):
        """Exploration rate, annealed linearly over the first share of the
        frame budget."""
        horizon = self.epsilon_fraction * self.frames
        if horizon <= 0:
            return self.epsilon_end
        progress = min(frame / horizon, 1.0)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress

    def to_dict(self):
        return asdict(self)


class LearnedPolicy(PlacementPolicy):
    """
        Picks the candidate with the highest Q value.

        Attributes:
        > model (DuelingRanker) - the ranker
        > extractor (FeatureExtractor) - feature source
        > epsilon (float) - exploration rate
    """

    name = "learned"

    def __init__(self, spec, model, extractor=None, epsilon=0.0, rng=None):
        super().__init__(spec)
        self.model = model
        self.extractor = extractor if extractor is not None else FeatureExtractor(spec)
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)

    def score(self, state, item, remaining=1.0, candidates=None):
        """
            Q values of the item's candidates.

            Returns:
            > (tuple) - (candidates, state vector, candidate matrix, Q
                values); Q is empty when nothing is feasible
        """
        if candidates is None:
            candidates = self.generator.generate(state, item)
        if not candidates:
            return candidates, None, None, np.zeros(0)
        state_feat, cand_feats = self.extractor.features(state, item, candidates, remaining)
        return candidates, state_feat, cand_feats, qvalues(self.model, state_feat, cand_feats)

    def decide(self, state, item, remaining=1.0):
        candidates, _, _, qs = self.score(state, item, remaining)
        if not len(qs):
            return None
        index = select_action(qs, self.epsilon, self.rng)
        chosen = candidates[index]
        return PolicyDecision(
            ActionTuple(chosen.theta, chosen.lx, chosen.ly, chosen.lz),
            float(qs[index]), len(candidates),
        )


def evaluate(model, dataset, spec, seeds, extractor=None):
    """Mean greedy utility over the given problem seeds."""
    policy = LearnedPolicy(spec, model, extractor)
    utilities = []
    for seed in seeds:
        items = emit_problem(dataset, spec.dims, seed, dh=spec.dh).resolve(dataset)
        policy.reset(seed)
        state, _ = rollout(spec, items, policy)
        utilities.append(utility(state))
    return float(np.mean(utilities)) if utilities else 0.0


class _EpisodeWorker():
    """
        Plays training episodes with a local copy of the model and feeds
        their transitions to the replay memory.
    """

    def __init__(self, worker_id, model, dataset, spec, memory, config):
        self.worker_id = worker_id
        self.model = model
        self.dataset = dataset
        self.spec = spec
        self.memory = memory
        self.config = config
        self.generator = CandidateGenerator(spec)
        self.extractor = FeatureExtractor(spec)
        self.rng = np.random.default_rng([config.seed, worker_id])
        self.env = PackingEnv(spec)
        self.pending = None
        self.episodes = 0
        self.detached = False

    def start_episode(self):
        seed = self.config.seed * 100003 + self.worker_id * 1000003 + self.episodes
        self.episodes += 1
        self.detached = False
        items = emit_problem(self.dataset, self.spec.dims, seed, dh=self.spec.dh).resolve(self.dataset)
        self.env.reset(items)
        self.pending = self._observe()

    def _observe(self):
        """Candidates and features of the incoming item, None when the
        episode is over."""
        env = self.env
        if env.done:
            return None
        item = env.current_item
        candidates = self.generator.generate(env.state, item)
        if not candidates:
            env.terminate()
            return None
        remaining = (len(env.items) - env.cursor) / len(env.items)
        state_feat, cand_feats = self.extractor.features(env.state, item, candidates, remaining)
        return candidates, state_feat, cand_feats

    def act(self, epsilon):
        """Takes one step. Returns True when the episode ended."""
        if self.pending is None:
            self.start_episode()
            if self.pending is None:
                return True
        candidates, state_feat, cand_feats = self.pending
        qs = qvalues(self.model, state_feat, cand_feats)
        index = select_action(qs, epsilon, self.rng)
        chosen = candidates[index]
        _, reward, done = self.env.step(
            ActionTuple(chosen.theta, chosen.lx, chosen.ly, chosen.lz)
        )
        following = None if done else self._observe()
        if following is None:
            next_state, next_cands, done = np.zeros(STATE_FEATURES), np.zeros((0, CANDIDATE_FEATURES)), True
        else:
            _, next_state, next_cands = following
        self.memory.append(Transition(
            state_feat, cand_feats, index, reward, next_state, next_cands, done
        ))
        self.pending = following
        if done:
            logger.debug(
                "Worker %i finished episode %i at utility %.4f",
                self.worker_id, self.episodes, utility(self.env.state)
            )
        return done


def _default_straggler(worker_id, seconds):
    logger.warning("Worker %i took %.2fs for one decision, detaching", worker_id, seconds)


def train(config, dataset, spec, on_straggler=None):
    """
        Trains a DuelingRanker.

        Parameters:
        > config (TrainConfig) - hyperparameters
        > dataset (ShapeDataset) - training shapes
        > spec (ContainerSpec) - the container
        > on_straggler (callable) - called with (worker_id, seconds) when a
            decision takes longer than config.straggler_seconds

        Returns:
        > (TrainResult) - final model, learning curve and whether training
            stopped on a diverging loss
    """
    if not isinstance(config, TrainConfig):
        raise TypeError(
            "invalid value for 'config' parameter. "
            "Expected TrainConfig, received '%s'." % type(config).__name__
        )
    if not isinstance(spec, ContainerSpec):
        raise TypeError(
            "invalid value for 'spec' parameter. "
            "Expected ContainerSpec, received '%s'." % type(spec).__name__
        )
    packtools.validate_int(config.frames, "frames", minimum=0)
    packtools.validate_int(config.workers, "workers", minimum=1)
    torch.manual_seed(config.seed)
    model = DuelingRanker(config.hidden, zero_init=config.zero_init)
    if config.interleaved:
        return _train_interleaved(config, dataset, spec, model)
    return _train_async(config, dataset, spec, model, on_straggler or _default_straggler)


class _Checkpoints():
    """Learning curve bookkeeping and the last good parameters."""

    def __init__(self, config, dataset, spec, model):
        self.config = config
        self.dataset = dataset
        self.spec = spec
        self.model = model
        self.curve = []
        self.losses = []
        self.good = _clone_params(model)
        self.seeds = range(config.eval_seed_offset, config.eval_seed_offset + config.eval_seeds)

    def record(self, frame):
        loss = float(np.mean(self.losses)) if self.losses else float("nan")
        self.losses = []
        score = evaluate(self.model, self.dataset, self.spec, self.seeds)
        self.curve.append(CurvePoint(frame, loss, score))
        self.good = _clone_params(self.model)
        if self.config.checkpoint:
            save_model(self.model, self.config.checkpoint)
        logger.info("Frame %i: loss %.6f, eval utility %.4f", frame, loss, score)

    def restore(self, error):
        logger.error("Training diverged (%s), restoring the last checkpoint", error)
        self.model.load_state_dict(self.good)
        return TrainResult(self.model, self.curve, True)


def _train_interleaved(config, dataset, spec, model):
    """One worker, steps_per_update environment steps per update."""
    memory = ReplayMemory(config.replay_capacity)
    learner = Learner(model, config.lr, config.gamma, config.target_sync)
    worker = _EpisodeWorker(0, model, dataset, spec, memory, config)
    checkpoints = _Checkpoints(config, dataset, spec, model)
    rng = np.random.default_rng(config.seed)

    frame = 0
    while frame < config.frames:
        for _ in range(config.steps_per_update):
            if frame >= config.frames:
                break
            worker.act(config.epsilon(frame))
            frame += 1
            if frame % config.eval_interval == 0:
                checkpoints.record(frame)
        if len(memory) >= max(config.learning_starts, 1):
            try:
                checkpoints.losses.append(learner.update(memory.sample(config.batch_size, rng)))
            except FloatingPointError as error:
                return checkpoints.restore(error)
    if not checkpoints.curve or checkpoints.curve[-1].frame != frame:
        checkpoints.record(frame)
    return TrainResult(model, checkpoints.curve, False)


def _train_async(config, dataset, spec, model, on_straggler):
    """Episode worker threads feed the memory while the calling thread
    learns and publishes parameters."""
    memory = ReplayMemory(config.replay_capacity)
    learner = Learner(model, config.lr, config.gamma, config.target_sync)
    server = ParameterServer(model)
    checkpoints = _Checkpoints(config, dataset, spec, model)
    rng = np.random.default_rng(config.seed)
    stop = threading.Event()
    counter = {"frames": 0}
    counter_lock = threading.Lock()

    actors = [copy.deepcopy(model) for _ in range(config.workers)]

    def run_worker(worker_id):
        actor = actors[worker_id]
        worker = _EpisodeWorker(worker_id, actor, dataset, spec, memory, config)
        adopted = 0
        while not stop.is_set():
            with counter_lock:
                if counter["frames"] >= config.frames:
                    return
                frame = counter["frames"]
                counter["frames"] += 1
            if not worker.detached:
                version, params = server.snapshot()
                if version > adopted:
                    actor.load_state_dict(params)
                    adopted = version
            started = time.perf_counter()
            worker.act(config.epsilon(frame))
            elapsed = time.perf_counter() - started
            if config.straggler_seconds is not None and elapsed > config.straggler_seconds:
                on_straggler(worker_id, elapsed)
                worker.detached = worker.pending is not None

    threads = [
        threading.Thread(target=run_worker, args=(worker_id,), daemon=True)
        for worker_id in range(config.workers)
    ]
    for thread in threads:
        thread.start()

    next_eval = config.eval_interval
    aborted = None
    while any(thread.is_alive() for thread in threads):
        with counter_lock:
            frame = counter["frames"]
        if frame >= next_eval:
            checkpoints.record(next_eval)
            next_eval += config.eval_interval
        if len(memory) < max(config.learning_starts, config.batch_size):
            time.sleep(0.001)
            continue
        try:
            checkpoints.losses.append(learner.update(memory.sample(config.batch_size, rng)))
        except FloatingPointError as error:
            aborted = error
            break
        if learner.updates % config.publish_interval == 0:
            server.publish(model)

    stop.set()
    for thread in threads:
        thread.join()
    if aborted is not None:
        return checkpoints.restore(aborted)
    checkpoints.record(config.frames)
    return TrainResult(model, checkpoints.curve, False)


def save_model(model, filename):
    """Writes the model with its architecture and feature schema."""
    torch.save({
        "format": MODEL_FORMAT,
        "schema": FEATURE_SCHEMA_VERSION,
        "architecture": model.descriptor(),
        "state_dict": model.state_dict(),
    }, filename)


def load_model(filename):
    """Reads a model file, rejecting other feature schemas."""
    try:
        content = torch.load(filename, map_location="cpu", weights_only=True)
    except (RuntimeError, EOFError) as exc:
        raise ValueError("invalid model file '%s': %s" % (filename, exc)) from exc
    if not isinstance(content, dict) or content.get("format") != MODEL_FORMAT:
        raise ValueError("invalid model file '%s': not a ranker model." % filename)
    if content.get("schema") != FEATURE_SCHEMA_VERSION:
        raise ValueError(
            "invalid model file '%s': feature schema %s, expected %s."
            % (filename, content.get("schema"), FEATURE_SCHEMA_VERSION)
        )
    architecture = content["architecture"]
    if (architecture.get("state_features"), architecture.get("candidate_features")) != (
            STATE_FEATURES, CANDIDATE_FEATURES):
        raise ValueError("invalid model file '%s': feature sizes differ." % filename)
    model = DuelingRanker(architecture["hidden"])
    model.load_state_dict(content["state_dict"])
    return model


def write_curve(curve, filename):
    """Writes the learning curve as CSV."""
    with open(filename, "w", newline="", encoding="utf-8") as curve_file:
        writer = csv.writer(curve_file)
        writer.writerow(["frame", "loss", "eval_utility"])
        for point in curve:
            writer.writerow([point.frame, repr(point.loss), repr(point.eval_utility)])
