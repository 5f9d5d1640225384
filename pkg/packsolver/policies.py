"""
    This module contains the baseline placement policies: first fit over
    the grid, bottom-left-back first, minimum centre-of-mass height,
    heightmap increase and random selection, all behind the
    PlacementPolicy interface.
"""

import logging
import time

from collections import namedtuple

import numpy as np

from packsolver.candgen import CandidateGenerator, sort_key
from packsolver.gridgeom import INFEASIBLE
from packsolver.packenv import ActionTuple, ContainerSpec, PackingEnv, altitude_field


logger = logging.getLogger(__name__)

PolicyDecision = namedtuple("PolicyDecision", ["action", "score", "considered"])


def _decision(candidate, score, considered):
    return PolicyDecision(
        ActionTuple(candidate.theta, candidate.lx, candidate.ly, candidate.lz),
        score, considered,
    )


def _lattice_fields(state, item):
    """Yields (theta, lattice altitudes) for every spin, lattice indexed
    [x, y] at the grid stride."""
    spec = state.spec
    scale = spec.scale(item.shape)
    for theta in range(spec.rotations):
        fp = item.footprint(theta, scale)
        field = altitude_field(state.heights, fp, spec.sz)
        yield theta, field[::spec.dg, ::spec.dg]


def select_ff(state, item):
    """
        First feasible grid point, scanning spins in order and each
        lattice in raster order.

        Returns:
        > (PolicyDecision) - the first placement found, None when the item
            fits nowhere
    """
    stride = state.spec.dg
    considered = 0
    for theta, lattice in _lattice_fields(state, item):
        raster = lattice.T.ravel()
        feasible = np.flatnonzero(raster != INFEASIBLE)
        if len(feasible):
            y, x = divmod(int(feasible[0]), lattice.shape[0])
            considered += int(feasible[0]) + 1
            lz = int(lattice[x, y])
            return PolicyDecision(ActionTuple(theta, x * stride, y * stride, lz), lz, considered)
        considered += raster.size
    return None


def select_blbf(candidates):
    """
        Bottom-most, then back-most, then left-most candidate.

        Returns:
        > (PolicyDecision) - None for an empty candidate set
    """
    if not candidates:
        return None
    best = min(candidates, key=sort_key)
    return _decision(best, best.lz, len(candidates))


def mtpe_score(candidate, item, scale=1):
    """Centre-of-mass height of the item placed at the candidate."""
    return candidate.lz + item.footprint(candidate.theta, scale).com_z


def select_mtpe(candidates, item, scale=1):
    """
        Candidate with the lowest centre of mass after placement.

        Parameters:
        > candidates (CandidateSet) - candidates of the item
        > item (Item) - the incoming item
        > scale (int) - heightmap cells per shape cell

        Returns:
        > (PolicyDecision) - None for an empty candidate set
    """
    if not candidates:
        return None
    best = min(candidates, key=lambda c: (mtpe_score(c, item, scale), sort_key(c)))
    return _decision(best, mtpe_score(best, item, scale), len(candidates))


def hm_score(heights, candidate, item, scale=1):
    """Growth of the heightmap volume under the item's footprint."""
    fp = item.footprint(candidate.theta, scale)
    mask = fp.mask.bits
    width, depth = mask.shape
    below = heights[candidate.lx:candidate.lx + width, candidate.ly:candidate.ly + depth]
    raised = np.maximum(below, candidate.lz + fp.top)
    return int(np.sum((raised - below)[mask]))


def select_hm(state, candidates, item):
    """
        Candidate adding the least volume to the heightmap, ties broken
        bottom, back, left.

        Returns:
        > (PolicyDecision) - None for an empty candidate set
    """
    if not candidates:
        return None
    scale = state.spec.scale(item.shape)
    scored = [(hm_score(state.heights, c, item, scale), sort_key(c), c) for c in candidates]
    score, _, best = min(scored, key=lambda entry: entry[:2])
    return _decision(best, score, len(candidates))


def select_random(rng, mode="grid", state=None, item=None, candidates=None):
    """
        Uniformly random placement.

        Parameters:
        > rng (np.random.Generator) - source of randomness
        > mode (str) - "grid" draws among feasible lattice points and spins
            of 'item' in 'state'; "candidate" draws among 'candidates'

        Returns:
        > (PolicyDecision) - None when nothing is feasible
    """
    if mode == "candidate":
        if not candidates:
            return None
        choice = candidates[int(rng.integers(len(candidates)))]
        return _decision(choice, 0.0, len(candidates))
    if mode != "grid":
        raise ValueError(
            "invalid value for 'mode' parameter. "
            "Expected 'grid' or 'candidate', received '%s'." % mode
        )

    stride = state.spec.dg
    options = []
    for theta, lattice in _lattice_fields(state, item):
        for x, y in np.argwhere(lattice != INFEASIBLE):
            options.append((theta, int(x), int(y), int(lattice[x, y])))
    if not options:
        return None
    theta, x, y, lz = options[int(rng.integers(len(options)))]
    return PolicyDecision(ActionTuple(theta, x * stride, y * stride, lz), 0.0, len(options))


class PlacementPolicy():
    """
        Base class for placement policies.

        Attributes:
        > spec (ContainerSpec) - the container
        > generator (CandidateGenerator) - candidate source, None for grid
            policies
    """

    name = None
    uses_candidates = True

    def __init__(self, spec):
        if not isinstance(spec, ContainerSpec):
            raise TypeError(
                "invalid value for 'spec' parameter. "
                "Expected ContainerSpec, received '%s'." % type(spec).__name__
            )
        self.spec = spec
        self.generator = CandidateGenerator(spec) if self.uses_candidates else None

    def reset(self, seed):
        """Called at the start of every episode."""

    def decide(self, state, item, remaining=1.0):
        """
            Chooses a placement for the incoming item. 'remaining' is the
            share of the stream not yet placed.

            Returns:
            > (PolicyDecision) - None when the item fits nowhere
        """
        candidates = self.generator.generate(state, item) if self.uses_candidates else None
        return self.select(state, item, candidates)

    def select(self, state, item, candidates):
        raise NotImplementedError


class FirstFitPolicy(PlacementPolicy):
    name = "ff"
    uses_candidates = False

    def select(self, state, item, candidates):
        return select_ff(state, item)


class BLBFPolicy(PlacementPolicy):
    name = "blbf"

    def select(self, state, item, candidates):
        return select_blbf(candidates)


class MTPEPolicy(PlacementPolicy):
    name = "mtpe"

    def select(self, state, item, candidates):
        return select_mtpe(candidates, item, state.spec.scale(item.shape))


class HeightmapPolicy(PlacementPolicy):
    name = "hm"

    def select(self, state, item, candidates):
        return select_hm(state, candidates, item)


class RandomPolicy(PlacementPolicy):
    """
        Random placement over the grid, or over the candidate set when
        'mode' is "candidate". The generator is reseeded per episode.
    """

    name = "random"
    uses_candidates = False

    def __init__(self, spec, seed=0, mode="grid"):
        self.uses_candidates = mode == "candidate"
        super().__init__(spec)
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)

    def select(self, state, item, candidates):
        return select_random(self.rng, self.mode, state, item, candidates)


POLICIES = {
    "ff": FirstFitPolicy,
    "blbf": BLBFPolicy,
    "mtpe": MTPEPolicy,
    "hm": HeightmapPolicy,
    "random": RandomPolicy,
    "random-pi": RandomPolicy,
    "learned": None,
}


def make_policy(name, spec, seed=0, model=None):
    """
        Builds a policy by its command-line name.

        Parameters:
        > name (str) - one of POLICIES
        > spec (ContainerSpec) - the container
        > seed (int) - seed for random policies
        > model (DuelingRanker) - ranker for the learned policy

        Returns:
        > (PlacementPolicy) - the policy
    """
    if name not in POLICIES:
        raise ValueError(
            "invalid value for 'name' parameter. "
            "Expected one of %s, received '%s'." % (", ".join(POLICIES), name)
        )
    if name == "random":
        return RandomPolicy(spec, seed, mode="grid")
    if name == "random-pi":
        policy = RandomPolicy(spec, seed, mode="candidate")
        policy.name = "random-pi"
        return policy
    if name == "learned":
        from packsolver.learner import LearnedPolicy
        if model is None:
            raise ValueError(
                "invalid value for 'model' parameter. "
                "The learned policy needs a model."
            )
        return LearnedPolicy(spec, model)
    return POLICIES[name](spec)


def rollout(spec, items, policy, partial=True, env=None):
    """
        Plays one episode with a policy.

        Parameters:
        > spec (ContainerSpec) - the container
        > items (list) - Item stream
        > policy (PlacementPolicy) - decides every placement
        > partial (bool) - heightmap update mode of a fresh environment
        > env (PackingEnv) - environment to reuse, keeping its trace

        Returns:
        > (tuple) - final PackingState and the seconds spent on each
            decision
    """
    env = env if env is not None else PackingEnv(spec, partial)
    env.reset(items)
    timings = []
    while not env.done:
        item = env.current_item
        remaining = (len(env.items) - env.cursor) / len(env.items)
        started = time.perf_counter()
        decision = policy.decide(env.state, item, remaining)
        timings.append(time.perf_counter() - started)
        if decision is None:
            env.terminate()
            break
        env.step(decision.action)
    return env.state, timings
