"""
    This module contains the online packing environment: container
    configuration, heightmap state, landing-altitude placement, rewards and
    episode traces.
"""

import json
import logging

from collections import namedtuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from packsolver import packtools
from packsolver.gridgeom import INFEASIBLE
from packsolver.shapelib import Item, ProblemSequence, cell_scale


logger = logging.getLogger(__name__)

ActionTuple = namedtuple("ActionTuple", ["theta", "lx", "ly", "lz"])

Placement = namedtuple(
    "Placement",
    ["shape", "orientation", "spin", "theta", "lx", "ly", "lz", "volume", "aabb_volume"],
)

Observation = namedtuple("Observation", ["heights", "item", "footprints", "remaining"])


class ContainerSpec():
    """
        Container size and candidate generation parameters.

        Attributes:
        > sx, sy, sz (int) - container size in heightmap cells
        > dh (float) - heightmap cell size in cm
        > dg (int) - grid sampling stride in cells
        > dz (int) - altitude tolerance within a region, in cells
        > n_candidates (int) - maximum number of candidates kept
        > rotations (int) - number of vertical quarter turns considered
    """

    FIELDS = ("sx", "sy", "sz", "dh", "dg", "dz", "n_candidates", "rotations")

    def __init__(self, sx, sy, sz, dh=1.0, dg=1, dz=0, n_candidates=100, rotations=4):
        self.sx = packtools.validate_int(sx, "sx", minimum=1)
        self.sy = packtools.validate_int(sy, "sy", minimum=1)
        self.sz = packtools.validate_int(sz, "sz", minimum=1)
        self.dh = packtools.validate_number(dh, "dh", minimum=1e-9)
        self.dg = packtools.validate_int(dg, "dg", minimum=1)
        self.dz = packtools.validate_int(dz, "dz", minimum=0)
        self.n_candidates = packtools.validate_int(n_candidates, "n_candidates", minimum=1)
        self.rotations = packtools.validate_int(rotations, "rotations", minimum=1)
        if self.rotations > 4:
            raise ValueError(
                "invalid value for 'rotations' parameter. "
                "Value needs to be at most 4."
            )

    @classmethod
    def lab(cls):
        """32 x 32 x 30 cm container at 1 cm cells."""
        return cls(32, 32, 30, dh=1.0, dg=2, dz=1, n_candidates=500)

    @classmethod
    def desk(cls):
        """16 x 16 x 15 container of 6 cm cells."""
        return cls(16, 16, 15, dh=6.0, dg=1, dz=0, n_candidates=100)

    @property
    def dims(self):
        return (self.sx, self.sy, self.sz)

    @property
    def volume(self):
        return self.sx * self.sy * self.sz

    @property
    def weight(self):
        """Reward per packed cell, so an episode return equals its
        utility."""
        return 1.0 / self.volume

    def scale(self, shape):
        """Heightmap cells per cell of 'shape'."""
        return cell_scale(shape, self.dh)

    def replace(self, **changes):
        """Returns a copy with some fields changed."""
        fields = self.to_dict()
        for key in changes:
            if key not in fields:
                raise ValueError(
                    "invalid value for '%s' parameter. "
                    "Not a container field." % key
                )
        fields.update(changes)
        return ContainerSpec(**fields)

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def __eq__(self, other):
        return isinstance(other, ContainerSpec) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "ContainerSpec(%s)" % ", ".join(
            "%s=%s" % item for item in self.to_dict().items()
        )


class PackingState():
    """
        Container contents during an episode.

        Attributes:
        > spec (ContainerSpec) - the container
        > heights (np.array) - int column heights, indexed [x, y]
        > placements (list) - Placement log
        > packed_volume (int) - packed cells
        > step (int) - number of actions taken
        > done (bool) - whether the episode has ended
        > occupancy (np.array) - voxel occupancy [x, y, z], None unless
            full rescans are enabled
    """

    def __init__(self, spec, track_voxels=False):
        if not isinstance(spec, ContainerSpec):
            raise TypeError(
                "invalid value for 'spec' parameter. "
                "Expected ContainerSpec, received '%s'." % type(spec).__name__
            )
        self.spec = spec
        self.heights = np.zeros((spec.sx, spec.sy), dtype=np.int64)
        self.placements = []
        self.packed_volume = 0
        self.step = 0
        self.done = False
        self.occupancy = np.zeros(spec.dims, dtype=bool) if track_voxels else None

    def copy(self):
        other = PackingState.__new__(PackingState)
        other.spec = self.spec
        other.heights = self.heights.copy()
        other.placements = list(self.placements)
        other.packed_volume = self.packed_volume
        other.step = self.step
        other.done = self.done
        other.occupancy = None if self.occupancy is None else self.occupancy.copy()
        return other


def landing_altitude(heights, fp, lx, ly, sz=None):
    """
        Rest height of a footprint dropped with its bounding-box corner at
        (lx, ly).

        Parameters:
        > heights (np.array) - column heights [x, y]
        > fp (FootprintMaps) - the footprint
        > lx, ly (int) - anchor cell
        > sz (int) - container height, no ceiling check when None

        Returns:
        > (int) - landing altitude or INFEASIBLE
    """
    mask = fp.mask.bits
    width, depth = mask.shape
    if lx < 0 or ly < 0 or lx + width > heights.shape[0] or ly + depth > heights.shape[1]:
        return INFEASIBLE
    below = heights[lx:lx + width, ly:ly + depth]
    lz = max(int(np.max(below[mask] - fp.bottom[mask])), 0)
    if sz is not None and lz + fp.height > sz:
        return INFEASIBLE
    return lz


def altitude_field(heights, fp, sz=None):
    """
        landing_altitude evaluated at every anchor cell at once.

        Returns:
        > (np.array) - int array shaped like heights, INFEASIBLE where the
            footprint leaves the container
    """
    mask = fp.mask.bits
    field = np.full(heights.shape, INFEASIBLE, dtype=np.int64)
    if mask.shape[0] > heights.shape[0] or mask.shape[1] > heights.shape[1]:
        return field
    windows = sliding_window_view(heights, mask.shape)
    lowest = np.iinfo(np.int64).min
    rest = np.max(windows - fp.bottom, axis=(2, 3), where=mask, initial=lowest)
    rest = np.maximum(rest, 0)
    if sz is not None:
        rest = np.where(rest + fp.height > sz, INFEASIBLE, rest)
    field[:rest.shape[0], :rest.shape[1]] = rest
    return field


def place(state, item, action):
    """
        Drops an item into the container.

        Parameters:
        > state (PackingState) - live state, left unchanged
        > item (Item) - the incoming item
        > action (ActionTuple) - spin and anchor; lz must equal the landing
            altitude there

        Returns:
        > (tuple) - (PackingState, reward, done); an infeasible or
            inconsistent action ends the episode with zero reward
    """
    _validate_state(state)
    if state.done:
        raise ValueError(
            "invalid value for 'state' parameter. "
            "The episode has already ended."
        )
    if not isinstance(item, Item):
        raise TypeError(
            "invalid value for 'item' parameter. "
            "Expected Item, received '%s'." % type(item).__name__
        )
    action = ActionTuple(*action)
    spec = state.spec
    scale = spec.scale(item.shape)
    fp = item.footprint(action.theta, scale)
    after = state.copy()
    after.step += 1

    lz = landing_altitude(state.heights, fp, action.lx, action.ly, spec.sz)
    if lz == INFEASIBLE or lz != action.lz:
        logger.debug("Placement %s of '%s' failed (landing at %s)", action, item.shape.name, lz)
        after.done = True
        return after, 0.0, True

    mask = fp.mask.bits
    width, depth = mask.shape
    block = after.heights[action.lx:action.lx + width, action.ly:action.ly + depth]
    block[mask] = np.maximum(block[mask], lz + fp.top[mask])
    if after.occupancy is not None:
        _write_voxels(after.occupancy, item, action, scale)

    after.placements.append(Placement(
        item.shape.name,
        item.orientation,
        (item.spin + action.theta) % 4,
        action.theta,
        action.lx, action.ly, lz,
        fp.volume,
        int(np.prod(fp.dims)),
    ))
    after.packed_volume += fp.volume
    return after, fp.volume * spec.weight, False


def _write_voxels(occupancy, item, action, scale):
    """Marks the item's cells in a voxel occupancy volume."""
    posed = item.oriented(action.theta).occupancy
    for axis in range(3):
        posed = np.repeat(posed, scale, axis=axis)
    nx, ny, nz = posed.shape
    block = occupancy[
        action.lx:action.lx + nx, action.ly:action.ly + ny, action.lz:action.lz + nz
    ]
    if np.any(block & posed):
        raise ValueError(
            "invalid value for 'action' parameter. "
            "Placement overlaps packed cells."
        )
    block |= posed


def rescan_heights(occupancy):
    """Recomputes column heights from a voxel occupancy volume."""
    filled = occupancy.any(axis=2)
    top = occupancy.shape[2] - np.argmax(occupancy[:, :, ::-1], axis=2)
    return np.where(filled, top, 0).astype(np.int64)


def advance(state, item, action, last, partial=True):
    """
        Places an item and does the episode bookkeeping shared by the
        online and buffered loops.

        Parameters:
        > state (PackingState) - live state
        > item (Item) - item to place
        > action (ActionTuple) - its placement
        > last (bool) - whether no item is left to place afterwards
        > partial (bool) - False rescans the heightmap from the voxels

        Returns:
        > (tuple) - (PackingState, reward, done, trace record)
    """
    state, reward, done = place(state, item, action)
    if not done:
        if last:
            state.done = done = True
        if not partial:
            state.heights = rescan_heights(state.occupancy)
    action = ActionTuple(*action)
    record = {
        "step": state.step,
        "shape": item.shape.name,
        "spin": int(action.theta),
        "lx": int(action.lx),
        "ly": int(action.ly),
        "lz": int(action.lz),
        "reward": reward,
        "utility": utility(state),
    }
    return state, reward, done, record


def utility(state):
    """Packed volume as a share of the container volume."""
    _validate_state(state)
    return state.packed_volume / state.spec.volume


class PackingEnv():
    """
        Runs one episode over a problem sequence.

        Attributes:
        > spec (ContainerSpec) - the container
        > partial (bool) - update the heightmap under the placed footprint
            only; when False every step rescans a voxel occupancy volume
        > state (PackingState) - current state
        > items (list) - Item stream of the episode
        > cursor (int) - index of the incoming item
        > trace (list) - one record per step
    """

    def __init__(self, spec, partial=True):
        if not isinstance(spec, ContainerSpec):
            raise TypeError(
                "invalid value for 'spec' parameter. "
                "Expected ContainerSpec, received '%s'." % type(spec).__name__
            )
        self.spec = spec
        self.partial = partial
        self.state = None
        self.items = []
        self.cursor = 0
        self.trace = []

    def reset(self, items, dataset=None):
        """
            Starts an episode.

            Parameters:
            > items (list/ProblemSequence) - Item list, or a sequence to
                resolve against 'dataset'
            > dataset (ShapeDataset) - needed for a ProblemSequence

            Returns:
            > (Observation) - the first observation
        """
        if isinstance(items, ProblemSequence):
            if dataset is None:
                raise ValueError(
                    "invalid value for 'dataset' parameter. "
                    "A dataset is needed to resolve a problem sequence."
                )
            items = items.resolve(dataset)
        self.items = list(self._validate_items(items))
        self.state = PackingState(self.spec, track_voxels=not self.partial)
        self.state.done = not self.items
        self.cursor = 0
        self.trace = []
        return self.observe()

    @property
    def current_item(self):
        """The incoming item, None once the stream is exhausted."""
        if self.cursor < len(self.items):
            return self.items[self.cursor]
        return None

    @property
    def done(self):
        return self.state is None or self.state.done

    def observe(self):
        """Observation of the current state and incoming item."""
        item = None if self.done else self.current_item
        footprints = ()
        if item is not None:
            scale = self.spec.scale(item.shape)
            footprints = tuple(
                item.footprint(theta, scale) for theta in range(self.spec.rotations)
            )
        return Observation(
            self.state.heights.copy(), item, footprints, len(self.items) - self.cursor
        )

    def step(self, action):
        """
            Places the incoming item and advances the stream.

            Parameters:
            > action (ActionTuple) - placement of the incoming item

            Returns:
            > (tuple) - (Observation, reward, done)
        """
        if self.done:
            raise ValueError(
                "invalid value for 'action' parameter. "
                "The episode has already ended."
            )
        item = self.current_item
        last = self.cursor + 1 >= len(self.items)
        state, reward, done, record = advance(self.state, item, action, last, self.partial)
        if len(state.placements) > len(self.state.placements):
            self.cursor += 1
        self.state = state
        self.trace.append(record)
        if done:
            logger.info(
                "Episode ended after %i steps at utility %.4f", state.step, utility(state)
            )
        return self.observe(), reward, done

    def terminate(self):
        """Ends the episode without placing the incoming item."""
        if self.state is not None:
            self.state.done = True

    def export_trace(self, filename):
        """Writes the trace as JSON lines."""
        with open(filename, "w", encoding="utf-8") as trace_file:
            for record in self.trace:
                trace_file.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def _validate_items(items):
        """Validate the items parameter."""
        if not isinstance(items, (list, tuple)):
            raise TypeError(
                "invalid value for 'items' parameter. "
                "Expected list, received '%s'." % type(items).__name__
            )
        for item in items:
            if not isinstance(item, Item):
                raise TypeError(
                    "invalid value for 'items' parameter. "
                    "Expected Item entries, received '%s'." % type(item).__name__
                )
        return items


def _validate_state(state):
    """Validate a state parameter."""
    if not isinstance(state, PackingState):
        raise TypeError(
            "invalid value for 'state' parameter. "
            "Expected PackingState, received '%s'." % type(state).__name__
        )
