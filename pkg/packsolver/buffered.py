"""
    This module contains buffered packing: items wait in a K-slot buffer
    and an ordering rule picks which one the placement policy packs next.
"""

import logging
import time

from packsolver import packtools
from packsolver.packenv import PackingState, advance


logger = logging.getLogger(__name__)


class BufferState():
    """
        Staging area between the item stream and the container.

        Attributes:
        > capacity (int) - number of slots K
        > stream (list) - all items of the episode, in arrival order
        > cursor (int) - index of the next item to arrive
        > slots (list) - waiting items, oldest first
    """

    def __init__(self, capacity, stream):
        self.capacity = packtools.validate_int(capacity, "capacity", minimum=1)
        self.stream = list(stream)
        self.cursor = 0
        self.slots = []

    def refill(self):
        """Moves arriving items into free slots."""
        while len(self.slots) < self.capacity and self.cursor < len(self.stream):
            self.slots.append(self.stream[self.cursor])
            self.cursor += 1

    @property
    def pending(self):
        """Items neither placed nor dropped."""
        return len(self.slots) + len(self.stream) - self.cursor

    def remaining(self):
        """Share of the stream not yet placed."""
        return self.pending / len(self.stream) if self.stream else 0.0


def _item_volume(item):
    return item.shape.volume * item.shape.cell_cm ** 3


def select_fifo(buf, state=None, remaining=1.0):
    """Oldest waiting item."""
    _validate_buffer(buf)
    return 0


def select_lfss(buf, state=None, remaining=1.0):
    """
        Largest waiting item, the oldest among equals.

        Returns:
        > (int) - slot index
    """
    _validate_buffer(buf)
    volumes = [_item_volume(item) for item in buf.slots]
    return volumes.index(max(volumes))


def select_learned_object(buf, state, policy, remaining=1.0):
    """
        Item whose best candidate has the highest Q value under the learned
        placement ranker. Items with no feasible candidate are skipped.

        Parameters:
        > buf (BufferState) - the buffer
        > state (PackingState) - the container
        > policy (LearnedPolicy) - ranker and candidate source

        Returns:
        > (int) - slot index, None when no item fits anywhere
    """
    _validate_buffer(buf)
    best_index, best_score = None, float("-inf")
    for index, item in enumerate(buf.slots):
        _, _, _, qs = policy.score(state, item, remaining)
        score = float(qs.max()) if len(qs) else float("-inf")
        if score > best_score:
            best_index, best_score = index, score
    return best_index


def make_ordering(name, policy=None):
    """
        Ordering rule by name: "fifo", "lfss" or "learned".

        Returns:
        > (callable) - ordering(buf, state, remaining) -> slot index
    """
    if name == "fifo":
        return select_fifo
    if name == "lfss":
        return select_lfss
    if name == "learned":
        if not callable(getattr(policy, "score", None)):
            raise ValueError(
                "invalid value for 'policy' parameter. "
                "The learned ordering needs a learned policy, received '%s'."
                % type(policy).__name__
            )
        return lambda buf, state, remaining: select_learned_object(buf, state, policy, remaining)
    raise ValueError(
        "invalid value for 'name' parameter. "
        "Expected 'fifo', 'lfss' or 'learned', received '%s'." % name
    )


def _choose(buf, state, ordering, placement):
    """Refills the buffer and returns (buf, slot index, PolicyDecision);
    the decision is None when nothing can be placed."""
    buf.refill()
    if not buf.slots:
        return buf, None, None
    remaining = buf.remaining()
    index = ordering(buf, state, remaining)
    if index is None:
        return buf, None, None
    return buf, index, placement.decide(state, buf.slots[index], remaining)


def buffer_step(buf, state, ordering, placement, partial=True, timings=None):
    """
        Refills the buffer, picks an item and packs it.

        Parameters:
        > buf (BufferState) - the buffer, updated in place
        > state (PackingState) - live state
        > ordering (callable) - slot chooser
        > placement (PlacementPolicy) - places the chosen item
        > timings (list) - receives the seconds spent choosing, when given

        Returns:
        > (tuple) - (buf, PackingState, reward, done, trace record); the
            record is None when nothing could be placed
    """
    started = time.perf_counter()
    buf, index, decision = _choose(buf, state, ordering, placement)
    if timings is not None:
        timings.append(time.perf_counter() - started)
    if decision is None:
        state = state.copy()
        state.done = True
        return buf, state, 0.0, True, None

    item = buf.slots.pop(index)
    last = not buf.slots and buf.cursor >= len(buf.stream)
    state, reward, done, record = advance(state, item, decision.action, last, partial)
    return buf, state, reward, done, record


def run_buffered_episode(spec, items, placement, ordering, capacity=1, partial=True):
    """
        Plays one buffered episode.

        Parameters:
        > spec (ContainerSpec) - the container
        > items (list) - Item stream
        > placement (PlacementPolicy) - placement policy
        > ordering (callable) - slot chooser
        > capacity (int) - buffer size K; 1 reproduces online packing

        Returns:
        > (tuple) - final PackingState, trace records and the seconds spent
            on each decision
    """
    buf = BufferState(capacity, items)
    state = PackingState(spec, track_voxels=not partial)
    state.done = not buf.stream
    trace, timings = [], []
    while not state.done:
        buf, state, _, done, record = buffer_step(buf, state, ordering, placement, partial, timings)
        if record is not None:
            trace.append(record)
    logger.debug(
        "Buffered episode ended after %i placements, %i items unplaced",
        len(state.placements), buf.pending
    )
    return state, trace, timings


def _validate_buffer(buf):
    """Validate a buffer parameter."""
    if not isinstance(buf, BufferState):
        raise TypeError(
            "invalid value for 'buf' parameter. "
            "Expected BufferState, received '%s'." % type(buf).__name__
        )
    if not buf.slots:
        raise ValueError(
            "invalid value for 'buf' parameter. "
            "The buffer is empty."
        )
