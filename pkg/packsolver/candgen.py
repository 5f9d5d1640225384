"""
    This module contains the CandidateGenerator, used to reduce the
    placements of an incoming item to the convex vertices of its connected
    feasible regions.
"""

import logging

from collections import namedtuple

import numpy as np

from packsolver import packtools
from packsolver.gridgeom import (
    INFEASIBLE, AltitudeMap, analyze_vertices, connected_regions, hull_extremes,
    lowest_cell, simplify_rdp, trace_contour,
)
from packsolver.packenv import ContainerSpec, PackingState, altitude_field
from packsolver.shapelib import Item


logger = logging.getLogger(__name__)

PlacementCandidate = namedtuple(
    "PlacementCandidate", ["theta", "lx", "ly", "lz", "region", "tightness"]
)


class CandidateSet():
    """
        Candidates sorted by (lz, ly, lx, theta).

        Attributes:
        > candidates (list) - PlacementCandidate list
        > truncated (bool) - whether candidates were dropped to respect the
            size limit
        > debug (dict) - regions, contours and polygons per spin, when
            requested
    """

    def __init__(self, candidates=(), truncated=False, debug=None):
        self.candidates = list(candidates)
        self.truncated = truncated
        self.debug = debug

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, index):
        return self.candidates[index]

    def __bool__(self):
        return bool(self.candidates)


def sort_key(candidate):
    """Bottom, back, left, then spin."""
    return (candidate.lz, candidate.ly, candidate.lx, candidate.theta)


def altitude_map(state, fp, stride):
    """
        Landing altitudes of a footprint on the stride lattice.

        Parameters:
        > state (PackingState) - the container
        > fp (FootprintMaps) - the footprint
        > stride (int) - grid sampling stride

        Returns:
        > (AltitudeMap) - full resolution; cells off the lattice are
            INFEASIBLE
    """
    stride = packtools.validate_int(stride, "stride", minimum=1)
    field = altitude_field(state.heights, fp, state.spec.sz)
    off_lattice = np.ones(field.shape, dtype=bool)
    off_lattice[::stride, ::stride] = False
    field[off_lattice] = INFEASIBLE
    return AltitudeMap(field)


class CandidateGenerator():
    """
        Generates placement candidates for an item.

        Attributes:
        > spec (ContainerSpec) - container and sampling parameters
        > epsilon (float) - polygon simplification tolerance, in lattice
            cells
    """

    def __init__(self, spec, epsilon=1.0):
        if not isinstance(spec, ContainerSpec):
            raise TypeError(
                "invalid value for 'spec' parameter. "
                "Expected ContainerSpec, received '%s'." % type(spec).__name__
            )
        self.spec = spec
        self.epsilon = packtools.validate_number(epsilon, "epsilon", minimum=0)

    def generate(self, state, item, debug=False):
        """
            Runs the pipeline for every distinct spin of the item: altitude
            map, connected regions, contours, simplified polygons and their
            convex vertices.

            Parameters:
            > state (PackingState) - the container
            > item (Item) - the incoming item
            > debug (bool) - whether to keep the intermediate geometry

            Returns:
            > (CandidateSet) - at most spec.n_candidates candidates; empty
                when the item fits nowhere
        """
        self._validate_inputs(state, item)
        spec = self.spec
        scale = spec.scale(item.shape)
        best = {}
        spins = []
        seen = set()
        for theta in range(spec.rotations):
            fp = item.footprint(theta, scale)
            key = (fp.mask.bits.shape, fp.mask.bits.tobytes(), fp.bottom.tobytes(), fp.top.tobytes())
            if key in seen:
                continue
            seen.add(key)
            regions = self._spin_candidates(state, fp, theta, best, debug)
            if debug:
                spins.append({"theta": theta, "regions": regions})

        candidates = sorted(best.values(), key=sort_key)
        truncated = len(candidates) > spec.n_candidates
        if truncated:
            logger.debug(
                "Truncated %i candidates to %i", len(candidates), spec.n_candidates
            )
            candidates = candidates[:spec.n_candidates]
        logger.debug("Generated %i candidates for '%s'", len(candidates), item.shape.name)
        debug_info = None
        if debug:
            debug_info = {
                "spins": spins,
                "candidates": [dict(c._asdict()) for c in candidates],
                "truncated": truncated,
            }
        return CandidateSet(candidates, truncated, debug_info)

    def _spin_candidates(self, state, fp, theta, best, debug):
        """Adds the candidates of one spin to 'best', keyed by
        (theta, lx, ly) with the largest tightness kept."""
        stride = self.spec.dg
        lattice = altitude_map(state, fp, stride).lattice(stride)
        regions = connected_regions(lattice, self.spec.dz)
        records = []
        for label in range(1, regions.region_count + 1):
            contour = trace_contour(regions, label)
            polygon = simplify_rdp(contour, self.epsilon)
            if polygon.degenerate and len(set(contour)) < 3:
                cells = [(lowest_cell(regions.labels == label), 0.0)]
            elif polygon.degenerate:
                cells = hull_extremes(contour)
            else:
                on_contour = set(contour)
                cells = []
                for vertex in analyze_vertices(polygon):
                    if not vertex.is_convex:
                        continue
                    cell = _snap(polygon.vertices[vertex.index], on_contour)
                    cells.append((cell, vertex.tightness))

            for (x, y), tightness in cells:
                candidate = PlacementCandidate(
                    theta, x * stride, y * stride, int(lattice.values[x, y]), label, tightness
                )
                key = (theta, candidate.lx, candidate.ly)
                if key not in best or best[key].tightness < tightness:
                    best[key] = candidate

            if debug:
                records.append({
                    "label": label,
                    "contour": [[x * stride, y * stride] for x, y in contour],
                    "polygon": (polygon.vertices * stride).tolist(),
                    "degenerate": polygon.degenerate,
                })
        return records

    @staticmethod
    def _validate_inputs(state, item):
        """Validate the state and item parameters."""
        if not isinstance(state, PackingState):
            raise TypeError(
                "invalid value for 'state' parameter. "
                "Expected PackingState, received '%s'." % type(state).__name__
            )
        if not isinstance(item, Item):
            raise TypeError(
                "invalid value for 'item' parameter. "
                "Expected Item, received '%s'." % type(item).__name__
            )


def _snap(vertex, on_contour):
    """Nearest contour cell to a polygon vertex."""
    cell = (int(round(vertex[0])), int(round(vertex[1])))
    if cell in on_contour:
        return cell
    return min(on_contour, key=lambda c: ((c[0] - vertex[0]) ** 2 + (c[1] - vertex[1]) ** 2, c[1], c[0]))


def generate_candidates(state, item, spec=None):
    """Candidates for 'item' under 'spec', defaulting to the state's
    container."""
    return CandidateGenerator(state.spec if spec is None else spec).generate(state, item)


def dump_debug(candidate_set, filename):
    """Writes the intermediate geometry of a generation run as JSON."""
    if candidate_set.debug is None:
        raise ValueError(
            "invalid value for 'candidate_set' parameter. "
            "Generate with debug=True to keep the geometry."
        )
    packtools.write_json(filename, candidate_set.debug)
