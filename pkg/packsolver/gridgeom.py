"""
    This module contains the 2D grid and polygon geometry behind candidate
    generation: feasibility erosion, altitude-region growing, contour
    tracing, polygon simplification and vertex tightness analysis.

    All grids are numpy arrays indexed [x, y]. Raster order visits y in the
    outer loop and x in the inner loop.
"""

from collections import namedtuple
from math import pi

import numpy as np
import shapely
from numpy.lib.stride_tricks import sliding_window_view
from pythonds.basic.stack import Stack
from skimage.measure import approximate_polygon

from packsolver import packtools


INFEASIBLE = -1

NEIGHBOURS_4 = ((1, 0), (0, 1), (-1, 0), (0, -1))

# Counter-clockwise ring, starting west
NEIGHBOURS_8 = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))

ANGLE_TOLERANCE = 1e-9

VertexAnalysis = namedtuple(
    "VertexAnalysis", ["index", "interior_angle", "tightness", "is_convex"]
)


class BinaryGrid():
    """
        Boolean occupancy of a width x height grid of cells.

        Attributes:
        > bits (np.array) - read-only boolean array of shape (width, height)
        > width (int) - number of cells along x
        > height (int) - number of cells along y
    """

    def __init__(self, bits):
        array = packtools.validate_array(bits, "bits", 2)
        self.bits = np.array(array, dtype=bool)
        self.bits.flags.writeable = False
        self.width, self.height = self.bits.shape

    @classmethod
    def from_cells(cls, cells, width, height):
        """Returns the grid of the given size with only 'cells' set."""
        bits = np.zeros((width, height), dtype=bool)
        for x, y in cells:
            bits[x, y] = True
        return cls(bits)

    def count(self):
        """Returns the number of true cells."""
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, BinaryGrid) and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return "BinaryGrid(%ix%i, %i set)" % (self.width, self.height, self.count())


class AltitudeMap():
    """
        Landing altitude per grid cell, in height units. INFEASIBLE marks
        cells where the object cannot be placed.

        Attributes:
        > values (np.array) - read-only int array of shape (width, height)
        > width (int), height (int) - grid size
    """

    def __init__(self, values):
        array = packtools.validate_array(values, "values", 2)
        if not np.issubdtype(array.dtype, np.integer):
            raise TypeError(
                "invalid value for 'values' parameter. "
                "Expected an integer array, received '%s'." % array.dtype
            )
        if np.any((array < 0) & (array != INFEASIBLE)):
            raise ValueError(
                "invalid value for 'values' parameter. "
                "Altitudes must be non-negative or INFEASIBLE."
            )
        self.values = np.array(array, dtype=np.int64)
        self.values.flags.writeable = False
        self.width, self.height = self.values.shape

    @property
    def feasible(self):
        """Boolean array of the cells holding a landing altitude."""
        return self.values != INFEASIBLE

    def lattice(self, stride):
        """Returns the map sampled every 'stride' cells along both axes."""
        stride = packtools.validate_int(stride, "stride", minimum=1)
        return AltitudeMap(self.values[::stride, ::stride])


class RegionLabeling():
    """
        Connected region labels of an AltitudeMap.

        Attributes:
        > labels (np.array) - read-only int array, 0 where no region
        > region_count (int) - number of regions, labelled 1..region_count
    """

    def __init__(self, labels, region_count):
        self.labels = np.array(labels, dtype=np.int64)
        self.labels.flags.writeable = False
        self.region_count = region_count

    def mask(self, label):
        """Returns the BinaryGrid of the cells carrying 'label'."""
        self._validate_label(label)
        return BinaryGrid(self.labels == label)

    def _validate_label(self, label):
        """Validate a region label parameter."""
        label = packtools.validate_int(label, "label")
        if not 1 <= label <= self.region_count:
            raise ValueError(
                "invalid value for 'label' parameter. "
                "No region %i, there are %i regions." % (label, self.region_count)
            )
        return label


class Polygon():
    """
        Polygon over cell-centre coordinates, counter-clockwise.

        Attributes:
        > vertices (np.array) - float array of shape (k, 2)
        > degenerate (bool) - True when the input could not form a polygon
            with positive area; candidates then come from the contour
            cells directly
    """

    def __init__(self, vertices, degenerate=False):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.degenerate = degenerate

    def __len__(self):
        return len(self.vertices)

    def signed_area(self):
        """Returns the shoelace area, positive for counter-clockwise."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_simple(self):
        """Returns whether the polygon is a valid non-self-intersecting
        ring."""
        if self.degenerate or len(self) < 3:
            return False
        if len({tuple(v) for v in self.vertices}) != len(self):
            return False
        return bool(shapely.Polygon(self.vertices).is_valid)


def erode_feasible(container_mask, object_footprint):
    """
        Minkowski erosion of a free-space mask by an object footprint.

        Parameters:
        > container_mask (BinaryGrid) - cells free for the object
        > object_footprint (BinaryGrid) - cells the object covers, relative
            to the min-x, min-y corner of its AABB

        Returns:
        > (BinaryGrid) - same size as container_mask; cell (x, y) is set iff
            the footprint anchored at (x, y) lies entirely on set cells
    """
    mask = _validate_grid(container_mask, "container_mask").bits
    footprint = _trim(_validate_footprint(object_footprint))
    eroded = np.zeros(mask.shape, dtype=bool)
    fp_width, fp_height = footprint.shape
    if fp_width > mask.shape[0] or fp_height > mask.shape[1]:
        return BinaryGrid(eroded)

    windows = sliding_window_view(mask, footprint.shape)
    fits = np.all(windows | ~footprint, axis=(2, 3))
    eroded[:fits.shape[0], :fits.shape[1]] = fits
    return BinaryGrid(eroded)


def erode_bruteforce(container_mask, object_footprint):
    """Reference erosion by the exhaustive per-cell subset test."""
    mask = _validate_grid(container_mask, "container_mask").bits
    footprint = _trim(_validate_footprint(object_footprint))
    cells = np.argwhere(footprint)
    eroded = np.zeros(mask.shape, dtype=bool)
    for x in range(mask.shape[0]):
        for y in range(mask.shape[1]):
            eroded[x, y] = all(
                x + i < mask.shape[0] and y + j < mask.shape[1] and mask[x + i, y + j]
                for i, j in cells
            )
    return BinaryGrid(eroded)


def connected_regions(alt, delta_z):
    """
        Grows 4-connected regions of similar landing altitude. Two adjacent
        cells join when their altitudes differ by at most delta_z.

        Parameters:
        > alt (AltitudeMap) - landing altitudes
        > delta_z (int) - altitude tolerance between neighbours

        Returns:
        > (RegionLabeling) - labels assigned in raster discovery order
    """
    if not isinstance(alt, AltitudeMap):
        raise TypeError(
            "invalid value for 'alt' parameter. "
            "Expected AltitudeMap, received '%s'." % type(alt).__name__
        )
    delta_z = packtools.validate_number(delta_z, "delta_z", minimum=0)

    values = alt.values
    labels = np.zeros(values.shape, dtype=np.int64)
    region_count = 0
    for y in range(alt.height):
        for x in range(alt.width):
            if values[x, y] == INFEASIBLE or labels[x, y]:
                continue
            region_count += 1
            labels[x, y] = region_count
            _grow_region(values, labels, (x, y), delta_z)
    return RegionLabeling(labels, region_count)


def _grow_region(values, labels, seed, delta_z):
    """
        Depth-first flood fill from 'seed', writing the seed's label onto
        every cell reachable through similar-altitude 4-neighbours.
    """
    label = labels[seed]
    width, height = values.shape
    stack = Stack()
    stack.push(seed)
    while not stack.isEmpty():
        x, y = stack.pop()
        for dx, dy in NEIGHBOURS_4:
            adj_x, adj_y = x + dx, y + dy
            if not (0 <= adj_x < width and 0 <= adj_y < height):
                continue
            if labels[adj_x, adj_y] or values[adj_x, adj_y] == INFEASIBLE:
                continue
            if abs(values[adj_x, adj_y] - values[x, y]) <= delta_z:
                labels[adj_x, adj_y] = label
                stack.push((adj_x, adj_y))


def trace_contour(region, label):
    """
        Moore-neighbour tracing of the outer border of one region, with
        Jacob's stopping rule.

        Parameters:
        > region (RegionLabeling) - the labelled regions
        > label (int) - the region to trace

        Returns:
        > (list) - (x, y) border cells in counter-clockwise order, starting
            from the raster-first cell of the region. Cells on one-cell-wide
            parts appear once per pass.
    """
    if not isinstance(region, RegionLabeling):
        raise TypeError(
            "invalid value for 'region' parameter. "
            "Expected RegionLabeling, received '%s'." % type(region).__name__
        )
    label = region._validate_label(label)
    inside = region.labels == label
    if not inside.any():
        raise ValueError(
            "invalid value for 'label' parameter. "
            "Region %i has no cells." % label
        )

    start = lowest_cell(inside)
    contour = [start]
    current, backtrack = start, 0
    first_move = None
    while True:
        following, backtrack = _moore_step(inside, current, backtrack)
        if following is None:
            break
        if first_move is None:
            first_move = following
        elif current == start and following == first_move:
            break
        contour.append(following)
        current = following

    if len(contour) > 1 and contour[-1] == start:
        contour.pop()
    return contour


def _moore_step(inside, current, backtrack):
    """
        Scans the 8-neighbourhood of 'current' counter-clockwise, starting
        after the 'backtrack' direction. Returns the next border cell and
        the backtrack direction seen from it, or (None, backtrack) for an
        isolated cell.
    """
    width, height = inside.shape
    x, y = current
    for step in range(1, 9):
        index = (backtrack + step) % 8
        dx, dy = NEIGHBOURS_8[index]
        adj_x, adj_y = x + dx, y + dy
        if 0 <= adj_x < width and 0 <= adj_y < height and inside[adj_x, adj_y]:
            prev_dx, prev_dy = NEIGHBOURS_8[(index - 1) % 8]
            relative = (x + prev_dx - adj_x, y + prev_dy - adj_y)
            return (adj_x, adj_y), NEIGHBOURS_8.index(relative)
    return None, backtrack


def simplify_rdp(contour, epsilon=1.0):
    """
        Closed-curve Ramer-Douglas-Peucker. The contour is split at its two
        mutually farthest points and each arc is simplified independently.

        Parameters:
        > contour (list) - ordered (x, y) cells of a closed border
        > epsilon (float) - maximum distance of a dropped point from the
            simplified outline, in cells

        Returns:
        > (Polygon) - retained cells as a counter-clockwise polygon, flagged
            degenerate for contours under 3 cells or without area
    """
    epsilon = packtools.validate_number(epsilon, "epsilon", minimum=0)
    points = _drop_repeats(np.array(contour, dtype=float).reshape(-1, 2))
    if len(points) < 3:
        return Polygon(points, degenerate=True)

    squared = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    first, second = np.unravel_index(np.argmax(squared), squared.shape)
    rolled = np.roll(points, -first, axis=0)
    split = second - first
    head = approximate_polygon(rolled[:split + 1], tolerance=epsilon)
    tail = approximate_polygon(np.vstack([rolled[split:], rolled[:1]]), tolerance=epsilon)
    vertices = _drop_repeats(np.vstack([head[:-1], tail[:-1]]))

    polygon = Polygon(vertices)
    area = polygon.signed_area()
    if len(vertices) < 3 or abs(area) < ANGLE_TOLERANCE:
        return Polygon(vertices, degenerate=True)
    if area < 0:
        polygon = Polygon(vertices[::-1])
    return polygon


def _drop_repeats(points):
    """Removes consecutive duplicate points, including across the
    closing edge."""
    if len(points) < 2:
        return points
    keep = np.any(points != np.roll(points, 1, axis=0), axis=1)
    if not keep.any():
        return points[:1]
    return points[keep]


def analyze_vertices(poly):
    """
        Interior angle and tightness of every vertex.

        Parameters:
        > poly (Polygon) - counter-clockwise polygon

        Returns:
        > (list) - VertexAnalysis per vertex; tightness is pi minus the
            interior angle at convex vertices and 0 elsewhere
    """
    if not isinstance(poly, Polygon):
        raise TypeError(
            "invalid value for 'poly' parameter. "
            "Expected Polygon, received '%s'." % type(poly).__name__
        )
    vertices = poly.vertices
    to_next = np.roll(vertices, -1, axis=0) - vertices
    to_prev = np.roll(vertices, 1, axis=0) - vertices
    cross = to_next[:, 0] * to_prev[:, 1] - to_next[:, 1] * to_prev[:, 0]
    dot = np.sum(to_next * to_prev, axis=1)
    angles = np.mod(np.arctan2(cross, dot), 2 * pi)

    analysis = []
    for index, angle in enumerate(angles):
        convex = bool(angle < pi - ANGLE_TOLERANCE)
        analysis.append(VertexAnalysis(
            index, float(angle), float(pi - angle) if convex else 0.0, convex
        ))
    return analysis


def hull_extremes(cells):
    """
        Extreme cells of a region whose outline simplifies to no area, such
        as a one-cell-wide strip.

        Parameters:
        > cells (list) - (x, y) cells, usually a traced contour

        Returns:
        > (list) - ((x, y), tightness) pairs: the convex hull corners with
            their tightness, both ends of a straight run with tightness pi,
            or the single cell with tightness 0
    """
    points = sorted({(int(x), int(y)) for x, y in cells}, key=lambda c: (c[1], c[0]))
    if not points:
        raise ValueError(
            "invalid value for 'cells' parameter. "
            "At least one cell is needed."
        )
    hull = shapely.MultiPoint(points).convex_hull
    if hull.geom_type == "Point":
        return [(points[0], 0.0)]
    ring = hull.exterior if hull.geom_type == "Polygon" else hull
    corners = [(int(round(x)), int(round(y))) for x, y in ring.coords]
    if hull.geom_type == "LineString":
        ends = sorted(set(corners), key=lambda c: (c[1], c[0]))
        return [(end, pi) for end in ends]

    polygon = Polygon(corners[:-1])
    if polygon.signed_area() < 0:
        polygon = Polygon(corners[-2::-1])
    extremes = []
    for vertex in analyze_vertices(polygon):
        x, y = polygon.vertices[vertex.index]
        extremes.append(((int(x), int(y)), vertex.tightness))
    return extremes


def tightness_oracle(region_cells, p, radius=5, n_dirs=360):
    """
        Empirical normal-cone angle at a region cell: the share of sampled
        directions in which p is extreme among the region cells within
        'radius' of it.

        Parameters:
        > region_cells (BinaryGrid) - the region
        > p (tuple) - (x, y) cell of the region
        > radius (float) - neighbourhood radius in cells, at least 2
        > n_dirs (int) - number of evenly spaced directions, at least 90

        Returns:
        > (float) - spanned angle in radians
    """
    bits = _validate_grid(region_cells, "region_cells").bits
    radius = packtools.validate_number(radius, "radius", minimum=2)
    n_dirs = packtools.validate_int(n_dirs, "n_dirs", minimum=90)
    try:
        p_x, p_y = int(p[0]), int(p[1])
    except (TypeError, IndexError, ValueError) as exc:
        raise TypeError(
            "invalid value for 'p' parameter. "
            "Expected an (x, y) pair, received '%s'." % type(p).__name__
        ) from exc
    if not (0 <= p_x < bits.shape[0] and 0 <= p_y < bits.shape[1] and bits[p_x, p_y]):
        raise ValueError(
            "invalid value for 'p' parameter. "
            "Cell (%i, %i) is not in the region." % (p_x, p_y)
        )

    offsets = np.argwhere(bits) - np.array([p_x, p_y])
    offsets = offsets[np.sum(offsets ** 2, axis=1) <= radius ** 2]
    angles = 2 * pi * np.arange(n_dirs) / n_dirs
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    extreme = np.all(directions @ offsets.T <= ANGLE_TOLERANCE, axis=1)
    return 2 * pi / n_dirs * int(extreme.sum())


def lowest_cell(bits):
    """Returns the raster-first (lowest y, then lowest x) set cell."""
    xs, ys = np.nonzero(np.asarray(bits))
    first = np.lexsort((xs, ys))[0]
    return (int(xs[first]), int(ys[first]))


def _trim(bits):
    """Crops a boolean array to the AABB of its set cells."""
    xs, ys = np.nonzero(bits)
    return bits[xs.min():xs.max() + 1, ys.min():ys.max() + 1]


def _validate_grid(grid, name):
    """Validate a BinaryGrid parameter. Returns the grid."""
    if not isinstance(grid, BinaryGrid):
        raise TypeError(
            "invalid value for '%s' parameter. "
            "Expected BinaryGrid, received '%s'." % (name, type(grid).__name__)
        )
    return grid


def _validate_footprint(footprint):
    """Validate the object_footprint parameter. Returns its bits."""
    bits = _validate_grid(footprint, "object_footprint").bits
    if not bits.any():
        raise ValueError(
            "invalid value for 'object_footprint' parameter. "
            "Footprint must cover at least one cell."
        )
    return bits
