"""
    This module contains the voxel shape model: the 24 axis-aligned
    orientations, planar-stable pose enumeration, rotation-symmetric pose
    deduplication, footprint maps, shape datasets and the seeded problem
    emitter.
"""

import logging
import os

from collections import namedtuple
from itertools import permutations, product

import numpy as np
import shapely

from packsolver import packtools
from packsolver.gridgeom import BinaryGrid


logger = logging.getLogger(__name__)


def _rotation_group():
    """Returns the 24 signed permutation matrices with determinant +1,
    identity first."""
    rotations = []
    for axes, signs in product(permutations(range(3)), product((1, -1), repeat=3)):
        matrix = np.zeros((3, 3), dtype=np.int64)
        for row, (axis, sign) in enumerate(zip(axes, signs)):
            matrix[row, axis] = sign
        if round(np.linalg.det(matrix)) == 1:
            rotations.append(matrix)
    return rotations


ROTATIONS = _rotation_group()


def _rotation_index(matrix):
    for index, rotation in enumerate(ROTATIONS):
        if np.array_equal(rotation, matrix):
            return index
    raise ValueError("matrix is not an axis-aligned rotation")


# COMPOSE[i][j] is the rotation R_i @ R_j
COMPOSE = [[_rotation_index(a @ b) for b in ROTATIONS] for a in ROTATIONS]
INVERSE = [_rotation_index(rotation.T) for rotation in ROTATIONS]

# Quarter turns about +z
SPIN_Z = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.int64)
SPIN_INDEX = [
    _rotation_index(np.linalg.matrix_power(SPIN_Z, turns)) for turns in range(4)
]

DEFAULT_DEDUP_TOLERANCE = 0.05

Pose = namedtuple("Pose", ["orientation", "stable"])

FootprintMaps = namedtuple(
    "FootprintMaps", ["mask", "bottom", "top", "height", "volume", "com_z", "dims"]
)

ProblemItem = namedtuple("ProblemItem", ["shape", "pose", "spin"])


class VoxelShape():
    """
        A shape made of unit cells, trimmed to its axis-aligned bounding
        box.

        Attributes:
        > name (str) - identifier used by datasets and problem files
        > occupancy (np.array) - read-only boolean array [x, y, z]
        > cell_cm (float) - edge length of one cell in cm
        > category (str) - optional category used for stratified emission
        > dims (tuple) - (nx, ny, nz) of the bounding box
        > volume (int) - number of occupied cells
    """

    def __init__(self, name, occupancy, cell_cm=1.0, category=None):
        if not isinstance(name, str):
            raise TypeError(
                "invalid value for 'name' parameter. "
                "Expected str, received '%s'." % type(name).__name__
            )
        occupancy = np.array(packtools.validate_array(occupancy, "occupancy", 3), dtype=bool)
        if not occupancy.any():
            raise ValueError(
                "invalid value for 'occupancy' parameter. "
                "Shape must occupy at least one cell."
            )
        self.name = name
        self.cell_cm = packtools.validate_number(cell_cm, "cell_cm", minimum=1e-9)
        self.category = category
        self.occupancy = _trim3(occupancy)
        self.occupancy.flags.writeable = False
        self.dims = tuple(int(n) for n in self.occupancy.shape)
        self.volume = int(self.occupancy.sum())
        self._footprints = {}

    @classmethod
    def from_voxels(cls, name, voxels, cell_cm=1.0, category=None):
        """Builds a shape from a list of (x, y, z) cells."""
        cells = np.array(voxels, dtype=np.int64).reshape(-1, 3)
        if len(cells) == 0:
            raise ValueError(
                "invalid value for 'voxels' parameter. "
                "Shape must occupy at least one cell."
            )
        cells -= cells.min(axis=0)
        occupancy = np.zeros(cells.max(axis=0) + 1, dtype=bool)
        occupancy[tuple(cells.T)] = True
        return cls(name, occupancy, cell_cm, category)

    def voxels(self):
        """Returns the occupied cells as [x, y, z] lists ordered by
        (z, y, x)."""
        cells = np.argwhere(self.occupancy)
        order = np.lexsort((cells[:, 0], cells[:, 1], cells[:, 2]))
        return cells[order].tolist()

    def center_of_mass(self):
        """Returns the (x, y, z) centre of mass of uniform-density cells."""
        return np.argwhere(self.occupancy).mean(axis=0) + 0.5

    def to_json(self):
        content = {
            "name": self.name,
            "dims": list(self.dims),
            "cell_cm": self.cell_cm,
            "voxels": self.voxels(),
        }
        if self.category is not None:
            content["category"] = self.category
        return content

    @classmethod
    def from_json(cls, content):
        try:
            shape = cls.from_voxels(
                content["name"], content["voxels"],
                content.get("cell_cm", 1.0), content.get("category")
            )
        except (KeyError, TypeError) as exc:
            raise ValueError("invalid shape description: %s" % exc) from exc
        if "dims" in content and tuple(content["dims"]) != shape.dims:
            raise ValueError(
                "invalid shape description: dims %s do not match the voxels of "
                "'%s' %s." % (content["dims"], shape.name, shape.dims)
            )
        return shape

    def __eq__(self, other):
        return (
            isinstance(other, VoxelShape)
            and self.name == other.name
            and np.array_equal(self.occupancy, other.occupancy)
        )

    def __hash__(self):
        return hash((self.name, self.dims, self.occupancy.tobytes()))

    def __repr__(self):
        return "VoxelShape(%r, dims=%s, volume=%i)" % (self.name, self.dims, self.volume)


class Item(namedtuple("Item", ["shape", "orientation", "spin"])):
    """
        A shape in the pose and vertical spin it arrives in.

        Attributes:
        > shape (VoxelShape) - the shape
        > orientation (int) - rotation index of the stable pose
        > spin (int) - emitted quarter turns about z, 0 to 3
    """

    __slots__ = ()

    def footprint(self, theta=0, scale=1):
        """Footprint maps with 'theta' extra quarter turns on top of the
        emitted spin."""
        return footprint_maps(self.shape, self.orientation, (self.spin + theta) % 4, scale)

    def oriented(self, theta=0):
        """The shape as placed with 'theta' extra quarter turns."""
        return rotate24(self.shape, placed_rotation(self.orientation, (self.spin + theta) % 4))


def placed_rotation(orientation, spin):
    """Rotation index of 'orientation' followed by 'spin' quarter turns."""
    return COMPOSE[SPIN_INDEX[spin % 4]][orientation]


def rotate24(shape, orientation):
    """
        Rotates a shape by one of the 24 axis-aligned rotations.

        Parameters:
        > shape (VoxelShape) - shape to rotate
        > orientation (int) - rotation index, 0 is the identity

        Returns:
        > (VoxelShape) - rotated shape, trimmed to its bounding box
    """
    _validate_shape(shape)
    orientation = _validate_orientation(orientation)
    if orientation == 0:
        return shape
    cells = np.argwhere(shape.occupancy) @ ROTATIONS[orientation].T
    return VoxelShape.from_voxels(shape.name, cells, shape.cell_cm, shape.category)


def is_stable(shape):
    """Returns whether the shape's centre of mass projects strictly inside
    the convex hull of its bottom-layer cells."""
    base = np.argwhere(shape.occupancy[:, :, 0])
    corners = np.concatenate([base, base + [1, 0], base + [0, 1], base + [1, 1]])
    hull = shapely.MultiPoint(corners.astype(float)).convex_hull
    com_x, com_y, _ = shape.center_of_mass()
    return bool(hull.contains(shapely.Point(com_x, com_y)))


def stable_poses(shape):
    """
        Enumerates the planar-stable poses of a shape.

        Parameters:
        > shape (VoxelShape) - shape to analyse

        Returns:
        > (list) - stable Pose for each of the 24 orientations that rests in
            equilibrium on a flat floor, in rotation index order
    """
    _validate_shape(shape)
    return [
        Pose(index, True) for index in range(len(ROTATIONS))
        if is_stable(rotate24(shape, index))
    ]


def canonical_orientation(shape, orientation):
    """
        Picks the representative among the four vertical spins of an
        orientation: x extent no larger than y extent, then centre of mass
        x no larger than y, ties broken by occupancy.

        Returns:
        > (int) - rotation index of the representative
    """
    best_key, best_index = None, orientation
    for turns in range(4):
        index = COMPOSE[SPIN_INDEX[turns]][orientation]
        spun = rotate24(shape, index)
        com_x, com_y, _ = spun.center_of_mass()
        key = (
            spun.dims[0] > spun.dims[1],
            com_x > com_y + 1e-9,
            spun.dims,
            np.packbits(spun.occupancy).tobytes(),
        )
        if best_key is None or key < best_key:
            best_key, best_index = key, index
    return best_index


def xor_ratio(first, second):
    """Share of differing cells between two shapes overlaid at their
    bounding-box corners, relative to the first shape's volume."""
    dims = np.maximum(first.occupancy.shape, second.occupancy.shape)
    overlay = np.zeros((2,) + tuple(dims), dtype=bool)
    for layer, shape in enumerate((first, second)):
        nx, ny, nz = shape.occupancy.shape
        overlay[layer, :nx, :ny, :nz] = shape.occupancy
    return float(np.logical_xor(overlay[0], overlay[1]).sum()) / first.volume


def dedup_poses(poses, shape, c=DEFAULT_DEDUP_TOLERANCE):
    """
        Removes rotation-symmetric duplicates from a pose list.

        Parameters:
        > poses (list) - Pose list, usually from stable_poses
        > shape (VoxelShape) - the posed shape
        > c (float) - largest cell-difference ratio still counted as the
            same pose, in [0, 1)

        Returns:
        > (list) - canonical poses in order of first appearance
    """
    _validate_shape(shape)
    c = packtools.validate_number(c, "c", minimum=0, below=1)
    if not isinstance(poses, (list, tuple)):
        raise TypeError(
            "invalid value for 'poses' parameter. "
            "Expected list, received '%s'." % type(poses).__name__
        )

    kept, kept_shapes = [], []
    for pose in poses:
        index = canonical_orientation(shape, _validate_orientation(pose.orientation))
        posed = rotate24(shape, index)
        if any(xor_ratio(other, posed) <= c for other in kept_shapes):
            continue
        kept.append(Pose(index, pose.stable))
        kept_shapes.append(posed)
    return kept


def footprint_maps(shape, orientation, spin=0, scale=1):
    """
        Column maps of a posed shape seen from above.

        Parameters:
        > shape (VoxelShape) - the shape
        > orientation (int) - rotation index of the pose
        > spin (int) - quarter turns about z applied after the pose
        > scale (int) - heightmap cells per shape cell along each axis

        Returns:
        > (FootprintMaps) - mask of occupied columns, bottom gap and top per
            column (0 off the mask), height, volume and centre-of-mass
            height in heightmap cells
    """
    _validate_shape(shape)
    orientation = _validate_orientation(orientation)
    spin = packtools.validate_int(spin, "spin") % 4
    scale = packtools.validate_int(scale, "scale", minimum=1)
    key = (orientation, spin, scale)
    cached = shape._footprints.get(key)
    if cached is not None:
        return cached

    posed = rotate24(shape, placed_rotation(orientation, spin))
    occupancy = posed.occupancy
    for axis in range(3):
        occupancy = np.repeat(occupancy, scale, axis=axis)

    mask = occupancy.any(axis=2)
    height = occupancy.shape[2]
    bottom = np.where(mask, np.argmax(occupancy, axis=2), 0)
    top = np.where(mask, height - np.argmax(occupancy[:, :, ::-1], axis=2), 0)
    maps = FootprintMaps(
        BinaryGrid(mask),
        bottom.astype(np.int64),
        top.astype(np.int64),
        int(height),
        int(posed.volume * scale ** 3),
        float(posed.center_of_mass()[2] * scale),
        tuple(int(n) for n in occupancy.shape),
    )
    shape._footprints[key] = maps
    return maps


def gen_polycubes():
    """
        The built-in set of eight polycubes of up to four 6 cm cubes.

        Returns:
        > (list) - VoxelShape list
    """
    layouts = [
        ("monocube", [(0, 0, 0)]),
        ("domino", [(0, 0, 0), (1, 0, 0)]),
        ("tri-i", [(0, 0, 0), (1, 0, 0), (2, 0, 0)]),
        ("tri-l", [(0, 0, 0), (1, 0, 0), (0, 1, 0)]),
        ("tetra-t", [(0, 0, 0), (1, 0, 0), (2, 0, 0), (1, 1, 0)]),
        ("tetra-l", [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0)]),
        ("tetra-s", [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 0)]),
        ("tripod", [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]),
    ]
    return [
        VoxelShape.from_voxels(name, voxels, cell_cm=6.0, category="polycube")
        for name, voxels in layouts
    ]


def load_shape(filename):
    """Reads a shape file."""
    return VoxelShape.from_json(packtools.read_json(filename))


def save_shape(shape, filename):
    """Writes a shape file."""
    packtools.write_json(filename, shape.to_json())


class ShapeDataset():
    """
        Shapes together with their deduplicated stable poses.

        Attributes:
        > shapes (list) - VoxelShape list, names unique
        > poses (dict) - shape name to list of stable Pose
    """

    def __init__(self, shapes, c=DEFAULT_DEDUP_TOLERANCE):
        shapes = list(self._validate_shapes(shapes))
        self.shapes = shapes
        self.poses = {}
        for shape in shapes:
            self.poses[shape.name] = dedup_poses(stable_poses(shape), shape, c)
            if not self.poses[shape.name]:
                logger.warning("Shape '%s' has no stable pose", shape.name)
        self._by_name = {shape.name: shape for shape in shapes}

    def __len__(self):
        return len(self.shapes)

    def __getitem__(self, name):
        return self._by_name[name]

    def categories(self):
        """Returns category to shape list, in order of first appearance."""
        groups = {}
        for shape in self.shapes:
            groups.setdefault(shape.category, []).append(shape)
        return groups

    @classmethod
    def from_manifest(cls, filename, c=DEFAULT_DEDUP_TOLERANCE):
        """Loads the shape files listed in a manifest. Relative paths are
        resolved against the manifest's directory."""
        paths = packtools.read_json(filename)
        if not isinstance(paths, list):
            raise ValueError(
                "invalid manifest '%s'. Expected a list of shape files." % filename
            )
        root = os.path.dirname(os.path.abspath(filename))
        return cls([load_shape(os.path.join(root, path)) for path in paths], c)

    def save(self, directory):
        """Writes one file per shape and a manifest.json. Returns the
        manifest path."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for shape in self.shapes:
            path = "%s.json" % shape.name
            save_shape(shape, os.path.join(directory, path))
            paths.append(path)
        manifest = os.path.join(directory, "manifest.json")
        packtools.write_json(manifest, paths)
        logger.info("Wrote %i shapes to %s", len(paths), directory)
        return manifest

    @staticmethod
    def _validate_shapes(shapes):
        """Validate the shapes parameter."""

        # Check that shapes is a non-empty list of shapes
        if not isinstance(shapes, (list, tuple)):
            raise TypeError(
                "invalid value for 'shapes' parameter. "
                "Expected list, received '%s'." % type(shapes).__name__
            )
        if not shapes:
            raise ValueError(
                "invalid value for 'shapes' parameter. "
                "Dataset must hold at least one shape."
            )
        for shape in shapes:
            _validate_shape(shape)

        # Check that names are unique
        names = [shape.name for shape in shapes]
        if len(set(names)) != len(names):
            raise ValueError(
                "invalid value for 'shapes' parameter. "
                "Shape names must be unique."
            )
        return shapes


def split_dataset(dataset, holdout=0.2, seed=0):
    """
        Holds out a seeded share of the shapes of every category, keeping
        at least one shape of each category for training.

        Returns:
        > (tuple) - (train, held_out) datasets; held_out is None when no
            shape was held out
    """
    holdout = packtools.validate_number(holdout, "holdout", minimum=0, below=1)
    rng = np.random.default_rng(seed)
    train, held_out = [], []
    for shapes in dataset.categories().values():
        count = min(int(holdout * len(shapes)), len(shapes) - 1)
        chosen = set(rng.permutation(len(shapes))[:count].tolist())
        for index, shape in enumerate(shapes):
            (held_out if index in chosen else train).append(shape)
    return (
        ShapeDataset(train),
        ShapeDataset(held_out) if held_out else None,
    )


def cell_scale(shape, dh):
    """Heightmap cells per shape cell. The shape cell must be a whole
    number of heightmap cells."""
    ratio = shape.cell_cm / dh
    scale = int(round(ratio))
    if scale < 1 or abs(ratio - scale) > 1e-6:
        raise ValueError(
            "invalid value for 'dh' parameter. "
            "%s cm does not divide the %s cm cells of '%s'." % (dh, shape.cell_cm, shape.name)
        )
    return scale


def fits_container(shape, orientation, container_dims, scale=1):
    """Returns whether the posed shape fits the container in some spin."""
    nx, ny, nz = (n * scale for n in rotate24(shape, orientation).dims)
    sx, sy, sz = container_dims
    return nz <= sz and ((nx <= sx and ny <= sy) or (ny <= sx and nx <= sy))


class ProblemSequence():
    """
        An ordered stream of items to pack.

        Attributes:
        > container (tuple) - (Sx, Sy, Sz) in heightmap cells
        > seed (int) - emitter seed
        > items (list) - ProblemItem list of (shape name, orientation, spin)
    """

    def __init__(self, container, seed, items):
        self.container = tuple(int(n) for n in container)
        self.seed = seed
        self.items = [ProblemItem(str(s), int(p), int(r) % 4) for s, p, r in items]

    def __len__(self):
        return len(self.items)

    def resolve(self, dataset):
        """Returns the Item list with shapes looked up in 'dataset'."""
        try:
            return [Item(dataset[item.shape], item.pose, item.spin) for item in self.items]
        except KeyError as exc:
            raise ValueError(
                "invalid value for 'dataset' parameter. "
                "Unknown shape %s." % exc
            ) from exc

    def to_json(self):
        return {
            "container": list(self.container),
            "seed": self.seed,
            "items": [
                {"shape": item.shape, "pose": item.pose, "spin": item.spin}
                for item in self.items
            ],
        }

    @classmethod
    def from_json(cls, content):
        try:
            return cls(
                content["container"], content["seed"],
                [(item["shape"], item["pose"], item["spin"]) for item in content["items"]]
            )
        except (KeyError, TypeError) as exc:
            raise ValueError("invalid problem description: %s" % exc) from exc

    def save(self, filename):
        packtools.write_json(filename, self.to_json())

    @classmethod
    def load(cls, filename):
        return cls.from_json(packtools.read_json(filename))


def emit_problem(dataset, container_dims, seed, dh=None, mode="uniform"):
    """
        Draws items with replacement until their total volume exceeds the
        container volume.

        Parameters:
        > dataset (ShapeDataset) - shapes and their stable poses
        > container_dims (tuple) - (Sx, Sy, Sz) in heightmap cells
        > seed (int) - generator seed
        > dh (float) - heightmap cell size in cm, defaults to each shape's
            own cell size
        > mode (str) - "uniform" draws shape, pose and spin uniformly;
            "category" draws a category, then a shape in it, and uses its
            most stable pose

        Returns:
        > (ProblemSequence) - the emitted sequence
    """
    if not isinstance(dataset, ShapeDataset):
        raise TypeError(
            "invalid value for 'dataset' parameter. "
            "Expected ShapeDataset, received '%s'." % type(dataset).__name__
        )
    container_dims = tuple(packtools.validate_int(n, "container_dims", minimum=1) for n in container_dims)
    if len(container_dims) != 3:
        raise ValueError(
            "invalid value for 'container_dims' parameter. "
            "Expected 3 dimensions, received %i." % len(container_dims)
        )
    if mode not in ("uniform", "category"):
        raise ValueError(
            "invalid value for 'mode' parameter. "
            "Expected 'uniform' or 'category', received '%s'." % mode
        )

    fitting = {}
    for shape in dataset.shapes:
        scale = 1 if dh is None else cell_scale(shape, dh)
        poses = [
            pose.orientation for pose in dataset.poses[shape.name]
            if fits_container(shape, pose.orientation, container_dims, scale)
        ]
        if not poses:
            raise ValueError(
                "invalid value for 'dataset' parameter. "
                "Shape '%s' does not fit the container in any pose." % shape.name
            )
        fitting[shape.name] = (poses, shape.volume * scale ** 3)

    rng = np.random.default_rng(seed)
    capacity = int(np.prod(container_dims))
    groups = list(dataset.categories().values())
    items, total = [], 0
    while total <= capacity:
        if mode == "uniform":
            shape = dataset.shapes[rng.integers(len(dataset.shapes))]
            poses, volume = fitting[shape.name]
            pose = poses[rng.integers(len(poses))]
        else:
            group = groups[rng.integers(len(groups))]
            shape = group[rng.integers(len(group))]
            poses, volume = fitting[shape.name]
            pose = most_stable_pose(shape, poses)
        items.append((shape.name, pose, int(rng.integers(4))))
        total += volume
    logger.debug("Emitted %i items for seed %s", len(items), seed)
    return ProblemSequence(container_dims, seed, items)


def most_stable_pose(shape, orientations):
    """Returns the orientation with the lowest centre of mass, first on
    ties."""
    heights = [rotate24(shape, index).center_of_mass()[2] for index in orientations]
    return orientations[int(np.argmin(heights))]


def _trim3(occupancy):
    """Crops a 3D boolean array to the bounding box of its set cells."""
    cells = np.argwhere(occupancy)
    low, high = cells.min(axis=0), cells.max(axis=0) + 1
    return occupancy[low[0]:high[0], low[1]:high[1], low[2]:high[2]].copy()


def _validate_shape(shape):
    """Validate a shape parameter."""
    if not isinstance(shape, VoxelShape):
        raise TypeError(
            "invalid value for 'shape' parameter. "
            "Expected VoxelShape, received '%s'." % type(shape).__name__
        )


def _validate_orientation(orientation):
    """Validate an orientation index. Returns it."""
    orientation = packtools.validate_int(orientation, "orientation", minimum=0)
    if orientation >= len(ROTATIONS):
        raise ValueError(
            "invalid value for 'orientation' parameter. "
            "Value needs to be below %i." % len(ROTATIONS)
        )
    return orientation
