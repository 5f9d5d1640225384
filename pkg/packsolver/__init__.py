"""Packsolver Module"""

__version__ = "1.0.0"

from packsolver.gridgeom import (
    INFEASIBLE, AltitudeMap, BinaryGrid, Polygon, RegionLabeling,
    analyze_vertices, connected_regions, erode_feasible, hull_extremes, simplify_rdp,
    tightness_oracle, trace_contour,
)
from packsolver.shapelib import (
    Item, Pose, ProblemSequence, ShapeDataset, VoxelShape, dedup_poses,
    emit_problem, footprint_maps, gen_polycubes, rotate24, split_dataset,
    stable_poses,
)
from packsolver.packenv import (
    ActionTuple, ContainerSpec, PackingEnv, PackingState, landing_altitude,
    place, utility,
)
from packsolver.candgen import CandidateGenerator, CandidateSet, altitude_map, generate_candidates
from packsolver.policies import (
    PlacementPolicy, PolicyDecision, make_policy, rollout, select_blbf,
    select_ff, select_hm, select_mtpe, select_random,
)
from packsolver.learner import (
    DuelingRanker, FeatureExtractor, LearnedPolicy, ReplayMemory, TrainConfig,
    qvalues, select_action, td_update, train,
)
from packsolver.buffered import BufferState, buffer_step, run_buffered_episode, select_lfss, select_learned_object
from packsolver.bench import RunReport, gap, product_utility, report_emit, run_experiment, sweep
