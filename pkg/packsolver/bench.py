"""
    This module contains the experiment runner and its metrics: packing
    utility, gap, variance, placement count, decision time and product
    utility, with CSV and JSON report output.
"""

import csv
import logging
import os

from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from packsolver import packtools
from packsolver.buffered import make_ordering, run_buffered_episode
from packsolver.packenv import ContainerSpec, utility
from packsolver.policies import PlacementPolicy, make_policy, rollout
from packsolver.shapelib import ShapeDataset, emit_problem


logger = logging.getLogger(__name__)

EpisodeRow = namedtuple(
    "EpisodeRow", ["seed", "utility", "count", "product_utility", "seconds", "decisions"]
)


def gap(u_star, u):
    """
        Relative shortfall of a mean utility against a reference.

        Parameters:
        > u_star (float) - reference mean utility, positive
        > u (float) - compared mean utility

        Returns:
        > (float) - (u_star - u) / u_star
    """
    u_star = packtools.validate_number(u_star, "u_star")
    u = packtools.validate_number(u, "u")
    if u_star <= 0:
        raise ValueError(
            "invalid value for 'u_star' parameter. "
            "Value needs to be positive."
        )
    return (u_star - u) / u_star


def product_utility(state):
    """Summed bounding-box volume of the placed items over the container
    volume. May exceed 1."""
    return sum(placement.aabb_volume for placement in state.placements) / state.spec.volume


class RunReport():
    """
        Per-episode results of one method and their aggregates.

        Attributes:
        > method (str) - policy label
        > dataset (str) - dataset label
        > container (dict) - ContainerSpec fields
        > rows (list) - EpisodeRow list, in seed order
        > reference (float) - optional reference mean utility for the gap
    """

    def __init__(self, method, dataset, container, rows, reference=None):
        self.method = method
        self.dataset = dataset
        self.container = dict(container)
        self.rows = list(rows)
        self.reference = reference
        self._aggregates = None

    @property
    def seeds(self):
        return [row.seed for row in self.rows]

    @property
    def mean_utility(self):
        return float(np.mean([row.utility for row in self.rows])) if self.rows else 0.0

    @property
    def variance(self):
        """Population variance of the episode utilities."""
        if not self.rows:
            return 0.0
        utilities = np.array([row.utility for row in self.rows])
        return float(np.sum((utilities - utilities.mean()) ** 2) / len(utilities))

    @property
    def mean_count(self):
        return float(np.mean([row.count for row in self.rows])) if self.rows else 0.0

    @property
    def mean_product_utility(self):
        return float(np.mean([row.product_utility for row in self.rows])) if self.rows else 0.0

    @property
    def mean_time(self):
        """Mean seconds per placement decision."""
        decisions = sum(row.decisions for row in self.rows)
        return sum(row.seconds for row in self.rows) / decisions if decisions else 0.0

    @property
    def gap(self):
        if self.reference is None:
            return None
        return gap(self.reference, self.mean_utility)

    def aggregates(self):
        if self._aggregates is not None:
            return dict(self._aggregates)
        return {
            "method": self.method,
            "dataset": self.dataset,
            "container": self.container,
            "n_seeds": len(self.rows),
            "mean_utility": self.mean_utility,
            "variance": self.variance,
            "mean_count": self.mean_count,
            "mean_product_utility": self.mean_product_utility,
            "mean_time": self.mean_time,
            "gap": self.gap,
        }

    @classmethod
    def from_json(cls, content):
        """Report holding only the aggregates of a JSON report."""
        try:
            report = cls(content["method"], content["dataset"], content["container"], [])
        except (KeyError, TypeError) as exc:
            raise ValueError("invalid report description: %s" % exc) from exc
        report._aggregates = dict(content)
        return report

    def summary_value(self, key):
        return self.aggregates()[key]


def _episode(policy, dataset, spec, seed, capacity, ordering):
    """Plays the problem of one seed. Returns its EpisodeRow."""
    items = emit_problem(dataset, spec.dims, seed, dh=spec.dh).resolve(dataset)
    policy.reset(seed)
    if capacity == 1:
        state, timings = rollout(spec, items, policy)
    else:
        chooser = make_ordering(ordering, policy if ordering == "learned" else None)
        state, _, timings = run_buffered_episode(spec, items, policy, chooser, capacity)
    return EpisodeRow(
        seed, utility(state), len(state.placements), product_utility(state),
        float(sum(timings)), len(timings),
    )


def run_experiment(policy, dataset, spec, n_seeds=200, capacity=1, ordering="fifo",
                   model=None, workers=1, seed_offset=0, dataset_name="dataset"):
    """
        Rolls a policy out on seeded problem sequences.

        Parameters:
        > policy (str/PlacementPolicy) - policy name or instance; named
            policies get a fresh instance per episode and may run on
            several threads
        > dataset (ShapeDataset) - shapes to emit problems from
        > spec (ContainerSpec) - the container
        > n_seeds (int) - episodes, seeded seed_offset onwards
        > capacity (int) - buffer size, 1 for online packing
        > ordering (str) - buffer ordering rule
        > model (DuelingRanker) - ranker for the learned policy
        > workers (int) - episode threads

        Returns:
        > (RunReport) - rows in seed order
    """
    if not isinstance(dataset, ShapeDataset):
        raise TypeError(
            "invalid value for 'dataset' parameter. "
            "Expected ShapeDataset, received '%s'." % type(dataset).__name__
        )
    if not isinstance(spec, ContainerSpec):
        raise TypeError(
            "invalid value for 'spec' parameter. "
            "Expected ContainerSpec, received '%s'." % type(spec).__name__
        )
    n_seeds = packtools.validate_int(n_seeds, "n_seeds", minimum=0)
    capacity = packtools.validate_int(capacity, "capacity", minimum=1)
    workers = packtools.validate_int(workers, "workers", minimum=1)
    seeds = list(range(seed_offset, seed_offset + n_seeds))

    named = not isinstance(policy, PlacementPolicy)
    sample = make_policy(policy, spec, 0, model) if named else policy
    if capacity > 1:
        make_ordering(ordering, sample if ordering == "learned" else None)

    if not named:
        method = policy.name
        rows = [_episode(policy, dataset, spec, seed, capacity, ordering) for seed in seeds]
    else:
        method = policy

        def play(seed):
            return _episode(make_policy(policy, spec, seed, model), dataset, spec, seed, capacity, ordering)

        if workers == 1:
            rows = [play(seed) for seed in seeds]
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                rows = list(executor.map(play, seeds))

    if capacity > 1:
        method = "%s+%s(K=%i)" % (method, ordering, capacity)
    report = RunReport(method, dataset_name, spec.to_dict(), rows)
    logger.info(
        "%s: mean utility %.4f over %i episodes", method, report.mean_utility, len(rows)
    )
    return report


def report_emit(report, prefix, timing=False):
    """
        Writes '<prefix>.csv' with one row per episode and '<prefix>.json'
        with the aggregates.

        Parameters:
        > report (RunReport) - the report
        > prefix (str) - output path without extension
        > timing (bool) - whether the CSV carries decision seconds

        Returns:
        > (tuple) - (csv path, json path)
    """
    if not isinstance(report, RunReport):
        raise TypeError(
            "invalid value for 'report' parameter. "
            "Expected RunReport, received '%s'." % type(report).__name__
        )
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    csv_path, json_path = prefix + ".csv", prefix + ".json"
    header = ["seed", "utility", "count", "product_utility"]
    if timing:
        header += ["seconds", "decisions"]
    with open(csv_path, "w", newline="", encoding="utf-8") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        for row in report.rows:
            values = [row.seed, repr(row.utility), row.count, repr(row.product_utility)]
            if timing:
                values += [repr(row.seconds), row.decisions]
            writer.writerow(values)
    packtools.write_json(json_path, report.aggregates())
    logger.info("Wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


def read_rows(csv_path):
    """Reads the episode rows of a report CSV."""
    with open(csv_path, "r", newline="", encoding="utf-8") as csv_file:
        rows = []
        for record in csv.DictReader(csv_file):
            rows.append(EpisodeRow(
                int(record["seed"]), float(record["utility"]), int(record["count"]),
                float(record["product_utility"]), float(record.get("seconds") or 0.0),
                int(record.get("decisions") or 0),
            ))
        return rows


def load_report(json_path):
    """Reads a report JSON, with its rows when the CSV is beside it."""
    report = RunReport.from_json(packtools.read_json(json_path))
    csv_path = os.path.splitext(json_path)[0] + ".csv"
    if os.path.exists(csv_path):
        report.rows = read_rows(csv_path)
    return report


def compare_reports(reports):
    """
        Comparison table across methods, with gaps against the best mean
        utility.

        Returns:
        > (list) - one dict per report: method, mean_utility, gap,
            variance, mean_count, mean_time
    """
    if not reports:
        raise ValueError(
            "invalid value for 'reports' parameter. "
            "At least one report is needed."
        )
    best = max(report.summary_value("mean_utility") for report in reports)
    table = []
    for report in reports:
        mean = report.summary_value("mean_utility")
        table.append({
            "method": report.method,
            "mean_utility": mean,
            "gap": gap(best, mean) if best > 0 else 0.0,
            "variance": report.summary_value("variance"),
            "mean_count": report.summary_value("mean_count"),
            "mean_time": report.summary_value("mean_time"),
        })
    return table


def write_comparison(table, filename):
    """Writes a comparison table as CSV."""
    columns = ["method", "mean_utility", "gap", "variance", "mean_count", "mean_time"]
    with open(filename, "w", newline="", encoding="utf-8") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=columns)
        writer.writeheader()
        for entry in table:
            writer.writerow(entry)


SWEEP_PARAMETERS = ("dh", "dg", "dz", "n_candidates")


def sweep(policy, dataset, spec, parameter, values, n_seeds=200, **options):
    """
        Reruns an experiment with one container parameter varied.

        Parameters:
        > parameter (str) - one of dh, dg, dz, n_candidates
        > values (list) - values to try

        Returns:
        > (list) - one RunReport per value
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(
            "invalid value for 'parameter' parameter. "
            "Expected one of %s, received '%s'." % (", ".join(SWEEP_PARAMETERS), parameter)
        )
    reports = []
    for value in values:
        changes = {parameter: value}
        if parameter == "dh":
            # Same physical container at the new cell size
            factor = spec.dh / value
            changes.update(
                sx=max(int(spec.sx * factor), 1),
                sy=max(int(spec.sy * factor), 1),
                sz=max(int(spec.sz * factor), 1),
            )
        varied = spec.replace(**changes)
        report = run_experiment(policy, dataset, varied, n_seeds, **options)
        report.method = "%s[%s=%s]" % (report.method, parameter, value)
        reports.append(report)
    return reports
