"""
    Command line interface of packsolver.

    Every long flag can also be given in a YAML file passed with --config,
    under the flag name with dashes or underscores. Flags given on the
    command line win over the file, the file wins over the defaults.
"""

import argparse
import json
import logging
import os
import sys

import yaml

from packsolver import bench, candgen, learner, packtools, policies, shapelib
from packsolver.packenv import ContainerSpec, PackingEnv


logger = logging.getLogger(__name__)

DEFAULTS = {
    "preset": "desk",
    "container": None,
    "dh": None,
    "dg": None,
    "dz": None,
    "n_candidates": None,
    "dataset": None,
    "policy": "blbf",
    "buffer": 1,
    "ordering": "lfss",
    "seeds": 0,
    "episodes": 200,
    "workers": 1,
    "out": "out",
    "model": None,
    "timing": False,
    "mode": "uniform",
    "c": shapelib.DEFAULT_DEDUP_TOLERANCE,
    "frames": 200000,
    "train_workers": 16,
    "interleaved": False,
    "baselines": "blbf,random-pi",
    "param": "dg",
    "values": "1,2,4",
    "steps": 0,
}


def _container(text):
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected X,Y,Z, received '%s'" % text) from exc
    if len(dims) != 3:
        raise argparse.ArgumentTypeError("expected X,Y,Z, received '%s'" % text)
    return dims


def build_parser():
    parser = argparse.ArgumentParser(
        prog="packsolver", description="Online packing of voxel shapes."
    )
    parser.add_argument("--config", help="YAML file of flag values")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings only")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=["lab", "desk"], default=None)
    common.add_argument("--container", type=_container, default=None, help="X,Y,Z in cells")
    common.add_argument("--dh", type=float, default=None, help="cell size in cm")
    common.add_argument("--dg", type=int, default=None, help="grid stride")
    common.add_argument("--dz", type=int, default=None, help="region altitude tolerance")
    common.add_argument("--N", dest="n_candidates", type=int, default=None, help="candidate limit")
    common.add_argument("--dataset", default=None, help="shape manifest, built-in polycubes if unset")
    common.add_argument("--policy", choices=sorted(policies.POLICIES), default=None)
    common.add_argument("--buffer", type=int, default=None, help="buffer size K")
    common.add_argument("--ordering", choices=["fifo", "lfss", "learned"], default=None)
    common.add_argument("--seeds", type=int, default=None, help="first seed")
    common.add_argument("--episodes", type=int, default=None, help="number of seeds")
    common.add_argument("--workers", type=int, default=None, help="episode threads")
    common.add_argument("--model", default=None, help="ranker model file")
    common.add_argument("--out", default=None, help="output path or prefix")
    common.add_argument("--timing", action="store_const", const=True, default=None)

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen-shapes", parents=[common], help="write the built-in polycubes")
    poses = commands.add_parser("poses", parents=[common], help="stable poses of a shape file")
    poses.add_argument("shape")
    poses.add_argument("--c", type=float, default=None, help="pose dedup tolerance")
    emit = commands.add_parser("emit", parents=[common], help="write problem sequences")
    emit.add_argument("--mode", choices=["uniform", "category"], default=None)
    commands.add_parser("run", parents=[common], help="roll out a policy and report")
    train = commands.add_parser("train", parents=[common], help="train the ranker")
    train.add_argument("--frames", type=int, default=None)
    train.add_argument("--train-workers", type=int, default=None)
    train.add_argument("--interleaved", action="store_const", const=True, default=None)
    evaluate = commands.add_parser("eval", parents=[common], help="model against baselines")
    evaluate.add_argument("--baselines", default=None, help="comma separated policy names")
    report = commands.add_parser("report", parents=[common], help="compare report files")
    report.add_argument("reports", nargs="+", help="report JSON files")
    sweep = commands.add_parser("sweep", parents=[common], help="vary one container parameter")
    sweep.add_argument("--param", choices=bench.SWEEP_PARAMETERS, default=None)
    sweep.add_argument("--values", default=None, help="comma separated values")
    dump = commands.add_parser("candidates", parents=[common], help="dump candidate geometry")
    dump.add_argument("--steps", type=int, default=None, help="BLBF placements made first")
    return parser


def load_config(filename):
    """Reads a YAML flag file into a dict keyed by flag names."""
    with open(filename, "r", encoding="utf-8") as config_file:
        try:
            content = yaml.safe_load(config_file) or {}
        except yaml.YAMLError as exc:
            raise ValueError("invalid YAML in '%s': %s" % (filename, exc)) from exc
    if not isinstance(content, dict):
        raise ValueError("invalid config '%s'. Expected a mapping." % filename)
    options = {}
    for key, value in content.items():
        key = str(key).replace("-", "_")
        if key == "N":
            key = "n_candidates"
        if key == "container" and isinstance(value, str):
            value = _container(value)
        options[key] = value
    return options


def resolve_options(args):
    """Defaults, then the config file, then explicit flags."""
    options = dict(DEFAULTS)
    if args.config:
        options.update(load_config(args.config))
    for key, value in vars(args).items():
        if value is not None:
            options[key] = value
    return options


def make_spec(options):
    """ContainerSpec from the preset and any overriding flags."""
    spec = ContainerSpec.lab() if options["preset"] == "lab" else ContainerSpec.desk()
    changes = {}
    if options["container"] is not None:
        changes.update(zip(("sx", "sy", "sz"), options["container"]))
    for key in ("dh", "dg", "dz", "n_candidates"):
        if options[key] is not None:
            changes[key] = options[key]
    return spec.replace(**changes) if changes else spec


def make_dataset(options):
    if options["dataset"]:
        return shapelib.ShapeDataset.from_manifest(options["dataset"], options["c"])
    return shapelib.ShapeDataset(shapelib.gen_polycubes(), options["c"])


def _dataset_name(options):
    if options["dataset"]:
        return os.path.basename(os.path.dirname(os.path.abspath(options["dataset"])))
    return "polycubes"


def _load_model(options):
    return learner.load_model(options["model"]) if options["model"] else None


def cmd_gen_shapes(options):
    shapelib.ShapeDataset(shapelib.gen_polycubes()).save(options["out"])


def cmd_poses(options):
    shape = shapelib.load_shape(options["shape"])
    stable = shapelib.stable_poses(shape)
    kept = shapelib.dedup_poses(stable, shape, options["c"])
    content = {
        "shape": shape.name,
        "stable": [pose.orientation for pose in stable],
        "poses": [
            {"orientation": pose.orientation, "dims": list(shapelib.rotate24(shape, pose.orientation).dims)}
            for pose in kept
        ],
    }
    if options["out"] != DEFAULTS["out"]:
        packtools.write_json(options["out"], content)
    else:
        sys.stdout.write(json.dumps(content, indent=2) + "\n")


def cmd_emit(options):
    spec = make_spec(options)
    dataset = make_dataset(options)
    os.makedirs(options["out"], exist_ok=True)
    for seed in range(options["seeds"], options["seeds"] + options["episodes"]):
        problem = shapelib.emit_problem(dataset, spec.dims, seed, spec.dh, options["mode"])
        problem.save(os.path.join(options["out"], "problem_%06i.json" % seed))
    logger.info("Wrote %i problems to %s", options["episodes"], options["out"])


def _run(options, policy, spec, dataset, model):
    return bench.run_experiment(
        policy, dataset, spec, options["episodes"],
        capacity=options["buffer"], ordering=options["ordering"], model=model,
        workers=options["workers"], seed_offset=options["seeds"],
        dataset_name=_dataset_name(options),
    )


def cmd_run(options):
    report = _run(options, options["policy"], make_spec(options), make_dataset(options), _load_model(options))
    bench.report_emit(report, options["out"], options["timing"])


def cmd_train(options):
    spec = make_spec(options)
    dataset = make_dataset(options)
    fields = learner.TrainConfig.__dataclass_fields__
    config = learner.TrainConfig(**{
        key: value for key, value in options.items() if key in fields and key != "workers"
    })
    config.workers = options["train_workers"]
    result = learner.train(config, dataset, spec)
    os.makedirs(options["out"], exist_ok=True)
    learner.save_model(result.model, os.path.join(options["out"], "model.pt"))
    learner.write_curve(result.curve, os.path.join(options["out"], "curve.csv"))
    if result.aborted:
        logger.error("Training aborted, saved the last good checkpoint")
        return 1
    return 0


def cmd_eval(options):
    spec = make_spec(options)
    dataset = make_dataset(options)
    model = _load_model(options)
    if model is None:
        raise ValueError("invalid value for 'model' parameter. eval needs --model.")
    reports = [_run(options, "learned", spec, dataset, model)]
    for name in options["baselines"].split(","):
        reports.append(_run(options, name.strip(), spec, dataset, model))
    for report in reports:
        bench.report_emit(report, os.path.join(options["out"], report.method), options["timing"])
    bench.write_comparison(bench.compare_reports(reports), os.path.join(options["out"], "comparison.csv"))


def cmd_report(options):
    reports = [bench.load_report(path) for path in options["reports"]]
    bench.write_comparison(bench.compare_reports(reports), options["out"] + ".csv")


def cmd_sweep(options):
    spec = make_spec(options)
    kind = float if options["param"] == "dh" else int
    values = [kind(value) for value in str(options["values"]).split(",")]
    reports = bench.sweep(
        options["policy"], make_dataset(options), spec, options["param"], values,
        options["episodes"], capacity=options["buffer"], ordering=options["ordering"],
        model=_load_model(options), workers=options["workers"],
        seed_offset=options["seeds"], dataset_name=_dataset_name(options),
    )
    os.makedirs(options["out"], exist_ok=True)
    for report in reports:
        bench.report_emit(report, os.path.join(options["out"], report.method), options["timing"])
    bench.write_comparison(bench.compare_reports(reports), os.path.join(options["out"], "comparison.csv"))


def cmd_candidates(options):
    spec = make_spec(options)
    dataset = make_dataset(options)
    items = shapelib.emit_problem(dataset, spec.dims, options["seeds"], spec.dh).resolve(dataset)
    env = PackingEnv(spec)
    env.reset(items)
    placer = policies.BLBFPolicy(spec)
    for _ in range(options["steps"]):
        decision = None if env.done else placer.decide(env.state, env.current_item)
        if decision is None:
            break
        env.step(decision.action)
    if env.done:
        raise ValueError("invalid value for 'steps' parameter. The episode ended first.")
    candidates = candgen.CandidateGenerator(spec).generate(env.state, env.current_item, debug=True)
    candgen.dump_debug(candidates, options["out"])


COMMANDS = {
    "gen-shapes": cmd_gen_shapes,
    "poses": cmd_poses,
    "emit": cmd_emit,
    "run": cmd_run,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "sweep": cmd_sweep,
    "candidates": cmd_candidates,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        options = resolve_options(args)
        return COMMANDS[args.command](options) or 0
    except (TypeError, ValueError) as exc:
        logger.error("%s", exc)
        return 2
