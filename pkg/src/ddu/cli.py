"""Command-line interface: ``ddu train | score | experiment``.

Exit codes: 0 success, 1 internal error or failed ``--check``, 2 config
error, 3 data or shape error, 4 usage error or unknown experiment.
"""

import argparse
import csv
import json
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from .data import Dataset, ambiguous_pool, three_gaussians_label_noise, toy_1d, two_moons
from .estimator import report
from .exceptions import ConfigError, EmptyInput, LengthMismatch, ShapeMismatch, UnknownExperiment
from .experiments import EXPERIMENTS, run_experiment, write_outputs
from .gda import GaussianDiscriminantAnalysis
from .net import ResidualMLPClassifier, save_model, load_model
from .uncertainty import Thresholds, compute_thresholds, entropy

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_DATA, EXIT_USAGE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _schema():
    return json.loads(resources.files("ddu").joinpath("schemas/train_config.schema.json").read_text())


def load_json_config(path):
    """Parse a JSON config, reporting the line of any syntax error."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def validate_train_config(cfg):
    """Check ``cfg`` against the train schema; the error names the offending field."""
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if not errors:
        return cfg
    err = errors[0]
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = next(f for f in err.validator_value if f not in err.instance)
        name = ".".join(path + [missing])
        raise ConfigError(f"missing required field '{name}'", field=name)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))[0]
        name = ".".join(path + [extra])
        raise ConfigError(f"unknown field '{name}'", field=name)
    name = ".".join(path) or "<root>"
    raise ConfigError(f"field '{name}': {err.message}", field=name)


def resolve_dataset(ds_cfg, seed, base_dir="."):
    name = ds_cfg["name"]
    if name == "two_moons":
        return two_moons(ds_cfg.get("n", 2000), ds_cfg.get("noise", 0.1), seed=seed)
    if name == "three_gaussians":
        return three_gaussians_label_noise(ds_cfg.get("n", 600), ds_cfg.get("noise", 0.04), seed=seed)
    if name == "ambiguous_pool":
        return ambiguous_pool(ds_cfg.get("n_clean", 1000), ds_cfg.get("n_ambiguous", 1000), seed=seed)
    if name == "toy_1d":
        return toy_1d(seed)
    if "path" not in ds_cfg:
        raise ConfigError("csv dataset needs 'dataset.path'", field="dataset.path")
    return Dataset.from_csv(os.path.join(base_dir, ds_cfg["path"]))


def cmd_train(config_path, out_dir, seed=None):
    cfg = validate_train_config(load_json_config(config_path))
    if seed is not None:
        cfg["seed"] = seed
    seed = cfg.get("seed", 0)
    data = resolve_dataset(cfg["dataset"], seed, os.path.dirname(os.path.abspath(config_path)))
    est = ResidualMLPClassifier(**cfg["net"], n_classes=data.n_classes, random_state=seed).fit(data.x, data.y)
    z = est.transform(data.x)
    gda = GaussianDiscriminantAnalysis(n_classes=data.n_classes).fit(z, data.y)
    thresholds = compute_thresholds(
        gda.score_samples(z), entropy(est.predict_proba(data.x)),
        cfg.get("density_quantile", 0.01), cfg.get("entropy_quantile", 0.95),
    )
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in ("model.json", "gda.json", "thresholds.json", "training_log.csv")}
    save_model(est.model_, paths["model.json"])
    gda.save(paths["gda.json"])
    with open(paths["thresholds.json"], "w") as fh:
        json.dump(thresholds.to_dict(), fh, allow_nan=False)
    with open(paths["training_log.csv"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(est.model_.loss_history, start=1):
            writer.writerow([epoch, f"{loss:.17g}"])
    return paths


def cmd_score(model_path, gda_path, thresholds_path, input_path, out_path):
    est = ResidualMLPClassifier.from_model(load_model(model_path))
    gda = GaussianDiscriminantAnalysis.load(gda_path)
    with open(thresholds_path) as fh:
        thresholds = Thresholds.from_dict(json.load(fh))
    cfg = est.model_.config
    if gda.model_.dim != cfg.width or gda.model_.n_classes != cfg.num_classes:
        raise ShapeMismatch(
            f"density model has K={gda.model_.n_classes}, d={gda.model_.dim}; "
            f"network has {cfg.num_classes} classes and width {cfg.width}"
        )
    data = Dataset.from_csv(input_path, n_classes=cfg.num_classes)
    if data.n_features != cfg.input_dim:
        raise ShapeMismatch(f"input has {data.n_features} features, model expects {cfg.input_dim}")
    if len(data) == 0:
        rep = report(np.zeros((0, cfg.num_classes)), np.zeros(0), thresholds)
    else:
        rep = report(est.predict_proba(data.x), gda.score_samples(est.transform(data.x)), thresholds)
    out_dir = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(out_dir, exist_ok=True)
    rep.to_csv(out_path)
    return rep


def cmd_experiment(name, config_path=None, out_dir=None, seed=None, jobs=1):
    if name not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    cfg = load_json_config(config_path) if config_path else {}
    if seed is not None:
        cfg["seed"] = seed
    result = run_experiment(name, cfg, jobs=jobs)
    if out_dir:
        write_outputs(result, out_dir)
    return result


def build_parser():
    parser = _Parser(prog="ddu", description="Feature-density uncertainty on toy data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", help="train a network, fit the density model and thresholds")
    train.add_argument("--config", required=True, help="train config JSON")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int, help="override the config seed")

    score = sub.add_parser("score", help="write entropy, log-density and verdict per input row")
    score.add_argument("--model", required=True)
    score.add_argument("--gda", required=True)
    score.add_argument("--thresholds", required=True)
    score.add_argument("--input", required=True, help="CSV with x0..x{d-1} columns")
    score.add_argument("--out", required=True, help="report CSV path")

    exp = sub.add_parser("experiment", help="run a canned experiment")
    exp.add_argument("name", help=f"one of: {', '.join(EXPERIMENTS)}")
    exp.add_argument("--config", help="JSON overrides of the experiment defaults")
    exp.add_argument("--out", help="experiment directory")
    exp.add_argument("--seed", type=int, help="override the config seed")
    exp.add_argument("--jobs", type=int, default=1, help="parallel seeds")
    exp.add_argument("--check", action="store_true", help="fail if any property check fails")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            paths = cmd_train(args.config, args.out, args.seed)
            print("\n".join(paths.values()))
        elif args.command == "score":
            rep = cmd_score(args.model, args.gda, args.thresholds, args.input, args.out)
            print(f"scored {len(rep)} rows -> {args.out}")
        else:
            result = cmd_experiment(args.name, args.config, args.out, args.seed, args.jobs)
            for check, ok in result.checks.items():
                print(f"{'PASS' if ok else 'FAIL'} {check}")
            if args.check and not result.passed:
                print("check failed", file=sys.stderr)
                return EXIT_INTERNAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnknownExperiment as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (ShapeMismatch, LengthMismatch, EmptyInput, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
