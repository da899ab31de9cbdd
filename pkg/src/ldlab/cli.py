"""Command-line entry point: ``ldlab {lab,geld,detect,props}``.

Every command reads an optional JSON config (unknown keys are rejected),
applies flag overrides on top, derives all randomness from the root seed and
writes UTF-8 CSV/JSON/Markdown files into the output directory. Exit codes:
0 success, 2 config or input error, 3 proposition violated or hypothesis
unsatisfiable, 1 internal error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import Dataset, NoiseSpec, inject_feature_noise, inject_label_noise, make_blobs, read_csv
from .errors import HypothesisError, InvalidArgumentError, LdlabError
from .evaluate import R_MULTIPLIERS, comparison_table, markdown_f1_table, write_json, write_rows_csv
from .geld import GeldConfig, baselines_for, run_geld, write_tensor_csv
from .learners import LearnerSpec
from .regression import (
    DEFAULT_LAMBDA_GRID,
    RidgeConfig,
    Thresholds,
    all_verdicts,
    example_sweep,
    optimal_complexity,
)
from .seeding import derive_seed
from .weighting import DEFAULT_SUITE, GAMMA_LADDER, PROPOSITIONS, markdown_table, run_suite

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_PROPERTY = 0, 1, 2, 3

# Trichotomy regions of the stratified regression lab.
LAB_REGIONS = {"easy": (0.0, 1.5), "medium": (1.5, 3.5), "hard": (3.5, 5.0)}


class ConfigError(InvalidArgumentError):
    pass


# Default configuration. Every key a user may set appears here; a value of
# None means "not set" and is accepted with any JSON type the loader allows.
DEFAULTS: dict = {
    "seed": 0,
    "out": "ldlab-out",
    "lab": {
        "noise_sigma": 1.2,
        "degree": 10,
        "ensemble_size": 40,
        "pool_size": 4000,
        "lambda_grid": list(DEFAULT_LAMBDA_GRID),
        "thresholds": {"mode": "trichotomy", "tau": 1.0, "tau_e": 0.8, "tau_h": 1.25, "tau_q": 2.0},
    },
    "props": {"checks": None, "gamma_ladder": list(GAMMA_LADDER)},
    "dataset": {
        "source": "blobs",
        "class_count": 3,
        "per_class": [200, 200, 200],
        "validation_per_class": [100, 100, 100],
        "dimension": 2,
        "separation": 6.0,
        "path": None,
        "validation_path": None,
    },
    "noise": {"kind": "pair_flip", "rate": 0.4, "snr": None},
    "learner": {f.name: (list(f.default) if isinstance(f.default, tuple) else f.default)
                for f in fields(LearnerSpec) if f.name != "seed"},
    "geld": {"K": 5, "M": 6, "mu": 1.0, "prob_floor": 1e-12, "centered": False, "normalize": True,
             "dump_tensor": False, "ave_window": None},
    "detect": {"v": [0.4], "r": list(R_MULTIPLIERS), "repeats": 3, "methods": ["geld", "loss", "ave_loss"]},
}


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        default = base[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config field {where!r} must be an object")
            out[key] = _merge(default, value, where + ".")
        elif value is None or default is None:
            out[key] = value
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"config field {where!r} must be a boolean")
            out[key] = value
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config field {where!r} must be a number")
            if isinstance(default, int) and not isinstance(default, bool) and not float(value).is_integer():
                raise ConfigError(f"config field {where!r} must be an integer")
            out[key] = type(default)(value)
        elif isinstance(default, list):
            if isinstance(value, str) and key == "lambda_grid":
                out[key] = value
            elif not isinstance(value, list):
                raise ConfigError(f"config field {where!r} must be a list")
            else:
                out[key] = value
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"config field {where!r} must be a string")
            out[key] = value
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        user = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    return _merge(DEFAULTS, user)


_GRID = re.compile(r"^e(-?\d+)\.\.e(-?\d+)$")


def parse_lambda_grid(value) -> tuple[float, ...]:
    """``"e-7..e1"`` means ``exp(-7), exp(-6), ..., exp(1)``; lists and
    comma-separated strings give explicit values."""
    if isinstance(value, str):
        m = _GRID.match(value.strip())
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ConfigError(f"lambda_grid: empty range {value!r}")
            return tuple(float(np.exp(k)) for k in range(lo, hi + 1))
        value = value.split(",")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"lambda_grid: cannot parse {value!r}") from None


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    for flag, key in (("mu", "mu"), ("K", "K"), ("M", "M")):
        if getattr(args, flag) is not None:
            cfg["geld"][key] = getattr(args, flag)
    if args.noise_kind is not None:
        cfg["noise"]["kind"] = args.noise_kind
    if args.noise_rate is not None:
        cfg["noise"]["rate"] = args.noise_rate
    if args.snr is not None:
        cfg["noise"]["snr"] = args.snr
    if args.v is not None:
        cfg["detect"]["v"] = _floats(args.v, "v")
    if args.r is not None:
        cfg["detect"]["r"] = _floats(args.r, "r")
    if args.gamma_ladder is not None:
        cfg["props"]["gamma_ladder"] = _floats(args.gamma_ladder, "gamma-ladder")
    if args.lambda_grid is not None:
        cfg["lab"]["lambda_grid"] = args.lambda_grid
    if args.seed is not None and args.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


def _build(factory, name: str, /, **kwargs):
    try:
        return factory(**kwargs)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def learner_spec(cfg: dict, seed: int) -> LearnerSpec:
    block = dict(cfg["learner"])
    block["hidden_sizes"] = tuple(block["hidden_sizes"])
    return _build(LearnerSpec, "learner", seed=seed, **block)


def geld_config(cfg: dict, seed: int) -> GeldConfig:
    g = cfg["geld"]
    return _build(GeldConfig, "geld", K=g["K"], M=g["M"], mu=g["mu"], prob_floor=g["prob_floor"],
                  seed=seed, learner=learner_spec(cfg, seed), centered=g["centered"], normalize=g["normalize"])


def _output_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create {out}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# Datasets for the classification commands
# ---------------------------------------------------------------------------


def load_datasets(cfg: dict, seed: int, need_truth: bool = False) -> tuple[Dataset, Dataset]:
    """Training set (noise applied) and a disjoint validation set."""
    d = cfg["dataset"]
    if d["source"] == "csv":
        if not d["path"] or not d["validation_path"]:
            raise ConfigError("dataset.path and dataset.validation_path are required for source 'csv'")
        for key in ("path", "validation_path"):
            if not Path(d[key]).is_file():
                raise ConfigError(f"dataset.{key}: file {d[key]!r} does not exist")
        if need_truth:
            with open(d["path"], newline="", encoding="utf-8") as fh:
                header = next(csv.reader(fh), [])
            if "noisy_flag" not in header:
                raise ConfigError("dataset.path: no noisy_flag column, ground truth is missing")
        train, val = read_csv(d["path"]), read_csv(d["validation_path"])
    elif d["source"] == "blobs":
        c = d["class_count"]
        train = _build(make_blobs, "dataset", class_count=c, per_class_counts=d["per_class"],
                       dimension=d["dimension"], separation=d["separation"], seed=derive_seed(seed, "train"))
        val = _build(make_blobs, "dataset", class_count=c, per_class_counts=d["validation_per_class"],
                     dimension=d["dimension"], separation=d["separation"], seed=derive_seed(seed, "validation"))
        val = Dataset(ids=val.ids + len(train), features=val.features, labels=val.labels, class_count=c)
        n = cfg["noise"]
        if n["kind"] is not None and n["rate"]:
            spec = _build(NoiseSpec, "noise", kind=n["kind"], rate=n["rate"], snr=n["snr"],
                          seed=derive_seed(seed, "noise"))
            train = inject_feature_noise(train, spec) if spec.kind == "salt_pepper" else inject_label_noise(train, spec)
        elif need_truth:
            raise ConfigError("noise: detection needs injected noise as ground truth")
    else:
        raise ConfigError(f"dataset.source must be 'blobs' or 'csv', got {d['source']!r}")
    return train, val


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _sweep_rows(sweep, regions: dict | None) -> tuple[list[str], list[list]]:
    cols = ["lambda", "log_lambda", "complexity", "mean_bias", "mean_variance", "mean_error"]
    masks = {}
    if regions:
        masks = {name: sweep.region_mask(*rng) for name, rng in regions.items()}
        cols += [f"mean_error_{name}" for name in regions]
    rows = []
    for j, lam in enumerate(sweep.lambdas):
        row = [lam, float(np.log(lam)), sweep.complexity[j], sweep.mean_bias[j],
               sweep.mean_variance[j], sweep.mean_error[j]]
        row += [float(sweep.error[j, m].mean()) for m in masks.values()]
        rows.append(row)
    return cols, rows


def _write_table(path: Path, cols: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _opt(o) -> dict:
    return {"lambda_star": float(o.lambda_star), "c_star": float(o.c_star), "err_star": float(o.err_star)}


def _lab_sweeps(cfg: dict) -> dict:
    lab = cfg["lab"]
    grid = parse_lambda_grid(lab["lambda_grid"])
    out = {}
    for example in ("uniform", "stratified"):
        rc = _build(RidgeConfig, "lab", degree=lab["degree"], lambda_grid=grid,
                    ensemble_size=lab["ensemble_size"], train_size=175 if example == "stratified" else 200)
        out[example] = example_sweep(example, cfg["seed"], lab["noise_sigma"], rc, lab["pool_size"])
    return out


def cmd_lab(cfg: dict) -> int:
    out = _output_dir(cfg)
    th = cfg["lab"]["thresholds"]
    thresholds = _build(Thresholds, "lab.thresholds", **th)
    sweeps = _lab_sweeps(cfg)
    doc = {"seed": cfg["seed"], "thresholds": thresholds.as_dict(), "examples": {}}
    for name, fname, regions in (("uniform", "example1_sweep.csv", None),
                                 ("stratified", "example2_sweep.csv", LAB_REGIONS)):
        sweep = sweeps[name]
        _write_table(out / fname, *_sweep_rows(sweep, regions))
        verdicts = all_verdicts(sweep, thresholds)
        entry = {
            "optimum": _opt(optimal_complexity(sweep)),
            "samples": [{**v.as_dict(), "x": float(sweep.eval_x[k])} for k, v in enumerate(verdicts)],
        }
        for v in entry["samples"]:
            v.pop("thresholds")
        if regions:
            ldc = np.array([v.ldc for v in verdicts])
            entry["regions"] = {
                rname: {"range": list(rng), "optimum": _opt(optimal_complexity(sweep, region=rng)),
                        "mean_ldc": float(ldc[sweep.region_mask(*rng)].mean())}
                for rname, rng in regions.items()
            }
        doc["examples"][name] = entry
    write_json(doc, out / "verdicts.json")
    return EXIT_OK


def _props_checks(cfg: dict) -> tuple:
    ladder = tuple(float(g) for g in cfg["props"]["gamma_ladder"])
    checks = cfg["props"]["checks"]
    if checks is None:
        base = DEFAULT_SUITE
    else:
        base = []
        for i, chk in enumerate(checks):
            if not isinstance(chk, dict) or "id" not in chk:
                raise ConfigError(f"props.checks[{i}] must be an object with an 'id'")
            chk = dict(chk)
            pid = chk.pop("id")
            if pid not in PROPOSITIONS:
                raise ConfigError(f"props.checks[{i}].id: unknown proposition {pid!r}")
            allowed = {"omega", "region", "gamma", "tier_weights"}
            extra = set(chk) - allowed
            if extra:
                raise ConfigError(f"props.checks[{i}]: unknown keys {sorted(extra)}")
            for key in ("region", "tier_weights"):
                if key in chk:
                    chk[key] = tuple(chk[key])
            base.append((pid, chk))
    return tuple((pid, {**kw, "gammas": ladder}) if pid == "C4" else (pid, kw) for pid, kw in base)


def cmd_props(cfg: dict) -> int:
    out = _output_dir(cfg)
    checks = _props_checks(cfg)
    sweep = _lab_sweeps(cfg)["stratified"]
    results = run_suite(sweep, checks)
    doc = []
    status = EXIT_OK
    for r in results:
        if isinstance(r, HypothesisError):
            doc.append({"proposition": r.hypothesis.split(":", 1)[0], "verdict": "unsatisfiable",
                        "hypothesis": r.hypothesis})
            status = EXIT_PROPERTY
        else:
            doc.append(r.as_dict())
            if r.verdict == "violated":
                status = EXIT_PROPERTY
    write_json({"seed": cfg["seed"], "checks": doc}, out / "propositions.json")
    _write_text(out / "propositions.md", markdown_table(results))
    return status


def _geld_once(cfg: dict, seed: int, need_truth: bool = False):
    train, val = load_datasets(cfg, seed, need_truth)
    gc = geld_config(cfg, seed)
    tensor, report = run_geld(train, val, gc)
    loss, ave = baselines_for(train, val, learner_spec(cfg, derive_seed(seed, "baseline")),
                              cfg["geld"]["ave_window"])
    return train, tensor, report.with_baselines(loss, ave)


def cmd_geld(cfg: dict) -> int:
    out = _output_dir(cfg)
    _, tensor, report = _geld_once(cfg, cfg["seed"])
    report.write_csv(out / "difficulty.csv")
    report.write_json(out / "difficulty.json")
    if cfg["geld"]["dump_tensor"]:
        write_tensor_csv(tensor, out / "tensor.csv")
    return EXIT_OK


def cmd_detect(cfg: dict) -> int:
    out = _output_dir(cfg)
    det = cfg["detect"]
    if det["repeats"] < 1:
        raise ConfigError("detect.repeats must be >= 1")
    reports, truths = [], []
    for rep in range(det["repeats"]):
        seed = cfg["seed"] if rep == 0 else derive_seed(cfg["seed"], "repeat", rep)
        train, _, report = _geld_once(cfg, seed, need_truth=True)
        reports.append(report)
        truths.append(train.truth.noisy_ids)
    try:
        rows = comparison_table(reports, truths, det["v"], det["r"], det["methods"])
    except InvalidArgumentError as exc:
        raise ConfigError(f"detect: {exc}") from None
    write_rows_csv(rows, out / "detection.csv",
                   ["method", "v", "r", "k", "precision", "recall", "f1", "per_repeat_f1"])
    write_json({"seed": cfg["seed"], "repeats": det["repeats"], "rows": rows}, out / "detection.json")
    _write_text(out / "detection.md", markdown_f1_table(rows))
    return EXIT_OK


COMMANDS = {"lab": cmd_lab, "geld": cmd_geld, "detect": cmd_detect, "props": cmd_props}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldlab", description="Learning-difficulty experiments.")
    parser.add_argument("--version", action="version", version=f"ldlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mu", type=float, help="variance weight")
    common.add_argument("--K", type=int, help="cross-validation repeats")
    common.add_argument("--M", type=int, help="folds per repeat")
    common.add_argument("--noise-kind", choices=["symmetric", "pair_flip", "salt_pepper"])
    common.add_argument("--noise-rate", type=float)
    common.add_argument("--snr", type=float)
    common.add_argument("--v", help="assumed noise rate(s), comma-separated")
    common.add_argument("--r", help="selection multiplier(s), comma-separated")
    common.add_argument("--gamma-ladder", help="power-weighting exponents, comma-separated")
    common.add_argument("--lambda-grid", help="e.g. e-7..e1 or a comma-separated list")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("lab", parents=[common], help="regression bias-variance lab")
    sub.add_parser("geld", parents=[common], help="GELD difficulty report")
    sub.add_parser("detect", parents=[common], help="noisy-label detection F1 tables")
    sub.add_parser("props", parents=[common], help="weighting proposition checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg)
    except HypothesisError as exc:
        print(f"ldlab: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (InvalidArgumentError, OSError) as exc:
        print(f"ldlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LdlabError as exc:
        print(f"ldlab: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # never let a traceback be the interface
        print(f"ldlab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
