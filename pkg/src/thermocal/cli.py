"""Command-line entry point: ``thermocal <subcommand> ...``.

Exit codes: 0 success, 1 numerical or optimization failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import io
from .constants import load_constants
from .enhance import NetworkWeights, TrainConfig, train
from .errors import ConfigurationError, InputError, ThermocalError
from .pipeline import PipelineOptions, normalized_pairs, run_pipeline
from .plot import emit_plot
from .radiometry import atmospheric_transmittance
from .synth import SynthConfig, generate

log = logging.getLogger("thermocal")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return data


def _train_config(data: dict, seed: int | None) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown training options: {sorted(unknown)}")
    cfg = replace(PipelineOptions().train, **data)
    return replace(cfg, seed=seed) if seed is not None else cfg


def _pipeline_options(args) -> PipelineOptions:
    data = _read_config(getattr(args, "config", None))
    train_data = data.pop("train", {})
    known = {f.name for f in fields(PipelineOptions)} - {"train", "weights", "calibration"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown pipeline options: {sorted(unknown)}")
    opts = replace(PipelineOptions(), **data)
    seed = getattr(args, "seed", None)
    opts = replace(opts, train=_train_config(train_data, seed))
    if seed is not None:
        opts = replace(opts, seed=seed)
    if getattr(args, "jobs", None):
        opts = replace(opts, jobs=args.jobs)
    weights_path = getattr(args, "weights", None)
    if weights_path:
        opts = replace(opts, weights=NetworkWeights.load(weights_path), direct=False)
    elif getattr(args, "direct", False):
        opts = replace(opts, direct=True)
    elif hasattr(args, "direct"):
        opts = replace(opts, direct=False)
    return opts


class _Sequence:
    """A manifest with its frames, masks and transmittance loaded."""

    def __init__(self, path):
        self.constants = load_constants()
        self.manifest = io.load_manifest(path, self.constants.sensor_exponent)
        m = self.manifest
        self.frames = m.load_frames()
        shape = self.frames[0].gray.shape
        for i, f in enumerate(self.frames):
            if f.gray.shape != shape:
                raise InputError(f"frame {i} has shape {f.gray.shape}, expected {shape}")
        self.target_mask = m.load_mask(m.target)
        self.reference_mask = m.load_mask(m.reference)
        for mask in (self.target_mask, self.reference_mask):
            if mask.shape != shape:
                raise InputError(f"mask {mask.label!r} has shape {mask.shape}, frames are {shape}")
        self.eps_target = m.emissivity[m.target]
        self.eps_reference = m.emissivity[m.reference]
        self.tau = atmospheric_transmittance(m.env, self.constants)
        self.calibration = None
        if m.calibration:
            self.calibration = cal.CalibrationModel.from_json(m.resolve(m.calibration).read_text())

    def run(self, opts: PipelineOptions):
        if self.calibration is not None and opts.calibration is None:
            opts = replace(opts, calibration=self.calibration)
        opts = replace(opts, kelvin_offset=self.constants.kelvin_offset)
        return run_pipeline(self.frames, self.target_mask, self.reference_mask, self.eps_target,
                            self.eps_reference, self.manifest.env, self.tau, opts)


def cmd_synth(args) -> None:
    data = _read_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = SynthConfig.from_dict(data)
    path = io.write_sequence(io.ensure_dir(args.out), generate(cfg))
    print(path)


def cmd_calibrate(args) -> None:
    seq = _Sequence(args.manifest)
    samples, bounds = cal.normalize_samples(cal.smooth_sequence(seq.frames, args.window, args.step))
    forms = cal.FORMS if args.form == "auto" else (args.form,)
    models = {f: cal.fit_model(samples, f, bounds) for f in forms}
    model = cal.select_model(models) if args.form == "auto" else models[args.form]
    out = io.ensure_dir(args.out)
    (out / "calibration.json").write_text(model.to_json() + "\n")
    summary = {f: m.mse for f, m in sorted(models.items())}
    (out / "calibration_fits.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(out / "calibration.json")


def cmd_train(args) -> None:
    seq = _Sequence(args.manifest)
    opts = _pipeline_options(args)
    pairs = normalized_pairs(seq.frames, seq.target_mask, seq.reference_mask, seq.eps_target, seq.eps_reference)
    init = NetworkWeights.load(args.init) if args.init else None
    result = train(pairs, opts.train, init)
    out = io.ensure_dir(args.out)
    result.weights.save(out / "weights.thcw")
    report = {
        "final_loss": result.final_loss,
        "epoch_losses": result.epoch_losses,
        "samples_seen": result.samples_seen,
    }
    (out / "train.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(out / "weights.thcw")


def _write_enhanced(out: Path, result) -> None:
    d = io.ensure_dir(out / "enhanced")
    for i, (plane, temps) in enumerate(zip(result.enhanced_planes, result.enhanced_temps)):
        io.write_gray(d / f"enhanced_{i:04d}.pgm", plane)
        io.write_grid_csv(d / f"temp_{i:04d}.csv", np.nan_to_num(temps, nan=0.0))


def _write_profiles(out: Path, result) -> None:
    io.write_profiles_csv(out / "profiles.csv", result.original, result.enhanced, result.gt)
    emit_plot({"original": result.original, "gt": result.gt, "enhanced": result.enhanced}, out / "profiles.svg")


def _write_metrics(out: Path, result) -> None:
    (out / "metrics.json").write_text(result.report.to_json() + "\n")


def _run_stage(args, writers) -> None:
    seq = _Sequence(args.manifest)
    result = seq.run(_pipeline_options(args))
    out = io.ensure_dir(args.out)
    for w in writers:
        w(out, result)
    if result.weights is not None and getattr(args, "weights", None) is None:
        result.weights.save(out / "weights.thcw")
    print(out)


def cmd_enhance(args) -> None:
    _run_stage(args, [_write_enhanced])


def cmd_profile(args) -> None:
    _run_stage(args, [_write_profiles])


def cmd_metrics(args) -> None:
    _run_stage(args, [_write_metrics])


def cmd_pipeline(args) -> None:
    _run_stage(args, [_write_enhanced, _write_profiles, _write_metrics])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermocal", description="Emissivity-aware thermal image enhancement.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        if manifest:
            p.add_argument("manifest", help="sequence manifest JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON file of option overrides")

    def enhancement(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--direct", action="store_true", help="optimize theta per frame instead of a network")
        g.add_argument("--weights", default=None, help="trained THCW weights (default: train first)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for per-frame work")

    p = sub.add_parser("synth", help="generate a synthetic two-material sequence")
    common(p, manifest=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit the gray/temperature calibration")
    common(p)
    p.add_argument("--form", default="linear", choices=(*cal.FORMS, "auto"))
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--step", type=int, default=7)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train the curve-estimation network")
    common(p)
    p.add_argument("--init", default=None, help="starting THCW weights")
    p.set_defaults(func=cmd_train)

    for name, func, text in (
        ("enhance", cmd_enhance, "write enhanced frames"),
        ("profile", cmd_profile, "write temperature profiles (CSV and SVG)"),
        ("metrics", cmd_metrics, "write metrics.json"),
        ("pipeline", cmd_pipeline, "run every stage and write all outputs"),
    ):
        p = sub.add_parser(name, help=text)
        common(p)
        enhancement(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ThermocalError as exc:
        print(f"thermocal: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        # bad option values surfacing from dataclass constructors
        print(f"thermocal: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"thermocal: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
