"""Command-line pipeline: simulate -> focus -> beamform -> train -> eval -> render.

Every subcommand reads a flat key=value config (``--config``), applies
``--set key=value`` overrides, and honors ``--seed`` as an override of the
config's global seed, so all stochastic stages thread from one value. Exit
status is 0 on success and nonzero with a one-line diagnostic on stderr
otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys

from .. import beamform, complexity, evalsuite, neural
from ..geometry import focus, geometry_from_config, grid_from_config
from ..metrics import MetricError, envelope
from ..simulate import simulate_channels
from ..validation import ConfigurationError, ContainerFormatError
from .artifacts import load_frame, load_image, load_raw, save_frame, save_image, save_raw
from .config import RunConfig, load_config, merge_overrides
from .render import DEFAULT_DYNAMIC_RANGE_DB, render


def _add_config_arguments(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides", help="override one config entry")
    parser.add_argument("--seed", type=int, help="override the config seed")


def _resolve(args, default_kind):
    """Config from file + overrides, with experiment defaults filled in."""
    values = merge_overrides(load_config(args.config) if args.config else {},
                             args.overrides)
    config = RunConfig(values)
    if "experiment.kind" not in config.values:
        config.set("experiment.kind", default_kind)
    config = evalsuite.resolve_config(config)
    if args.seed is not None:
        config.set("seed", args.seed)
    return config


def _cmd_simulate(args):
    config = _resolve(args, "pipeline")
    geom = geometry_from_config(config.section("geometry"))
    phantom = evalsuite.phantom_from_config(config)
    raw = simulate_channels(phantom, geom,
                            noise_std=config.get_float("phantom.noise_std", 0.0),
                            rng_seed=[config.get_int("seed"), 402])
    save_raw(args.out, raw)
    print(f"wrote {args.out}: {raw.samples.shape[0]} transmits x "
          f"{raw.samples.shape[1]} elements x {raw.num_samples} samples")
    return 0


def _cmd_focus(args):
    config = _resolve(args, "pipeline")
    geom = geometry_from_config(config.section("geometry"))
    grid = grid_from_config(config.section("grid"))
    frame = focus(load_raw(args.raw), geom, grid)
    save_frame(args.out, frame)
    print(f"wrote {args.out}: grid {frame.grid.shape[0]}x{frame.grid.shape[1]}, "
          f"{frame.aperture_size} channels")
    return 0


def _beamform_image(args, frame):
    if args.beamformer == "das":
        return beamform.das(frame, args.window)[0]
    if args.beamformer == "imap":
        return beamform.imap(frame, iterations=args.imap_iters)
    if args.beamformer in ("mv", "ebmv"):
        cfg = beamform.MVConfig(subaperture_length=args.subaperture,
                                diagonal_loading=args.loading,
                                eigen_fraction=args.fraction)
        return beamform.mv_beamform(frame, cfg, eigen=args.beamformer == "ebmv")[0]
    if args.beamformer == "able":
        if not args.model:
            raise ConfigurationError("beamformer 'able' needs --model")
        params = neural.load_params(args.model)
        if isinstance(params, neural.TwoStageParams):
            return neural.two_stage_beamform(params, frame)
        return neural.able_beamform(params, frame)[0]
    raise ConfigurationError(f"unknown beamformer: {args.beamformer!r}")


def _cmd_beamform(args):
    image = _beamform_image(args, load_frame(args.frame))
    save_image(args.out, image)
    print(f"wrote {args.out}: {image.source} image "
          f"{image.data.shape[0]}x{image.data.shape[1]}")
    return 0


def _cmd_train(args):
    config = _resolve(args, "compare_pw")
    dataset = evalsuite.build_compare_dataset(config)
    result, initial, final = evalsuite.train_compare_model(config, dataset)
    os.makedirs(args.out, exist_ok=True)
    neural.save_params(os.path.join(args.out, "able_model.bft"), result.params)
    with open(os.path.join(args.out, "training.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(result.history_csv())
    with open(os.path.join(args.out, "smsle.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("held_smsle_initial,held_smsle_final,ratio\n"
                 f"{initial!r},{final!r},{final / initial!r}\n")
    config.save(os.path.join(args.out, "resolved.cfg"))
    print(f"trained {config.get_int('train.epochs')} epochs; held-out error "
          f"{initial:.4f} -> {final:.4f} (ratio {final / initial:.4f})")
    return 0


def _cmd_eval(args):
    config = _resolve(args, "compare_pw")
    params = neural.load_params(args.model) if args.model else None
    results = evalsuite.compare_beamformers(config, out_dir=args.out, params=params)
    for method, values in evalsuite.method_summary(results["rows"]).items():
        parts = [f"{key} {value:.4f}" for key, value in sorted(values.items())]
        print(f"{method}: " + ", ".join(parts))
    return 0


def _cmd_subsample(args):
    config = _resolve(args, "subsample_sa")
    results = evalsuite.subsample_study(config, out_dir=args.out)
    for name, values in results["conditions"].items():
        print(f"{name}: held_smsle {values['held_smsle']:.4f}, "
              f"cnr {values['cnr_db']:.2f} dB, point {values['point_db']:.1f} dB")
    return 0


def _cmd_flops(args):
    if args.sweep:
        ns = [int(part) for part in args.sweep.split(",")]
        text = complexity.sweep_csv(complexity.sweep(
            [args.method], ns, iterations=args.iterations,
            fraction=args.fraction, accounting=args.accounting))
        if args.csv:
            with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            print(text, end="")
        return 0
    rep = complexity.report(args.method, args.n, iterations=args.iterations,
                            fraction=args.fraction, accounting=args.accounting)
    count = int(rep.flops) if float(rep.flops).is_integer() else rep.flops
    print(count)
    return 0


def _cmd_render(args):
    image = load_image(args.image)
    render(envelope(image.data), args.dynamic_range, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_pipeline(args):
    config = _resolve(args, "pipeline")
    results = evalsuite.pipeline(config, out_dir=args.out)
    for row in results["rows"]:
        cnr = "n/a" if row["cnr_db"] is None else f"{row['cnr_db']:.2f} dB"
        print(f"{row['method']}: cnr {cnr}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="beamforge",
        description="Simulation, beamforming, training, and rendering pipeline.")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("simulate", help="simulate raw channel data")
    _add_config_arguments(sub)
    sub.add_argument("--out", required=True, help="output raw-data container")
    sub.set_defaults(handler=_cmd_simulate)

    sub = commands.add_parser("focus", help="time-of-flight correct raw data")
    _add_config_arguments(sub)
    sub.add_argument("--raw", required=True, help="raw-data container")
    sub.add_argument("--out", required=True, help="output focused-frame container")
    sub.set_defaults(handler=_cmd_focus)

    sub = commands.add_parser("beamform", help="beamform a focused frame")
    sub.add_argument("--frame", required=True, help="focused-frame container")
    sub.add_argument("--out", required=True, help="output image container")
    sub.add_argument("--beamformer", default="das",
                     choices=["das", "imap", "mv", "ebmv", "able"])
    sub.add_argument("--window", default="boxcar", help="delay-and-sum window")
    sub.add_argument("--imap-iters", type=int, default=2)
    sub.add_argument("--subaperture", "--L", type=int, default=None,
                     help="subaperture length (default N/2)")
    sub.add_argument("--loading", "--D", type=float, default=0.01,
                     help="diagonal loading factor")
    sub.add_argument("--fraction", "--k", type=float, default=0.5,
                     help="retained eigenvector fraction")
    sub.add_argument("--model", help="trained network container (for able)")
    sub.set_defaults(handler=_cmd_beamform)

    sub = commands.add_parser("train", help="train the apodization network")
    _add_config_arguments(sub)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(handler=_cmd_train)

    sub = commands.add_parser("eval", help="score all beamformers on held-out frames")
    _add_config_arguments(sub)
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--model", help="reuse a trained model instead of training")
    sub.set_defaults(handler=_cmd_eval)

    sub = commands.add_parser("subsample", help="channel-subsampling study")
    _add_config_arguments(sub)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(handler=_cmd_subsample)

    sub = commands.add_parser("flops", help="per-pixel operation counts")
    sub.add_argument("--method", required=True,
                     choices=["imap", "mv", "ebmv", "able", "bound"])
    sub.add_argument("--n", type=int, default=128, help="channel count")
    sub.add_argument("--iterations", type=int, default=2, help="iMAP iterations")
    sub.add_argument("--fraction", type=float, default=0.5,
                     help="retained eigenvector fraction")
    sub.add_argument("--accounting", default="b", choices=["a", "b"],
                     help="network cost convention")
    sub.add_argument("--sweep", help="comma-separated channel counts")
    sub.add_argument("--csv", help="write the sweep table here instead of stdout")
    sub.set_defaults(handler=_cmd_flops)

    sub = commands.add_parser("render", help="log-compress an image to PGM")
    sub.add_argument("--image", required=True, help="beamformed image container")
    sub.add_argument("--out", required=True, help="output PGM path")
    sub.add_argument("--dynamic-range", type=float, default=DEFAULT_DYNAMIC_RANGE_DB,
                     help="dynamic range in dB")
    sub.set_defaults(handler=_cmd_render)

    sub = commands.add_parser("pipeline", help="simulate, beamform, and score one frame")
    _add_config_arguments(sub)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigurationError, ContainerFormatError, MetricError,
            FloatingPointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
