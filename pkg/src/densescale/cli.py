"""Command-line interface: ``densescale image|signal|video|synth|calibrate-table``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import DenseScaleError, FormatError, NoRootError
from .pipeline import RunConfig, StageError, run

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_params(p, temporal=True, spatial=True):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with RunConfig fields (flags override it)")
    p.add_argument("-o", "--output", default=S, help="output base path")
    p.add_argument("--c", dest="c_post", type=float, default=S, help="relative post-smoothing scale (default 1)")
    p.add_argument("--calibration", choices=["none", "gaussian", "sine-wave"], default=S)
    p.add_argument("--compensation", choices=["geometric", "linear"], default=S)
    if spatial:
        p.add_argument("--gamma-s", dest="gamma_s", type=float, default=S, help="Gamma_s (default 0.25)")
        p.add_argument("--c-s", dest="c_s", type=float, default=S, help="C_s weight (default balanced)")
        p.add_argument("--sigma-min", dest="sigma_min", type=float, default=S)
        p.add_argument("--sigma-max", dest="sigma_max", type=float, default=S)
        p.add_argument("--levels-per-octave", dest="levels_per_octave", type=int, default=S)
    if temporal:
        p.add_argument("--gamma-t", dest="gamma_t", type=float, default=S, help="Gamma_tau (default 0.25)")
        p.add_argument("--c-t", dest="c_t", type=float, default=S, help="C_tau weight (default balanced)")
        p.add_argument("--sigma-t-min", dest="sigma_t_min", type=float, default=S, help="seconds")
        p.add_argument("--sigma-t-max", dest="sigma_t_max", type=float, default=S, help="seconds")
        p.add_argument("--t-levels-per-octave", dest="t_levels_per_octave", type=int, default=S)
        p.add_argument("--causal", action="store_true", default=S, help="time-causal temporal smoothing")
        p.add_argument("--c-dist", dest="c_dist", type=float, default=S, help="cascade distribution parameter")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="densescale", description="Dense scale selection by quasi quadrature.")
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("image", help="dense spatial scale map of a PGM image")
    p.add_argument("input", help="PGM file (P2 or P5)")
    p.add_argument("--alg", dest="algorithm", choices=["I", "II", "III", "IV"], default=S)
    _add_params(p, temporal=False)

    p = sub.add_parser("signal", help="dense temporal scale track of a CSV signal")
    p.add_argument("input", help="CSV with one value per line")
    p.add_argument("--alg", dest="algorithm", choices=["I", "II", "III", "IV"], default=S)
    _add_params(p, spatial=False)

    p = sub.add_parser("video", help="joint spatial and temporal scale maps of a frame directory")
    p.add_argument("input", help="directory of PGM frames with manifest.txt (fps=<n>)")
    p.add_argument("--alg", dest="algorithm", choices=["joint", "joint-raw"], default=S)
    p.add_argument("--temporal-post-smoothing", dest="temporal_post_smoothing", action="store_true", default=S)
    _add_params(p)

    p = sub.add_parser("synth", help="write a synthetic test pattern")
    p.add_argument("--kind", choices=["sine2d", "chirp", "gaussian-blob", "gaussian-blink", "st-sine",
                                      "diffuse-edge", "onset-ramp"], default=S)
    p.add_argument("-o", "--output", default=S)
    p.add_argument("--config", default=S)
    for name, typ in (("width", int), ("height", int), ("length", int), ("frames", int), ("wavelength", float),
                      ("wavelength-t", float), ("s0", float), ("tau0", float), ("chirp-a", float),
                      ("chirp-b", float), ("sample-period", float)):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ, default=S)

    p = sub.add_parser("calibrate-table", help="print the calibration tables")
    p.add_argument("--gamma", dest="table_gammas", type=_floats, default=S, help="comma-separated Gamma values")
    p.add_argument("--c", dest="table_cs", type=_floats, default=S, help="comma-separated c values")
    p.add_argument("--weight", dest="table_weight", choices=["geometric", "balanced"], default=S)
    p.add_argument("--csv", action="store_true", help="print CSV instead of aligned text")
    p.add_argument("-o", "--output", default=S, help="also write <base>.txt and <base>.csv")
    p.add_argument("--config", default=S)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    values.pop("csv", None)
    cfg_path = values.pop("config", None)
    # flags > config file > dataclass defaults
    base = vars(RunConfig.from_file(cfg_path)) if cfg_path is not None else {}
    base.update(values)
    for key in ("table_gammas", "table_cs"):
        if isinstance(base.get(key), list):
            base[key] = tuple(base[key])
    return RunConfig.from_mapping(base)


def exit_code_for(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, FormatError):
        return EXIT_FORMAT
    if isinstance(cause, NoRootError):
        return EXIT_NUMERIC
    if isinstance(cause, OSError):
        return EXIT_IO
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    as_csv = getattr(args, "csv", False)
    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except (DenseScaleError, OSError, ValueError, TypeError) as exc:
        print(f"densescale: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    if cfg.mode == "calibrate-table":
        sys.stdout.write(result.summary["csv"] if as_csv else result.summary["text"])
    else:
        paths = result.artifacts
        if cfg.mode == "video":
            paths = paths[-2:]
        elif cfg.mode == "synth" and len(paths) > 1:
            paths = [paths[0].parent]
        for path in paths:
            print(path)
        if result.summary:
            print(json.dumps(result.summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
