"""End-to-end runs: read or generate input, select scales, calibrate, write artifacts."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import calibration, io, synth
from .calibration import CalibrationModel, apply_calibration, st_calibrate
from .errors import DenseScaleError, ParameterError
from .quadrature import QuadratureParams, spatiotemporal_quadrature_from_jets, spatiotemporal_quadrature_grid
from .scalespace import (
    CausalSpatioTemporalStream,
    FrameStream,
    ScaleLadder,
    Signal1D,
    TemporalDerivativeWindow,
    build_spatiotemporal_scalespace,
    spatial_jet_stack,
)
from .selection import (
    ScaleMap,
    joint_extrema_map,
    max_response_map,
    select_dense,
    st_phase_compensate,
)

MODES = ("image", "signal", "video", "synth", "calibrate-table")
DEFAULT_TABLE_GAMMAS = (0.0, 0.25, 0.5)
DEFAULT_TABLE_CS = (0.0, 0.5, 0.7071067811865476, 1.0, 1.4142135623730951, 2.0)


class StageError(DenseScaleError):
    """Failure inside one pipeline stage; ``cause`` keeps the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    mode: str = "image"
    algorithm: str | None = None
    gamma_s: float = 0.25
    gamma_t: float = 0.25
    c_s: float | None = None
    c_t: float | None = None
    c_post: float = 1.0
    sigma_min: float = 1.0
    sigma_max: float = 16.0
    levels_per_octave: int = 4
    sigma_t_min: float = 1.0
    sigma_t_max: float = 16.0
    t_levels_per_octave: int = 4
    calibration: str | None = None
    compensation: str = "geometric"
    causal: bool = False
    temporal_post_smoothing: bool = False
    c_dist: float = 2.0
    input: str | None = None
    output: str | None = None
    # synth mode
    kind: str = "sine2d"
    width: int = 128
    height: int = 128
    length: int = 1000
    frames: int = 100
    wavelength: float = 16.0
    wavelength_t: float = 32.0
    s0: float = 16.0
    tau0: float = 16.0
    chirp_a: float = 200.0
    chirp_b: float = 1000.0
    sample_period: float = 1.0
    # calibrate-table mode
    table_gammas: tuple = DEFAULT_TABLE_GAMMAS
    table_cs: tuple = DEFAULT_TABLE_CS
    table_weight: str = "geometric"

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ParameterError("config file must hold a JSON object")
        return cls.from_mapping(data)

    @property
    def params(self) -> QuadratureParams:
        return QuadratureParams(self.gamma_s, self.gamma_t, self.c_s, self.c_t, self.c_post)

    @property
    def s_ladder(self) -> ScaleLadder:
        return ScaleLadder.per_octave(self.sigma_min, self.sigma_max, self.levels_per_octave)

    @property
    def t_ladder(self) -> ScaleLadder:
        return ScaleLadder.per_octave(self.sigma_t_min, self.sigma_t_max, self.t_levels_per_octave)

    @property
    def compensated(self) -> bool:
        return self.algorithm in ("II", "IV", "joint")

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.mode == "calibrate-table":
            if self.table_weight not in ("geometric", "balanced"):
                raise ParameterError("table weight must be 'geometric' or 'balanced'")
            return self
        if self.algorithm is None:
            self.algorithm = ("joint-raw" if self.causal else "joint") if self.mode == "video" else "IV"
        if self.calibration is None:
            self.calibration = "none" if self.causal else calibration.GAUSSIAN
        self.params  # noqa: B018 - validates Gamma, C and c
        if not 0 < self.sigma_min < self.sigma_max:
            raise ParameterError("need 0 < sigma_min < sigma_max")
        if not 0 < self.sigma_t_min < self.sigma_t_max:
            raise ParameterError("need 0 < sigma_t_min < sigma_t_max")
        if self.levels_per_octave < 2 or self.t_levels_per_octave < 2:
            raise ParameterError("levels per octave must be >= 2")
        if self.compensation not in ("geometric", "linear"):
            raise ParameterError("compensation must be 'geometric' or 'linear'")
        if self.calibration not in (None, "none", calibration.GAUSSIAN, calibration.SINE):
            raise ParameterError(f"calibration must be none, gaussian or sine-wave, got {self.calibration!r}")
        if self.mode == "video":
            if self.algorithm not in ("joint", "joint-raw"):
                raise ParameterError("video mode uses algorithm 'joint' (compensated) or 'joint-raw'")
        elif self.algorithm not in ("I", "II", "III", "IV"):
            raise ParameterError("algorithm must be one of I, II, III, IV")
        if self.causal and self.mode in ("image", "synth") and self.kind not in ("chirp", "onset-ramp"):
            raise ParameterError("causal applies to signal and video modes only")
        if self.causal and self.compensated:
            raise ParameterError("causal mode has no phase compensation; use algorithm I or III (joint-raw for video)")
        if self.causal and self.calibration not in (None, "none"):
            raise ParameterError("causal mode has no calibration; pass calibration none")
        return self


@dataclass
class RunResult:
    status: int
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (DenseScaleError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


def _calibration_model(cfg):
    if cfg.calibration in (None, "none"):
        return None
    return CalibrationModel(cfg.calibration)


def _solution(cfg, domain):
    gamma = cfg.gamma_s if domain == "spatial" else cfg.gamma_t
    cw = cfg.params.c_s if domain == "spatial" else cfg.params.c_t
    c = cfg.c_post if cfg.algorithm in ("III", "IV") else 0.0
    return calibration.solve(gamma, c, cw, dims=2 if domain == "spatial" else 1)


def select_and_calibrate(cfg: RunConfig, data, domain: str) -> ScaleMap:
    params = cfg.params
    sol = _stage("calibration", _solution, cfg, domain)
    if domain == "spatial":
        ladder = cfg.s_ladder
    else:
        ladder = ScaleLadder(cfg.t_ladder.levels)
    smap = _stage("selection", select_dense, cfg.algorithm, data, ladder, params, sol, cfg.causal, cfg.compensation)
    model = _calibration_model(cfg)
    if model is not None:
        smap = _stage("calibration", apply_calibration, smap, model, sol)
    return smap


def _out_base(cfg):
    if not cfg.output:
        raise ParameterError("an output path is required")
    base = Path(cfg.output)
    base.parent.mkdir(parents=True, exist_ok=True)
    return base


def _centre_region(shape):
    return tuple(slice(n // 4, n - n // 4) for n in shape)


def run_image(cfg: RunConfig, image=None) -> RunResult:
    if image is None:
        image = _stage("read", io.read_image, cfg.input)
    smap = select_and_calibrate(cfg, image, "spatial")
    base = _out_base(cfg)
    paths = _stage("write", io.write_scale_map, smap, base, cfg.sigma_min, cfg.sigma_max,
                   _centre_region(smap.shape))
    return RunResult(0, paths, io.scale_map_summary(max_response_map(smap).s_hat[_centre_region(smap.shape)]))


def run_signal(cfg: RunConfig, signal=None) -> RunResult:
    if signal is None:
        signal = _stage("read", io.read_signal, cfg.input)
    smap = select_and_calibrate(cfg, signal, "temporal")
    base = _out_base(cfg)
    paths = _stage("write", io.write_scale_map, smap, base, cfg.sigma_t_min, cfg.sigma_t_max)
    track = base.with_name(base.name + "_track.csv")
    best = max_response_map(smap)
    with open(track, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "tau_hat", "magnitude"])
        for i, (s, m) in enumerate(zip(best.s_hat, best.magnitude)):
            wr.writerow([repr(i * signal.sample_period), repr(float(s)), repr(float(m))])
    paths.append(track)
    return RunResult(0, paths, io.scale_map_summary(best.s_hat))


class _RecursiveStage:
    """One first-order recursive filter per grid cell, used for optional temporal post-smoothing."""

    def __init__(self, taus, c_post, dt):
        mu = c_post * np.sqrt(np.asarray(taus, dtype=float))
        # broadcast over (component, s, tau, frame, y, x)
        self.a = (1.0 / (1.0 + mu / dt)).reshape(1, 1, -1, 1, 1, 1)
        self.state = None

    def step(self, arr):
        if self.state is None:
            self.state = arr.copy()
        else:
            self.state += self.a * (arr - self.state)
        return self.state.copy()


JET_BUFFER_BUDGET = 1 << 30  # bytes of buffered spatial jets in non-causal video mode


def _frame_grids(cfg: RunConfig, stream: FrameStream):
    """Yield (frame index, quadrature grid) in time order.

    Spatial jets are computed once per input frame and then filtered in time;
    non-causal runs whose jet buffer would exceed the budget filter raw frames
    in time first instead.
    """
    params = cfg.params
    s_lad, t_lad = cfg.s_ladder, cfg.t_ladder
    frames = stream.frames
    post = cfg.c_post > 0
    jet_shape = (len(s_lad), 5) + frames.shape[1:]
    if cfg.causal:
        streamer = CausalSpatioTemporalStream(s_lad, t_lad, stream.frame_period, cfg.c_dist)
        for f in range(frames.shape[0]):
            jets = streamer.step(spatial_jet_stack(frames[f], s_lad), orders=(1, 2))
            yield f, spatiotemporal_quadrature_from_jets(jets[:, 0], jets[:, 1], s_lad.levels, t_lad.levels,
                                                         params, post)
    elif TemporalDerivativeWindow.buffer_bytes(frames.shape[0], t_lad, stream.frame_period,
                                               jet_shape) <= JET_BUFFER_BUDGET:
        window = TemporalDerivativeWindow(lambda i: spatial_jet_stack(frames[i], s_lad), frames.shape[0],
                                          t_lad, stream.frame_period, orders=(1, 2))
        for f in range(frames.shape[0]):
            jets = window.at(f)
            yield f, spatiotemporal_quadrature_from_jets(jets[:, 0], jets[:, 1], s_lad.levels, t_lad.levels,
                                                         params, post)
    else:
        for f in range(frames.shape[0]):
            vol = build_spatiotemporal_scalespace(stream, s_lad, t_lad, frames=[f])
            yield f, spatiotemporal_quadrature_grid(vol, params, post_smoothing=post)


def run_video(cfg: RunConfig, stream=None) -> RunResult:
    if stream is None:
        stream = _stage("read", io.read_frames, cfg.input)
    base = _out_base(cfg)
    out_dir = base if base.suffix == "" else base.with_suffix("")
    out_dir.mkdir(parents=True, exist_ok=True)
    params = cfg.params
    s_lad, t_lad = cfg.s_ladder, cfg.t_ladder
    if len(s_lad) < 3 or len(t_lad) < 3:
        raise StageError("config", ParameterError("video mode needs at least 3 levels per ladder"))
    compensate = cfg.algorithm == "joint" and not cfg.causal
    calibrate = compensate and cfg.calibration not in (None, "none")
    post_t = _RecursiveStage(t_lad.levels, cfg.c_post, stream.frame_period) if cfg.temporal_post_smoothing else None
    artifacts = []
    spatial_maps, temporal_maps = [], []
    signature_rows = []
    T = stream.frames.shape[0]
    width = max(4, len(str(T)))
    data_scale = float(np.abs(stream.frames).max())
    grids = _frame_grids(cfg, stream)
    while True:
        item = _stage("scale-space", next, grids, None)
        if item is None:
            break
        f, grid = item
        if post_t is not None:
            comps = post_t.step(np.stack([grid.comp_1t, grid.comp_2t, grid.comp_1tt, grid.comp_2tt]))
            grid = replace(grid, comp_1t=comps[0], comp_2t=comps[1], comp_1tt=comps[2], comp_2tt=comps[3],
                           total=comps[0] + comps[1] + grid.c_t * (comps[2] + comps[3]))
        jmap = _stage("selection", joint_extrema_map, grid, s_lad.levels, t_lad.levels, 4.0, cfg.causal,
                      cfg.gamma_s, cfg.gamma_t, data_scale)
        if compensate:
            jmap = _stage("compensation", st_phase_compensate, jmap, params)
        if calibrate:
            jmap = _stage("calibration", st_calibrate, jmap, params)
        signature_rows.append([f] + [repr(float(v)) for v in grid.total.mean(axis=(2, 3, 4)).ravel()])
        best = max_response_map(jmap)
        spatial_maps.append(best.s_hat[0])
        temporal_maps.append(best.tau_hat[0])
        sp = out_dir / f"spatial_{f:0{width}d}.pgm"
        tp = out_dir / f"temporal_{f:0{width}d}.pgm"
        io._write_pgm_u8(io.scale_map_image(best.s_hat[0], cfg.sigma_min, cfg.sigma_max), sp)
        io._write_pgm_u8(io.scale_map_image(best.tau_hat[0], cfg.sigma_t_min, cfg.sigma_t_max), tp)
        artifacts += [sp, tp]
    sig_path = out_dir / "signature.csv"
    with open(sig_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame"] + [f"s{i}_t{j}" for i in range(len(s_lad)) for j in range(len(t_lad))])
        wr.writerows(signature_rows)
    artifacts.append(sig_path)
    spatial = np.stack(spatial_maps)
    temporal = np.stack(temporal_maps)
    summary = {"spatial": io.scale_map_summary(spatial), "temporal": io.scale_map_summary(temporal)}
    sum_path = out_dir / "summary.csv"
    with open(sum_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        keys = list(summary["spatial"])
        wr.writerow(["domain"] + keys)
        for dom in ("spatial", "temporal"):
            wr.writerow([dom] + [repr(summary[dom][k]) for k in keys])
    artifacts.append(sum_path)
    return RunResult(0, artifacts, summary)


def synth_spec(cfg: RunConfig) -> synth.SyntheticSpec:
    k = cfg.kind
    two_pi = 2 * np.pi
    if k == "sine2d":
        return synth.SyntheticSpec(k, (cfg.height, cfg.width), omega=two_pi / cfg.wavelength)
    if k == "gaussian-blob":
        return synth.SyntheticSpec(k, (cfg.height, cfg.width), s0=cfg.s0)
    if k == "diffuse-edge":
        return synth.SyntheticSpec(k, (cfg.height, cfg.width), s0=cfg.s0)
    if k == "chirp":
        return synth.SyntheticSpec(k, (cfg.length,), a=cfg.chirp_a, b=cfg.chirp_b, sample_period=cfg.sample_period)
    if k == "onset-ramp":
        return synth.SyntheticSpec(k, (cfg.length,), tau0=cfg.tau0, sample_period=cfg.sample_period)
    if k == "st-sine":
        return synth.SyntheticSpec(k, (cfg.frames, cfg.height, cfg.width), omega=two_pi / cfg.wavelength,
                                   omega_t=two_pi / cfg.wavelength_t, sample_period=cfg.sample_period)
    if k == "gaussian-blink":
        return synth.SyntheticSpec(k, (cfg.frames, cfg.height, cfg.width), s0=cfg.s0, tau0=cfg.tau0,
                                   sample_period=cfg.sample_period)
    raise ParameterError(f"unknown synth kind {k!r}")


def run_synth(cfg: RunConfig) -> RunResult:
    """Write a generated pattern in the matching input format (PGM, CSV or frame directory)."""
    spec = _stage("config", synth_spec, cfg)
    data = _stage("generate", synth.generate, spec)
    base = _out_base(cfg)
    if isinstance(data, Signal1D):
        path = base.with_suffix(".csv")
        _stage("write", io.write_signal, data, path)
        return RunResult(0, [path])
    if isinstance(data, FrameStream):
        out_dir = base.with_suffix("") if base.suffix else base
        _stage("write", io.write_frames, data, out_dir)
        return RunResult(0, sorted(out_dir.iterdir()))
    lo, hi = float(data.min()), float(data.max())
    img = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    path = base.with_suffix(".pgm")
    _stage("write", io.write_image, img, path)
    return RunResult(0, [path])


def run_calibrate_table(cfg: RunConfig) -> RunResult:
    text = _stage("calibration", calibration.format_tables, cfg.table_gammas, cfg.table_cs, cfg.table_weight)
    csv_text = _stage("calibration", calibration.tables_csv, cfg.table_gammas, cfg.table_cs, cfg.table_weight)
    artifacts = []
    if cfg.output:
        base = _out_base(cfg)
        tp, cp = base.with_suffix(".txt"), base.with_suffix(".csv")
        tp.write_text(text)
        cp.write_text(csv_text)
        artifacts = [tp, cp]
    return RunResult(0, artifacts, {"text": text, "csv": csv_text})


def _existing(path):
    return path is not None and Path(path).exists()


def run(cfg: RunConfig) -> RunResult:
    """Validate and execute; on failure remove any files this run created."""
    try:
        cfg.validate()
    except DenseScaleError as exc:
        raise StageError("config", exc) from exc
    runner = {"image": run_image, "signal": run_signal, "video": run_video,
              "synth": run_synth, "calibrate-table": run_calibrate_table}[cfg.mode]
    before = set()
    out_parent = Path(cfg.output).resolve().parent if cfg.output else None
    if out_parent is not None and out_parent.exists():
        before = {p for p in out_parent.rglob("*")}
    try:
        return runner(cfg)
    except StageError:
        _cleanup(out_parent, before)
        raise
    except (DenseScaleError, OSError, ValueError) as exc:
        _cleanup(out_parent, before)
        raise StageError(cfg.mode, exc) from exc


def _cleanup(parent, before):
    if parent is None or not parent.exists():
        return
    created = sorted((p for p in parent.rglob("*") if p not in before), key=lambda p: len(p.parts), reverse=True)
    for p in created:
        try:
            p.rmdir() if p.is_dir() else p.unlink()
        except OSError:
            pass
