"""Gamma-normalized quasi quadrature measures and their post-smoothing."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from math import sqrt

import numpy as np

from .errors import KindError, ParameterError, StateError
from .scalespace import (
    SPATIAL,
    TEMPORAL_CAUSAL,
    ScaleSpaceVolume,
    SpatioTemporalVolume,
    TimeCausalCascade,
    backward_difference,
    causal_smooth_signal,
    gaussian_derivative,
    smooth_1d,
    spatial_jet,
)


def _check_gamma(gamma_cap, allow_one=False):
    ok = 0 <= gamma_cap <= 1 if allow_one else 0 <= gamma_cap < 1
    if not ok:
        raise ParameterError(f"Gamma must lie in [0, 1), got {gamma_cap}")


def default_weight_balanced(gamma_cap: float) -> float:
    """Weight that gives first- and second-order responses equal peak strength on a sine."""
    _check_gamma(gamma_cap)
    return 1.0 / sqrt((1 - gamma_cap) * (2 - gamma_cap))


def default_weight_geometric(gamma_cap: float) -> float:
    """``1 / (2 - Gamma)``; Gamma = 1 is accepted for table generation."""
    _check_gamma(gamma_cap, allow_one=True)
    return 1.0 / (2 - gamma_cap)


@dataclass(frozen=True)
class QuadratureParams:
    gamma_cap_s: float = 0.25
    gamma_cap_t: float = 0.25
    c_s: float | None = None
    c_t: float | None = None
    c_post: float = 1.0

    def __post_init__(self):
        _check_gamma(self.gamma_cap_s)
        _check_gamma(self.gamma_cap_t)
        if self.c_s is None:
            object.__setattr__(self, "c_s", default_weight_balanced(self.gamma_cap_s))
        if self.c_t is None:
            object.__setattr__(self, "c_t", default_weight_balanced(self.gamma_cap_t))
        if not self.c_s > 0 or not self.c_t > 0:
            raise ParameterError("C weights must be positive")
        if not self.c_post >= 0:
            raise ParameterError(f"c_post must be >= 0, got {self.c_post}")


@dataclass(frozen=True)
class QuadratureField:
    """Q and its two components at one scale level.

    Arrays may carry a leading level axis when produced by the stack helpers;
    ``scale`` is then the ladder array.
    """

    total: np.ndarray
    comp1: np.ndarray
    comp2: np.ndarray
    scale: float | np.ndarray
    kind: str = SPATIAL
    post_smoothed: bool = False
    c_post: float = 0.0
    sample_period: float = 1.0

    def weights(self):
        """Component ratios (w1, w2); 1/2 each where the total vanishes."""
        return component_ratios(self.comp1, self.comp2)


@dataclass(frozen=True)
class STQuadratureField:
    total: np.ndarray
    comp_1t: np.ndarray
    comp_2t: np.ndarray
    comp_1tt: np.ndarray
    comp_2tt: np.ndarray
    s: float | np.ndarray
    tau: float | np.ndarray
    c_t: float
    post_smoothed: bool = False
    c_post: float = 0.0


def component_ratios(comp1, comp2):
    comp1 = np.asarray(comp1, dtype=float)
    comp2 = np.asarray(comp2, dtype=float)
    total = comp1 + comp2
    with np.errstate(invalid="ignore", divide="ignore"):
        w1 = np.where(total > 0, comp1 / np.where(total > 0, total, 1.0), 0.5)
    return w1, 1.0 - w1


def _assemble_spatial(jet, s, gamma_cap, c_s):
    Lx, Ly, Lxx, Lxy, Lyy = jet
    comp1 = s ** (1 - gamma_cap) * (Lx**2 + Ly**2)
    comp2 = c_s * s ** (2 - gamma_cap) * (Lxx**2 + 2 * Lxy**2 + Lyy**2)
    return comp1, comp2


def spatial_quadrature(volume: ScaleSpaceVolume, level: int, params: QuadratureParams) -> QuadratureField:
    """Unsmoothed spatial measure at one ladder level."""
    if not isinstance(volume, ScaleSpaceVolume) or volume.kind != SPATIAL:
        raise KindError("spatial_quadrature needs a spatial scale-space volume")
    volume.check_level(level)
    s = float(volume.ladder[level])
    comp1, comp2 = _assemble_spatial(spatial_jet(volume.source, s, volume.truncation), s,
                                     params.gamma_cap_s, params.c_s)
    return QuadratureField(comp1 + comp2, comp1, comp2, s, SPATIAL)


def temporal_quadrature(volume: ScaleSpaceVolume, level: int, params: QuadratureParams) -> QuadratureField:
    if not isinstance(volume, ScaleSpaceVolume) or not volume.is_temporal:
        raise KindError("temporal_quadrature needs a temporal scale-space volume")
    volume.check_level(level)
    tau = float(volume.ladder[level])
    dt = volume.sample_period
    if volume.kind == TEMPORAL_CAUSAL:
        Lt = backward_difference(volume.planes[level], 1, dt)
        Ltt = backward_difference(volume.planes[level], 2, dt)
    else:
        Lt = gaussian_derivative(volume.source, tau / dt**2, {-1: 1}, volume.truncation) / dt
        Ltt = gaussian_derivative(volume.source, tau / dt**2, {-1: 2}, volume.truncation) / dt**2
    g = params.gamma_cap_t
    comp1 = tau ** (1 - g) * Lt**2
    comp2 = params.c_t * tau ** (2 - g) * Ltt**2
    return QuadratureField(comp1 + comp2, comp1, comp2, tau, volume.kind, sample_period=dt)


def spatiotemporal_quadrature(volume: SpatioTemporalVolume, s_level: int, t_level: int,
                              params: QuadratureParams) -> STQuadratureField:
    """Joint measure at one (s, tau) pair for every stored frame.

    Arrays have shape (n_frames, H, W).
    """
    if not isinstance(volume, SpatioTemporalVolume):
        raise KindError("spatiotemporal_quadrature needs a spatio-temporal volume")
    volume.check_levels(s_level, t_level)
    s = float(volume.s_ladder[s_level])
    tau = float(volume.t_ladder[t_level])
    gs, gt = params.gamma_cap_s, params.gamma_cap_t
    c1t, c2t = _assemble_spatial(spatial_jet(volume.temporal[t_level, 1], s, volume.truncation), s, gs, params.c_s)
    c1tt, c2tt = _assemble_spatial(spatial_jet(volume.temporal[t_level, 2], s, volume.truncation), s, gs, params.c_s)
    ft = tau ** (1 - gt)
    ftt = tau ** (2 - gt)
    c1t, c2t, c1tt, c2tt = ft * c1t, ft * c2t, ftt * c1tt, ftt * c2tt
    total = c1t + c2t + params.c_t * (c1tt + c2tt)
    return STQuadratureField(total, c1t, c2t, c1tt, c2tt, s, tau, params.c_t)


def _smooth_spatial_field(arr, s_int, truncation):
    return gaussian_derivative(arr, s_int, {-1: 0, -2: 0}, truncation) if s_int > 0 else arr


def post_smooth(field, params: QuadratureParams, truncation_sigmas: float = 4.0):
    """Smooth every component with a Gaussian of variance ``c_post**2 * scale``.

    Spatial fields are smoothed over the image plane; temporal fields over
    time (the causal cascade is used for causal fields). Joint fields are
    smoothed spatially only. Smoothing is linear, so total = sum of
    components still holds.
    """
    if field.post_smoothed:
        raise StateError("field is already post-smoothed")
    c = params.c_post
    if isinstance(field, STQuadratureField):
        if c == 0:
            return replace(field, post_smoothed=True, c_post=0.0)
        s_int = c**2 * field.s
        parts = [_smooth_spatial_field(a, s_int, truncation_sigmas)
                 for a in (field.comp_1t, field.comp_2t, field.comp_1tt, field.comp_2tt)]
        total = parts[0] + parts[1] + field.c_t * (parts[2] + parts[3])
        return replace(field, total=total, comp_1t=parts[0], comp_2t=parts[1], comp_1tt=parts[2],
                       comp_2tt=parts[3], post_smoothed=True, c_post=c)
    if c == 0:
        return replace(field, post_smoothed=True, c_post=0.0)
    if field.kind == SPATIAL:
        s_int = c**2 * field.scale
        comp1 = _smooth_spatial_field(field.comp1, s_int, truncation_sigmas)
        comp2 = _smooth_spatial_field(field.comp2, s_int, truncation_sigmas)
    elif field.kind == TEMPORAL_CAUSAL:
        cascade = TimeCausalCascade.create(c**2 * field.scale, field.sample_period)
        comp1 = causal_smooth_signal(field.comp1, cascade, axis=-1)
        comp2 = causal_smooth_signal(field.comp2, cascade, axis=-1)
    else:
        s_int = c**2 * field.scale / field.sample_period**2
        comp1 = smooth_1d(field.comp1, s_int, truncation_sigmas=truncation_sigmas)
        comp2 = smooth_1d(field.comp2, s_int, truncation_sigmas=truncation_sigmas)
    return replace(field, total=comp1 + comp2, comp1=comp1, comp2=comp2, post_smoothed=True, c_post=c)


# ----------------------------------------------------------------------------
# whole-ladder helpers

def worker_count() -> int:
    """Thread cap from DENSESCALE_THREADS (default: CPU count)."""
    raw = os.environ.get("DENSESCALE_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ParameterError(f"DENSESCALE_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ParameterError("DENSESCALE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Ordered map over items, threaded when more than one worker is allowed."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _stack(fields, kind, ladder, post, c_post, dt=1.0):
    return QuadratureField(
        np.stack([f.total for f in fields]),
        np.stack([f.comp1 for f in fields]),
        np.stack([f.comp2 for f in fields]),
        np.asarray(ladder.levels),
        kind, post, c_post, dt,
    )


def spatial_quadrature_stack(volume: ScaleSpaceVolume, params: QuadratureParams,
                             post_smoothing: bool = False) -> QuadratureField:
    """Measure at every level, shape (K, H, W); optionally post-smoothed per level."""
    def one(k):
        f = spatial_quadrature(volume, k, params)
        return post_smooth(f, params, volume.truncation) if post_smoothing else f

    fields = parallel_map(one, range(len(volume.ladder)))
    return _stack(fields, SPATIAL, volume.ladder, post_smoothing, params.c_post if post_smoothing else 0.0)


def temporal_quadrature_stack(volume: ScaleSpaceVolume, params: QuadratureParams,
                              post_smoothing: bool = False) -> QuadratureField:
    fields = []
    for k in range(len(volume.ladder)):
        f = temporal_quadrature(volume, k, params)
        if post_smoothing:
            f = post_smooth(f, params, volume.truncation)
        fields.append(f)
    return _stack(fields, volume.kind, volume.ladder, post_smoothing,
                  params.c_post if post_smoothing else 0.0, volume.sample_period)


def _grid_from_jets(jet_of, s_levels, taus, params, post_smoothing, truncation):
    gs, gt = params.gamma_cap_s, params.gamma_cap_t
    taus = np.asarray(taus, dtype=float)
    s_levels = np.asarray(s_levels, dtype=float)

    def one(i):
        s = float(s_levels[i])
        jt, jtt = jet_of(i)
        bshape = (-1,) + (1,) * (jt[0].ndim - 1)
        ft = (taus ** (1 - gt)).reshape(bshape)
        ftt = (taus ** (2 - gt)).reshape(bshape)
        c1t, c2t = _assemble_spatial(jt, s, gs, params.c_s)
        c1tt, c2tt = _assemble_spatial(jtt, s, gs, params.c_s)
        parts = np.stack([ft * c1t, ft * c2t, ftt * c1tt, ftt * c2tt])
        if post_smoothing and params.c_post > 0:
            parts = _smooth_spatial_field(parts, params.c_post**2 * s, truncation)
        return parts

    levels = parallel_map(one, range(len(s_levels)))
    c1t, c2t, c1tt, c2tt = (np.stack([lv[n] for lv in levels]) for n in range(4))
    total = c1t + c2t + params.c_t * (c1tt + c2tt)
    return STQuadratureField(total, c1t, c2t, c1tt, c2tt, s_levels, taus,
                             params.c_t, post_smoothing, params.c_post if post_smoothing else 0.0)


def spatiotemporal_quadrature_grid(volume: SpatioTemporalVolume, params: QuadratureParams,
                                   post_smoothing: bool = False) -> STQuadratureField:
    """Measure over the full (s, tau) grid: arrays of shape (Ks, Kt, n_frames, H, W).

    Matches spatiotemporal_quadrature level by level, but convolves all
    temporal levels of one spatial scale at once.
    """
    if not isinstance(volume, SpatioTemporalVolume):
        raise KindError("spatiotemporal_quadrature_grid needs a spatio-temporal volume")

    def jet_of(i):
        s = float(volume.s_ladder[i])
        return (spatial_jet(volume.temporal[:, 1], s, volume.truncation),
                spatial_jet(volume.temporal[:, 2], s, volume.truncation))

    return _grid_from_jets(jet_of, volume.s_ladder.levels, volume.t_ladder.levels, params,
                           post_smoothing, volume.truncation)


def spatiotemporal_quadrature_from_jets(jets_t, jets_tt, s_levels, taus, params: QuadratureParams,
                                        post_smoothing: bool = False,
                                        truncation_sigmas: float = 4.0) -> STQuadratureField:
    """Grid measure from temporally differentiated spatial jets of one frame.

    ``jets_t`` and ``jets_tt`` have shape (Kt, Ks, 5, H, W): first and second
    temporal derivatives of the (Lx, Ly, Lxx, Lxy, Lyy) stack at every
    spatial level. Equal to spatiotemporal_quadrature_grid for that frame
    because spatial and temporal filtering commute, but the spatial work is
    done once per input frame instead of once per temporal level.
    """
    jets_t = np.asarray(jets_t, dtype=float)
    jets_tt = np.asarray(jets_tt, dtype=float)
    expect = (len(taus), len(s_levels), 5)
    if jets_t.ndim != 5 or jets_t.shape[:3] != expect or jets_tt.shape != jets_t.shape:
        raise ParameterError(f"jets must have shape {expect} + (H, W), got {jets_t.shape} and {jets_tt.shape}")

    def jet_of(i):
        # five (Kt, 1, H, W) fields per temporal order
        return (tuple(jets_t[:, i, d, None] for d in range(5)),
                tuple(jets_tt[:, i, d, None] for d in range(5)))

    return _grid_from_jets(jet_of, s_levels, taus, params, post_smoothing, truncation_sigmas)
