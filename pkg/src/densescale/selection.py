"""Extrema over scale, phase compensation and the dense selection algorithms.

Maps are stored densely: per point up to ``M`` estimates, sorted by
descending magnitude, in arrays of shape (M, *domain_shape) padded with NaN.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import log, sqrt

import numpy as np

from .errors import KindError, ParameterError, StateError, UnsupportedError
from .quadrature import (
    QuadratureField,
    QuadratureParams,
    component_ratios,
    spatial_quadrature_stack,
    spatiotemporal_quadrature_grid,
    temporal_quadrature_stack,
)
from .scalespace import (
    SPATIAL,
    SPATIOTEMPORAL,
    TEMPORAL_CAUSAL,
    TEMPORAL_NONCAUSAL,
    ScaleLadder,
    ScaleSpaceVolume,
    Signal1D,
    SpatioTemporalVolume,
    build_spatial_scalespace,
    build_temporal_scalespace,
)

S_EFF_OFFSET = 0.125
NOISE_FLOOR = 1e-12
# measure values below (ROUNDING_FLOOR * max|f|)**2 are treated as rounding noise
ROUNDING_FLOOR = 1e-10
FLAG_TIE = 1
FLAG_BORDER = 2
ALGORITHMS = ("I", "II", "III", "IV")


def effective_scale(s):
    """log2(1/8 + s), the display and statistics axis."""
    return np.log2(S_EFF_OFFSET + np.asarray(s, dtype=float))


# ----------------------------------------------------------------------------
# per-point records

@dataclass(frozen=True)
class ScaleSignature:
    values: np.ndarray
    comp_ratios: np.ndarray | None
    ladder: ScaleLadder
    point: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.ladder),):
            raise ParameterError("signature needs one value per ladder level")
        object.__setattr__(self, "values", values)
        if self.comp_ratios is not None:
            w = np.asarray(self.comp_ratios, dtype=float)
            if w.shape != (len(self.ladder),):
                raise ParameterError("comp_ratios must hold w1 per ladder level")
            object.__setattr__(self, "comp_ratios", w)

    @classmethod
    def from_field(cls, stack: QuadratureField, ladder: ScaleLadder, point) -> "ScaleSignature":
        idx = (slice(None),) + tuple(point)
        w1, _ = component_ratios(stack.comp1[idx], stack.comp2[idx])
        return cls(stack.total[idx], w1, ladder, tuple(point))


@dataclass(frozen=True)
class ScaleEstimate:
    s_hat: float
    magnitude: float
    w1: float
    compensated: bool = False
    calibrated: bool = False
    tie: bool = False
    border: bool = False
    kind: str = SPATIAL
    post_smoothed: bool = False
    gamma_cap: float | None = None
    c_post: float | None = None
    c_weight: float | None = None

    @property
    def w2(self) -> float:
        return 1.0 - self.w1


@dataclass(frozen=True)
class JointScaleEstimate:
    s_hat: float
    tau_hat: float
    magnitude: float
    ratios: tuple
    compensated: bool = False
    calibrated: bool = False
    causal: bool = False


# ----------------------------------------------------------------------------
# dense maps

@dataclass(frozen=True)
class ScaleMap:
    """Dense per-point scale estimates.

    ``s_hat``, ``magnitude``, ``w1`` and ``flags`` have shape (M, *shape);
    unused slots hold NaN (flags 0). ``count`` gives the number of valid
    estimates per point and ``endpoint`` marks points whose signature peaks at
    a ladder end (such peaks are not reported).
    """

    s_hat: np.ndarray
    magnitude: np.ndarray
    w1: np.ndarray
    flags: np.ndarray
    count: np.ndarray
    endpoint: np.ndarray
    levels: np.ndarray
    kind: str = SPATIAL
    compensated: bool = False
    calibrated: bool = False
    post_smoothed: bool = False
    gamma_cap: float | None = None
    c_post: float | None = None
    c_weight: float | None = None
    sample_period: float = 1.0

    @property
    def shape(self):
        return self.count.shape

    @property
    def max_count(self) -> int:
        return self.s_hat.shape[0]

    @property
    def w2(self):
        return 1.0 - self.w1

    def estimates_at(self, point) -> list:
        point = tuple(np.atleast_1d(point))
        out = []
        for m in range(int(self.count[point])):
            idx = (m,) + point
            fl = int(self.flags[idx])
            out.append(ScaleEstimate(float(self.s_hat[idx]), float(self.magnitude[idx]), float(self.w1[idx]),
                                     self.compensated, self.calibrated, bool(fl & FLAG_TIE),
                                     bool(fl & FLAG_BORDER), self.kind, self.post_smoothed,
                                     self.gamma_cap, self.c_post, self.c_weight))
        return out

    def n_estimates(self) -> int:
        return int(self.count.sum())


@dataclass(frozen=True)
class JointScaleMap:
    """Dense joint (s, tau) estimates; ``ratios`` has shape (4, M, *shape)
    ordered (1t, 2t, C*1tt, C*2tt)."""

    s_hat: np.ndarray
    tau_hat: np.ndarray
    magnitude: np.ndarray
    ratios: np.ndarray
    flags: np.ndarray
    count: np.ndarray
    s_levels: np.ndarray
    t_levels: np.ndarray
    compensated: bool = False
    calibrated: bool = False
    causal: bool = False
    gamma_cap_s: float | None = None
    gamma_cap_t: float | None = None

    @property
    def shape(self):
        return self.count.shape

    @property
    def max_count(self) -> int:
        return self.s_hat.shape[0]

    def estimates_at(self, point) -> list:
        point = tuple(np.atleast_1d(point))
        out = []
        for m in range(int(self.count[point])):
            idx = (m,) + point
            r = tuple(float(self.ratios[(i,) + idx]) for i in range(4))
            out.append(JointScaleEstimate(float(self.s_hat[idx]), float(self.tau_hat[idx]),
                                          float(self.magnitude[idx]), r, self.compensated,
                                          self.calibrated, self.causal))
        return out

    def n_estimates(self) -> int:
        return int(self.count.sum())


def _pack(point_idx, keys, columns, n_points, shape):
    """Group per-estimate columns by point, sort by descending key, pad to (M, *shape)."""
    count = np.bincount(point_idx, minlength=n_points)
    m = int(count.max()) if count.size else 0
    order = np.lexsort((-keys, point_idx))
    pi = point_idx[order]
    starts = np.zeros(n_points, dtype=int)
    if n_points > 1:
        starts[1:] = np.cumsum(count)[:-1]
    rank = np.arange(pi.size) - starts[pi]
    packed = []
    for col, fill in columns:
        lead = col.shape[:-1]
        arr = np.full(lead + (m, n_points), fill, dtype=np.asarray(fill).dtype if fill == 0 else float)
        arr[..., rank, pi] = col[..., order]
        packed.append(arr.reshape(lead + (m,) + shape))
    return count.reshape(shape), packed


# ----------------------------------------------------------------------------
# extrema over one scale axis

def _parabola(vm, v0, vp):
    denom = vm - 2 * v0 + vp
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = np.where(denom != 0, 0.5 * (vm - vp) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    return delta, v0 - 0.25 * (vm - vp) * delta


def _find_maxima(v):
    """Interior maxima over axis 0 of (K, N); returns (is_max, tie, endpoint) masks."""
    K, N = v.shape
    d = np.diff(v, axis=0)
    last = np.zeros(N)
    rising_into = np.zeros((K, N), dtype=bool)
    for k in range(K):
        rising_into[k] = last > 0
        if k < K - 1:
            last = np.where(d[k] != 0, np.sign(d[k]), last)
    is_max = np.zeros((K, N), dtype=bool)
    tie = np.zeros((K, N), dtype=bool)
    is_max[1:-1] = rising_into[1:-1] & (d[1:] < 0)
    tie[1:-1] = is_max[1:-1] & (d[:-1] == 0)
    endpoint = (d[0] < 0) | rising_into[-1]
    return is_max, tie, endpoint


def _extrema_columns(values, w1, log_levels, floor):
    """Refined extrema of (K, N) signatures: per-estimate (n, s_hat, mag, w1, tie) plus endpoint mask."""
    K, N = values.shape
    if K < 3:
        raise ParameterError("extremum detection needs at least 3 ladder levels")
    is_max, tie, endpoint = _find_maxima(values)
    is_max &= values >= floor
    ks, ns = np.nonzero(is_max)
    vm, v0, vp = values[ks - 1, ns], values[ks, ns], values[ks + 1, ns]
    delta, mag = _parabola(vm, v0, vp)
    step = log_levels[1] - log_levels[0]
    s_hat = np.exp(log_levels[ks] + delta * step)
    nb = ks + np.where(delta >= 0, 1, -1)
    wk = w1[ks, ns]
    w_est = wk + np.abs(delta) * (w1[nb, ns] - wk)
    return ns, s_hat, mag, np.clip(w_est, 0.0, 1.0), tie[ks, ns], endpoint


def _floor(gmax, data_scale):
    floor = NOISE_FLOOR * max(gmax, 0.0)
    if data_scale is not None:
        floor = max(floor, (ROUNDING_FLOOR * float(data_scale)) ** 2)
    return floor


def detect_extrema(signature: ScaleSignature) -> list:
    """Refined local maxima over scale of one signature, strongest first."""
    v = signature.values[:, None]
    w = signature.comp_ratios if signature.comp_ratios is not None else np.full(len(v), 0.5)
    floor = _floor(float(v.max()), None)
    if not v.max() > 0:
        return []
    ns, s, mag, w1, tie, _ = _extrema_columns(v, w[:, None], np.log(signature.ladder.levels), floor)
    order = np.argsort(-mag, kind="stable")
    return [ScaleEstimate(float(s[i]), float(mag[i]), float(w1[i]), tie=bool(tie[i])) for i in order]


def _border_flags(s_hat, point_idx, shape, truncation, sample_period=1.0):
    """True where the kernel support at the selected scale reaches outside the domain."""
    coords = np.unravel_index(point_idx, shape)
    radius = truncation * np.sqrt(s_hat) / sample_period
    dist = np.full(point_idx.shape, np.inf)
    for ax, c in zip(range(len(shape)), coords):
        n = shape[ax]
        dist = np.minimum(dist, np.minimum(c, n - 1 - c))
    return dist < radius


def extrema_map(stack: QuadratureField, ladder: ScaleLadder, truncation: float = 4.0,
                border_axes: int | None = None, gamma_cap=None, c_weight=None,
                data_scale: float | None = None) -> ScaleMap:
    """ScaleMap from a quadrature stack of shape (K, *shape).

    ``border_axes`` limits the border test to the last n axes (e.g. 2 for
    per-frame images stacked in time). ``data_scale`` (max |f| of the input)
    enables the absolute rounding-noise floor.
    """
    total = np.asarray(stack.total, dtype=float)
    K = total.shape[0]
    shape = total.shape[1:]
    v = total.reshape(K, -1)
    w1, _ = component_ratios(stack.comp1, stack.comp2)
    w1 = w1.reshape(K, -1)
    gmax = float(v.max()) if v.size else 0.0
    n_points = v.shape[1]
    if gmax > 0:
        ns, s, mag, ww, tie, endpoint = _extrema_columns(v, w1, np.log(ladder.levels), _floor(gmax, data_scale))
    else:
        ns = np.zeros(0, dtype=int)
        s = mag = ww = np.zeros(0)
        tie = np.zeros(0, dtype=bool)
        endpoint = np.zeros(n_points, dtype=bool)
    dt = stack.sample_period if stack.kind != SPATIAL else 1.0
    if border_axes is None:
        bshape, bidx = shape, ns
    else:
        bshape = shape[-border_axes:]
        bidx = ns % int(np.prod(bshape))
    border = _border_flags(s, bidx, bshape, truncation, dt) if ns.size else np.zeros(0, dtype=bool)
    flags = (tie * FLAG_TIE + border * FLAG_BORDER).astype(np.uint8)
    count, (s_arr, m_arr, w_arr, f_arr) = _pack(
        ns, mag, [(s, np.nan), (mag, np.nan), (ww, np.nan), (flags, np.uint8(0))], n_points, shape)
    return ScaleMap(s_arr, m_arr, w_arr, f_arr.astype(np.uint8), count, endpoint.reshape(shape),
                    np.asarray(ladder.levels), stack.kind, False, False, stack.post_smoothed,
                    gamma_cap, stack.c_post, c_weight, dt)


# ----------------------------------------------------------------------------
# phase compensation

def _check_not_compensated(est):
    if est.compensated:
        raise StateError("estimate is already phase compensated")


def _blend_geometric(s_hat, w1, lower, upper):
    return sqrt(lower * upper) * s_hat / (lower**w1 * upper ** (1 - w1))


def phase_compensate_geometric(estimate, gamma_cap: float):
    """Geometric blend: both boundary estimates map to sqrt((1 - G)(2 - G)) / omega**2."""
    _check_not_compensated(estimate)
    a, b = 1 - gamma_cap, 2 - gamma_cap
    return replace(estimate, s_hat=_blend_geometric(estimate.s_hat, estimate.w1, a, b), compensated=True)


def phase_compensate_linear(estimate, gamma_cap: float):
    _check_not_compensated(estimate)
    a, b = 1 - gamma_cap, 2 - gamma_cap
    w1 = estimate.w1
    s = sqrt(a * b) * (w1 * estimate.s_hat / a + (1 - w1) * estimate.s_hat / b)
    return replace(estimate, s_hat=s, compensated=True)


def phase_compensate_postsmoothed(estimate, solution):
    """Geometric blend with the post-smoothed boundary values S_sine,1 and S_sine,2."""
    _check_not_compensated(estimate)
    g = getattr(estimate, "gamma_cap", None)
    c = getattr(estimate, "c_post", None)
    cw = getattr(estimate, "c_weight", None)
    if g is not None and abs(g - solution.gamma_cap) > 1e-9:
        raise ParameterError(f"solution Gamma {solution.gamma_cap} does not match estimate Gamma {g}")
    if c is not None and getattr(estimate, "post_smoothed", True) and abs(c - solution.c_post) > 1e-9:
        raise ParameterError(f"solution c {solution.c_post} does not match estimate c {c}")
    if cw is not None and abs(cw - solution.c_weight) > 1e-9:
        raise ParameterError(f"solution C {solution.c_weight} does not match estimate C {cw}")
    s = _blend_geometric(estimate.s_hat, estimate.w1, solution.s_sine_1, solution.s_sine_2)
    return replace(estimate, s_hat=s, compensated=True)


def temporal_phase_compensate(estimate, gamma_cap_t: float):
    if getattr(estimate, "kind", None) == TEMPORAL_CAUSAL:
        raise UnsupportedError("phase compensation is not defined for time-causal temporal estimates")
    return phase_compensate_geometric(estimate, gamma_cap_t)


def wavelength_estimate(estimate, gamma_cap: float):
    """Wavelength of the sine that would give this compensated estimate."""
    s = estimate.s_hat if hasattr(estimate, "s_hat") else estimate
    return 2 * np.pi * np.sqrt(s) / ((1 - gamma_cap) * (2 - gamma_cap)) ** 0.25


def frequency_estimate(estimate, gamma_cap: float):
    s = estimate.s_hat if hasattr(estimate, "s_hat") else estimate
    return ((1 - gamma_cap) * (2 - gamma_cap)) ** 0.25 / np.sqrt(s)


# ----------------------------------------------------------------------------
# dense algorithms

def _max_abs(arr):
    return float(np.abs(arr).max()) if np.size(arr) else 0.0


def _volume_for(data, ladder, causal):
    if isinstance(data, ScaleSpaceVolume):
        return data
    if isinstance(data, Signal1D):
        return build_temporal_scalespace(data, ladder, causal=causal)
    return build_spatial_scalespace(data, ladder)


def select_dense(algorithm: str, data, ladder: ScaleLadder | None = None,
                 params: QuadratureParams | None = None, solution=None, causal: bool = False,
                 compensation: str = "geometric") -> ScaleMap:
    """Dense scale selection with Algorithms I-IV.

    ``data`` is an image array, a Signal1D or a prebuilt ScaleSpaceVolume.
    I: raw extrema; II: I + phase compensation; III: extrema of the
    post-smoothed measure; IV: III + compensation with ``solution``.
    """
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    params = params or QuadratureParams()
    if algorithm in ("III", "IV") and params.c_post <= 0:
        raise ParameterError("Algorithms III and IV need c_post > 0")
    if algorithm == "IV" and solution is None:
        raise ParameterError("Algorithm IV needs a CalibrationSolution")
    if compensation not in ("geometric", "linear"):
        raise ParameterError("compensation must be 'geometric' or 'linear'")
    if ladder is None and not isinstance(data, ScaleSpaceVolume):
        raise ParameterError("a ladder is needed unless a volume is given")
    volume = _volume_for(data, ladder, causal)
    post = algorithm in ("III", "IV")
    if volume.kind == SPATIAL:
        stack = spatial_quadrature_stack(volume, params, post_smoothing=post)
        gamma, cw = params.gamma_cap_s, params.c_s
    elif volume.is_temporal:
        stack = temporal_quadrature_stack(volume, params, post_smoothing=post)
        gamma, cw = params.gamma_cap_t, params.c_t
    else:
        raise KindError(f"select_dense does not handle {volume.kind!r} volumes")
    smap = extrema_map(stack, volume.ladder, volume.truncation, gamma_cap=gamma, c_weight=cw,
                       data_scale=_max_abs(volume.source))
    if algorithm in ("II", "IV") and volume.kind == TEMPORAL_CAUSAL:
        raise UnsupportedError("phase compensation is not defined for time-causal temporal estimates")
    if algorithm == "II":
        if compensation == "linear":
            return phase_compensate_linear(smap, gamma)
        return phase_compensate_geometric(smap, gamma)
    if algorithm == "IV":
        return phase_compensate_postsmoothed(smap, solution)
    return smap


def select_dense_stack(stack: QuadratureField, ladder: ScaleLadder, algorithm: str, params: QuadratureParams,
                       solution=None, truncation: float = 4.0, data_scale: float | None = None) -> ScaleMap:
    """Same as select_dense, starting from an already computed quadrature stack."""
    gamma = params.gamma_cap_s if stack.kind == SPATIAL else params.gamma_cap_t
    cw = params.c_s if stack.kind == SPATIAL else params.c_t
    smap = extrema_map(stack, ladder, truncation, gamma_cap=gamma, c_weight=cw, data_scale=data_scale)
    if algorithm == "II":
        return phase_compensate_geometric(smap, gamma)
    if algorithm == "IV":
        if solution is None:
            raise ParameterError("Algorithm IV needs a CalibrationSolution")
        return phase_compensate_postsmoothed(smap, solution)
    return smap


# ----------------------------------------------------------------------------
# joint spatio-temporal selection

def joint_extrema_map(grid, s_levels, t_levels, truncation: float = 4.0, causal: bool = False,
                      gamma_cap_s=None, gamma_cap_t=None, data_scale: float | None = None) -> JointScaleMap:
    """2-D maxima over the (s, tau) grid, 8-neighbourhood, interior levels only.

    ``grid`` is an STQuadratureField with arrays of shape (Ks, Kt, *shape).
    """
    total = np.asarray(grid.total, dtype=float)
    Ks, Kt = total.shape[:2]
    if Ks < 3 or Kt < 3:
        raise ParameterError("joint selection needs at least 3 levels per ladder")
    shape = total.shape[2:]
    n_points = int(np.prod(shape))
    v = total.reshape(Ks, Kt, n_points)
    safe = np.where(total > 0, total, 1.0)
    ratios = np.stack([
        np.where(total > 0, grid.comp_1t / safe, 0.25),
        np.where(total > 0, grid.comp_2t / safe, 0.25),
        np.where(total > 0, grid.c_t * grid.comp_1tt / safe, 0.25),
        np.where(total > 0, grid.c_t * grid.comp_2tt / safe, 0.25),
    ]).reshape(4, Ks, Kt, n_points)
    gmax = float(v.max()) if v.size else 0.0
    centre = v[1:-1, 1:-1]
    is_max = centre >= _floor(gmax, data_scale) if gmax > 0 else np.zeros_like(centre, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= centre > v[1 + di:Ks - 1 + di, 1 + dj:Kt - 1 + dj]
    ii, jj, ns = np.nonzero(is_max)
    ii, jj = ii + 1, jj + 1
    v0 = v[ii, jj, ns]
    ds, ms = _parabola(v[ii - 1, jj, ns], v0, v[ii + 1, jj, ns])
    dtau, mt = _parabola(v[ii, jj - 1, ns], v0, v[ii, jj + 1, ns])
    mag = ms + mt - v0
    ls, lt = np.log(s_levels), np.log(t_levels)
    s_hat = np.exp(ls[ii] + ds * (ls[1] - ls[0]))
    tau_hat = np.exp(lt[jj] + dtau * (lt[1] - lt[0]))
    i_nb = ii + np.where(ds >= 0, 1, -1)
    j_nb = jj + np.where(dtau >= 0, 1, -1)
    r0 = ratios[:, ii, jj, ns]
    r = r0 + np.abs(ds) * (ratios[:, i_nb, jj, ns] - r0) + np.abs(dtau) * (ratios[:, ii, j_nb, ns] - r0)
    r = np.clip(r, 0.0, None)
    r /= np.where(r.sum(axis=0) > 0, r.sum(axis=0), 1.0)
    if ns.size and len(shape) >= 2:
        border = _border_flags(s_hat, ns % int(np.prod(shape[-2:])), shape[-2:], truncation)
    else:
        border = np.zeros(ns.size, dtype=bool)
    flags = (border * FLAG_BORDER).astype(np.uint8)
    count, (s_arr, t_arr, m_arr, r_arr, f_arr) = _pack(
        ns, mag, [(s_hat, np.nan), (tau_hat, np.nan), (mag, np.nan), (r, np.nan), (flags, np.uint8(0))],
        n_points, shape)
    return JointScaleMap(s_arr, t_arr, m_arr, r_arr, f_arr.astype(np.uint8), count,
                         np.asarray(s_levels), np.asarray(t_levels), False, False, causal,
                         gamma_cap_s, gamma_cap_t)


def select_joint_st(volume: SpatioTemporalVolume, params: QuadratureParams | None = None,
                    post_smoothing: bool = False) -> JointScaleMap:
    """Joint (s, tau) selection for every stored frame; map shape is (n_frames, H, W)."""
    if not isinstance(volume, SpatioTemporalVolume):
        raise KindError("select_joint_st needs a spatio-temporal volume")
    params = params or QuadratureParams()
    grid = spatiotemporal_quadrature_grid(volume, params, post_smoothing=post_smoothing)
    return joint_extrema_map(grid, volume.s_ladder.levels, volume.t_ladder.levels, volume.truncation,
                             volume.causal, params.gamma_cap_s, params.gamma_cap_t,
                             _max_abs(volume.temporal[:, 0]))


def st_weights(ratios):
    """Spatial (w_s1) and temporal (w_t1) first-order weights from the four component ratios."""
    r1t, r2t, r1tt, r2tt = ratios
    return r1t + r1tt, r1t + r2t


def st_phase_compensate(estimate, params: QuadratureParams):
    """Separate geometric blends over space and time using the four component ratios."""
    if estimate.causal:
        raise UnsupportedError("phase compensation is not defined for time-causal estimates")
    if estimate.compensated:
        raise StateError("estimate is already phase compensated")
    gs, gt = params.gamma_cap_s, params.gamma_cap_t
    ratios = np.asarray(estimate.ratios, dtype=float)
    ws1, wt1 = st_weights(ratios)
    s = _blend_geometric(estimate.s_hat, ws1, 1 - gs, 2 - gs)
    tau = _blend_geometric(estimate.tau_hat, wt1, 1 - gt, 2 - gt)
    return replace(estimate, s_hat=s, tau_hat=tau, compensated=True)


def post_normalized_magnitude(jmap, params: QuadratureParams):
    """Magnitude times s_hat**Gs * tau_hat**Gt, which removes the wavelength dependency."""
    return jmap.magnitude * jmap.s_hat ** params.gamma_cap_s * jmap.tau_hat ** params.gamma_cap_t


# ----------------------------------------------------------------------------
# map summaries

@dataclass(frozen=True)
class MaxResponseField:
    """Strongest estimate per point; NaN marks points without any estimate."""

    s_hat: np.ndarray
    magnitude: np.ndarray
    w1: np.ndarray
    valid: np.ndarray
    tau_hat: np.ndarray | None = None


def max_response_map(smap) -> MaxResponseField:
    if smap.max_count == 0:
        nan = np.full(smap.shape, np.nan)
        return MaxResponseField(nan, nan.copy(), nan.copy(), np.zeros(smap.shape, dtype=bool),
                                nan.copy() if isinstance(smap, JointScaleMap) else None)
    valid = smap.count > 0
    if isinstance(smap, JointScaleMap):
        return MaxResponseField(smap.s_hat[0].copy(), smap.magnitude[0].copy(),
                                np.nan * np.ones(smap.shape), valid, smap.tau_hat[0].copy())
    return MaxResponseField(smap.s_hat[0].copy(), smap.magnitude[0].copy(), smap.w1[0].copy(), valid)


def selection_surfaces(smap: ScaleMap) -> np.ndarray:
    """Point cloud rows (x, y, s_eff, magnitude) for every retained estimate.

    For 1-D maps the y column is 0; for stacks of frames the leading axes
    are flattened into y rows per frame in order.
    """
    if smap.max_count == 0 or smap.n_estimates() == 0:
        return np.zeros((0, 4))
    shape = smap.shape
    m_idx, *pt = np.nonzero(~np.isnan(smap.s_hat))
    if len(shape) == 1:
        xs, ys = pt[0], np.zeros_like(pt[0])
    else:
        xs, ys = pt[-1], pt[-2]
    s = smap.s_hat[(m_idx, *pt)]
    mag = smap.magnitude[(m_idx, *pt)]
    return np.column_stack([xs, ys, effective_scale(s), mag]).astype(float)
