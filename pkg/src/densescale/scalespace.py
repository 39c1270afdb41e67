"""Gaussian scale-space representations over images, signals and video.

Spatial smoothing uses sampled, truncated and renormalized Gaussian kernels
with symmetric (half-sample) reflection at the borders. Temporal smoothing is
either the non-causal Gaussian or a cascade of first-order recursive filters
approximating the time-causal limit kernel.

Scale values are variances: ``s`` in pixels**2, ``tau`` in seconds**2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, sqrt
from typing import Sequence

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import lfilter, lfilter_zi

from .errors import KindError, ParameterError, UnsupportedError

SPATIAL = "spatial"
TEMPORAL_NONCAUSAL = "temporal-noncausal"
TEMPORAL_CAUSAL = "temporal-causal"
SPATIOTEMPORAL = "spatiotemporal"

DEFAULT_TRUNCATION = 4.0
# below this variance increment the sampled kernel no longer carries its nominal
# variance, so levels are then smoothed directly from the source instead
MIN_INCREMENT = 1.0


@dataclass(frozen=True)
class Signal1D:
    data: np.ndarray
    sample_period: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 1 or data.size < 1:
            raise ParameterError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(data)):
            raise ParameterError("signal contains non-finite values")
        if not self.sample_period > 0:
            raise ParameterError(f"sample_period must be > 0, got {self.sample_period}")
        object.__setattr__(self, "data", data)

    def __len__(self):
        return self.data.size


@dataclass(frozen=True)
class FrameStream:
    """A video as a (T, H, W) array with its frame rate in frames per second."""

    frames: np.ndarray
    frame_rate: float = 1.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 3 or frames.size == 0:
            raise ParameterError("frames must be a non-empty (T, H, W) array")
        if not np.all(np.isfinite(frames)):
            raise ParameterError("frames contain non-finite values")
        if not self.frame_rate > 0:
            raise ParameterError(f"frame_rate must be > 0, got {self.frame_rate}")
        object.__setattr__(self, "frames", frames)

    @property
    def frame_period(self):
        return 1.0 / self.frame_rate


def as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ParameterError("image must be a non-empty 2-D array")
    if not np.all(np.isfinite(img)):
        raise ParameterError("image contains non-finite values")
    return img


@dataclass(frozen=True)
class ScaleLadder:
    """Geometrically spaced scale levels (variances)."""

    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float).ravel()
        if levels.size == 0:
            raise ParameterError("ladder must have at least one level")
        if np.any(levels <= 0):
            raise ParameterError("ladder levels must be positive")
        if levels.size > 1:
            ratios = levels[1:] / levels[:-1]
            if np.any(ratios <= 1):
                raise ParameterError("ladder levels must be strictly increasing")
            if np.ptp(np.log(ratios)) > 1e-9:
                raise ParameterError("ladder levels must have a constant ratio")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_sigmas(cls, sigma_min: float, sigma_max: float, count: int) -> "ScaleLadder":
        """``count`` levels log-spaced between two standard deviations (inclusive)."""
        if not 0 < sigma_min < sigma_max:
            raise ParameterError("need 0 < sigma_min < sigma_max")
        if count < 2:
            raise ParameterError("count must be >= 2")
        sigmas = np.geomspace(sigma_min, sigma_max, count)
        return cls(sigmas**2)

    @classmethod
    def per_octave(cls, sigma_min: float, sigma_max: float, levels_per_octave: int = 4) -> "ScaleLadder":
        """Levels at ``sigma_min * 2**(k / levels_per_octave)`` up to ``sigma_max``."""
        if not 0 < sigma_min < sigma_max:
            raise ParameterError("need 0 < sigma_min < sigma_max")
        if levels_per_octave < 1:
            raise ParameterError("levels_per_octave must be >= 1")
        n = int(np.floor(levels_per_octave * np.log2(sigma_max / sigma_min) + 1e-9)) + 1
        sigmas = sigma_min * 2.0 ** (np.arange(n) / levels_per_octave)
        return cls(sigmas**2)

    @property
    def ratio(self) -> float:
        if self.levels.size < 2:
            return float("nan")
        return float(self.levels[1] / self.levels[0])

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(self.levels)

    def __len__(self):
        return self.levels.size

    def __getitem__(self, k):
        return self.levels[k]


# ----------------------------------------------------------------------------
# kernels

def kernel_radius(s: float, truncation_sigmas: float = DEFAULT_TRUNCATION) -> int:
    return max(1, int(ceil(truncation_sigmas * sqrt(s))))


def gaussian_kernel(s: float, truncation_sigmas: float = DEFAULT_TRUNCATION, normalize: bool = True) -> np.ndarray:
    """Sampled 1-D Gaussian with variance ``s`` on ``-r..r``, ``r = ceil(truncation_sigmas * sqrt(s))``."""
    if not s > 0:
        raise ParameterError(f"scale must be positive, got {s}")
    if truncation_sigmas < 3:
        raise ParameterError("truncation_sigmas must be >= 3")
    return _gaussian_kernel(float(s), float(truncation_sigmas), 0, bool(normalize))


def gaussian_derivative_kernel(s: float, order: int, truncation_sigmas: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Sampled Gaussian derivative kernel for use with convolution.

    Order 1 is scaled so that it maps ``x`` to 1; order 2 is made zero-sum and
    scaled so that it maps ``x**2 / 2`` to 1.
    """
    if order not in (0, 1, 2):
        raise UnsupportedError(f"derivative order {order} not supported (max 2)")
    if not s > 0:
        raise ParameterError(f"scale must be positive, got {s}")
    return _gaussian_kernel(float(s), float(truncation_sigmas), order, True)


@lru_cache(maxsize=1024)
def _gaussian_kernel(s, truncation, order, normalize):
    r = kernel_radius(s, truncation)
    u = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-(u**2) / (2 * s)) / sqrt(2 * np.pi * s)
    if order == 0:
        k = g / g.sum() if normalize else g
    elif order == 1:
        k = -u / s * g
        k /= -np.sum(u * k)
    else:
        k = (u**2 - s) / s**2 * g
        k -= k.mean()
        k /= np.sum(u**2 * k) / 2
    k.setflags(write=False)
    return k


# Short axes are filtered as one dense matrix product with the reflected
# kernel folded in; same sums as convolve1d, but BLAS-fast.
_DENSE_MAX_LENGTH = 1024
_DENSE_KERNEL_RATIO = 16


@lru_cache(maxsize=512)
def _reflect_operator(kernel_bytes: bytes, n: int) -> np.ndarray:
    k = np.frombuffer(kernel_bytes)
    r = (k.size - 1) // 2
    rows = np.repeat(np.arange(n), k.size)
    cols = _reflect_index(np.arange(n)[:, None] - np.arange(-r, r + 1)[None, :], n).ravel()
    op = np.zeros((n, n))
    np.add.at(op, (rows, cols), np.tile(k, n))
    op.setflags(write=False)
    return op


def filter_axis(data, kernel: np.ndarray, axis: int = -1) -> np.ndarray:
    """``convolve1d(data, kernel, axis, mode="reflect")``, via a dense operator on short axes."""
    data = np.asarray(data, dtype=float)
    axis = axis % data.ndim
    n = data.shape[axis]
    if axis >= data.ndim - 2 and n <= _DENSE_MAX_LENGTH and n <= _DENSE_KERNEL_RATIO * kernel.size:
        op = _reflect_operator(np.ascontiguousarray(kernel, dtype=float).tobytes(), n)
        if axis == data.ndim - 1:
            return data @ op.T
        return op @ data
    return convolve1d(data, kernel, axis=axis, mode="reflect")


def _smooth_axes(data: np.ndarray, s: float, axes: Sequence[int], truncation: float) -> np.ndarray:
    if s == 0:
        return np.array(data, dtype=float, copy=True)
    k = gaussian_kernel(s, truncation)
    out = np.asarray(data, dtype=float)
    for ax in axes:
        out = filter_axis(out, k, ax)
    return out


def smooth_2d(image, s: float, truncation_sigmas: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Separable Gaussian smoothing of an image (x first, then y)."""
    img = as_image(image)
    if s < 0:
        raise ParameterError(f"scale must be >= 0, got {s}")
    return _smooth_axes(img, s, (-1, -2), truncation_sigmas)


def smooth_1d(data, s: float, axis: int = -1, truncation_sigmas: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Gaussian smoothing of ``data`` along one axis; ``s`` in samples**2."""
    if s < 0:
        raise ParameterError(f"scale must be >= 0, got {s}")
    return _smooth_axes(np.asarray(data, dtype=float), s, (axis,), truncation_sigmas)


def gaussian_derivative(data, s: float, orders: dict, truncation_sigmas: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Convolve ``data`` with a separable Gaussian derivative kernel.

    ``orders`` maps axis -> derivative order; every listed axis is smoothed
    with variance ``s`` (in samples**2).
    """
    out = np.asarray(data, dtype=float)
    for ax, order in orders.items():
        out = filter_axis(out, gaussian_derivative_kernel(s, order, truncation_sigmas), ax)
    return out


def spatial_jet(data, s: float, truncation_sigmas: float = DEFAULT_TRUNCATION):
    """Unnormalized (Lx, Ly, Lxx, Lxy, Lyy) over the last two axes (y, x) at scale ``s``.

    Shares the x-direction passes between derivatives: eight 1-D convolutions.
    """
    data = np.asarray(data, dtype=float)
    k0, k1, k2 = (gaussian_derivative_kernel(s, n, truncation_sigmas) for n in (0, 1, 2))
    x0 = filter_axis(data, k0, -1)
    x1 = filter_axis(data, k1, -1)
    x2 = filter_axis(data, k2, -1)
    Lx = filter_axis(x1, k0, -2)
    Ly = filter_axis(x0, k1, -2)
    Lxx = filter_axis(x2, k0, -2)
    Lxy = filter_axis(x1, k1, -2)
    Lyy = filter_axis(x0, k2, -2)
    return Lx, Ly, Lxx, Lxy, Lyy


def spatial_jet_stack(data, s_ladder: ScaleLadder, truncation_sigmas: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """``spatial_jet`` at every ladder level, stacked to shape (Ks, 5, *data.shape)."""
    data = np.asarray(data, dtype=float)
    return np.stack([np.stack(spatial_jet(data, float(s), truncation_sigmas)) for s in s_ladder.levels])


# ----------------------------------------------------------------------------
# time-causal cascade

@dataclass
class TimeCausalCascade:
    """First-order recursive filters in cascade approximating the time-causal limit kernel.

    ``mus`` are the continuous time constants ``c**-k * sqrt(c**2 - 1) * sqrt(tau)``.
    Each discrete stage with time constant ``m`` (in samples) has variance
    ``m**2 + m``, so ``stage_mus`` are solved from the continuous variance
    increments ``mus**2`` to keep the cascade variance at ``tau * (1 - c**(-2K))``.
    """

    c_dist: float
    tau: float
    dt: float
    mus: np.ndarray
    stage_mus: np.ndarray
    eps_var: float = 1e-3
    warm_start: bool = True
    states: list | None = field(default=None, repr=False)

    @classmethod
    def create(cls, tau: float, dt: float = 1.0, c_dist: float = 2.0, eps_var: float = 1e-3,
               max_stages: int = 32, warm_start: bool = True) -> "TimeCausalCascade":
        if not tau > 0:
            raise ParameterError(f"tau must be positive, got {tau}")
        if not c_dist > 1:
            raise ParameterError(f"c_dist must be > 1, got {c_dist}")
        if not dt > 0:
            raise ParameterError(f"dt must be positive, got {dt}")
        if not 0 < eps_var < 1:
            raise ParameterError("eps_var must lie in (0, 1)")
        n_stages = int(ceil(-np.log(eps_var) / (2 * np.log(c_dist)) - 1e-12))
        n_stages = min(max(n_stages, 1), max_stages)
        k = np.arange(1, n_stages + 1)
        mus = c_dist ** (-k) * sqrt(c_dist**2 - 1) * sqrt(tau)
        inc = mus**2 / dt**2
        stage = (np.sqrt(1 + 4 * inc) - 1) / 2 * dt
        return cls(c_dist=c_dist, tau=tau, dt=dt, mus=mus, stage_mus=stage, eps_var=eps_var, warm_start=warm_start)

    @property
    def n_stages(self) -> int:
        return self.mus.size

    @property
    def coefficients(self) -> np.ndarray:
        return 1.0 / (1.0 + self.stage_mus / self.dt)

    @property
    def variance(self) -> float:
        """Impulse-response variance of the discrete cascade, seconds**2."""
        m = self.stage_mus / self.dt
        return float(np.sum(m**2 + m) * self.dt**2)

    def reset(self):
        self.states = None


def cascade_step(cascade: TimeCausalCascade, new_frame) -> np.ndarray:
    """Advance every stage by one frame and return the last stage's output."""
    x = np.asarray(new_frame, dtype=float)
    if cascade.states is None:
        init = x if cascade.warm_start else np.zeros_like(x)
        cascade.states = [np.array(init, copy=True) for _ in range(cascade.n_stages)]
    elif cascade.states[0].shape != x.shape:
        raise ParameterError(f"frame shape {x.shape} does not match cascade state {cascade.states[0].shape}")
    tmp = np.empty_like(x)
    for out, a in zip(cascade.states, cascade.coefficients):
        np.subtract(x, out, out=tmp)
        tmp *= a
        out += tmp
        x = out
    return x.copy()


def causal_smooth_signal(data: np.ndarray, cascade: TimeCausalCascade, axis: int = 0) -> np.ndarray:
    """Run a fresh copy of ``cascade`` over a whole array along ``axis``."""
    y = np.asarray(data, dtype=float)
    for a in cascade.coefficients:
        b, den = [a], [1.0, -(1.0 - a)]
        if cascade.warm_start:
            first = np.take(y, [0], axis=axis)
            zi = lfilter_zi(b, den) * first
            y, _ = lfilter(b, den, y, axis=axis, zi=zi)
        else:
            y = lfilter(b, den, y, axis=axis)
    return y


def backward_difference(data: np.ndarray, order: int, dt: float, axis: int = 0) -> np.ndarray:
    """Causal finite differences; the first samples repeat the initial value."""
    y = np.asarray(data, dtype=float)
    for _ in range(order):
        first = np.take(y, [0], axis=axis)
        y = np.diff(y, axis=axis, prepend=first) / dt
    return y


# ----------------------------------------------------------------------------
# volumes

@dataclass
class ScaleSpaceVolume:
    """Smoothed planes over a ladder, plus the source data used for derivative kernels.

    For temporal volumes, ``ladder`` is in seconds**2 and ``sample_period`` converts
    to samples.
    """

    kind: str
    ladder: ScaleLadder
    planes: list
    source: np.ndarray
    sample_period: float = 1.0
    truncation: float = DEFAULT_TRUNCATION
    cascades: list | None = None

    def __len__(self):
        return len(self.ladder)

    @property
    def is_temporal(self) -> bool:
        return self.kind in (TEMPORAL_NONCAUSAL, TEMPORAL_CAUSAL)

    def check_level(self, level: int):
        if not 0 <= level < len(self.ladder):
            raise ParameterError(f"level {level} outside ladder of {len(self.ladder)} levels")


@dataclass
class SpatioTemporalVolume:
    """Temporal derivatives (orders 0, 1, 2) per temporal level at selected frames.

    ``temporal`` has shape (n_tau, 3, n_frames, H, W) and is not yet spatially
    smoothed; spatial derivatives are applied on demand, so per frame only
    (x, y, s, tau) is ever materialized.
    """

    s_ladder: ScaleLadder
    t_ladder: ScaleLadder
    temporal: np.ndarray
    frame_indices: np.ndarray
    frame_period: float = 1.0
    causal: bool = False
    truncation: float = DEFAULT_TRUNCATION
    kind: str = SPATIOTEMPORAL

    def check_levels(self, s_level: int, t_level: int):
        if not 0 <= s_level < len(self.s_ladder):
            raise ParameterError(f"spatial level {s_level} outside ladder")
        if not 0 <= t_level < len(self.t_ladder):
            raise ParameterError(f"temporal level {t_level} outside ladder")

    @property
    def frame_shape(self):
        return self.temporal.shape[-2:]


@dataclass
class DerivativePlane:
    orders: tuple
    gamma: tuple
    values: np.ndarray


def build_spatial_scalespace(image, ladder: ScaleLadder, truncation_sigmas: float = DEFAULT_TRUNCATION) -> ScaleSpaceVolume:
    """Smoothed planes at every ladder level, built incrementally by the semi-group property."""
    img = as_image(image)
    if len(ladder) == 0:
        raise ParameterError("ladder must be non-empty")
    planes = []
    base, base_s = img, 0.0
    for s in ladder.levels:
        if s - base_s >= MIN_INCREMENT:
            plane = smooth_2d(base, s - base_s, truncation_sigmas)
            base, base_s = plane, s
        else:
            plane = smooth_2d(img, s, truncation_sigmas)
        planes.append(plane)
    return ScaleSpaceVolume(SPATIAL, ladder, planes, img, 1.0, truncation_sigmas)


def build_temporal_scalespace(signal: Signal1D, ladder: ScaleLadder, causal: bool = False,
                              c_dist: float = 2.0, eps_var: float = 1e-3,
                              truncation_sigmas: float = DEFAULT_TRUNCATION) -> ScaleSpaceVolume:
    """Temporal scale space of a signal; ``ladder`` is in seconds**2."""
    if not isinstance(signal, Signal1D):
        signal = Signal1D(signal)
    if len(ladder) == 0:
        raise ParameterError("ladder must be non-empty")
    dt = signal.sample_period
    data = signal.data
    if causal:
        cascades = [TimeCausalCascade.create(tau, dt, c_dist, eps_var) for tau in ladder.levels]
        planes = [causal_smooth_signal(data, c) for c in cascades]
        return ScaleSpaceVolume(TEMPORAL_CAUSAL, ladder, planes, data, dt, truncation_sigmas, cascades)
    planes = []
    base, base_s = data, 0.0
    for tau in ladder.levels / dt**2:
        if tau - base_s >= MIN_INCREMENT:
            plane = smooth_1d(base, tau - base_s, truncation_sigmas=truncation_sigmas)
            base, base_s = plane, tau
        else:
            plane = smooth_1d(data, tau, truncation_sigmas=truncation_sigmas)
        planes.append(plane)
    return ScaleSpaceVolume(TEMPORAL_NONCAUSAL, ladder, planes, data, dt, truncation_sigmas)


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def build_spatiotemporal_scalespace(stream: FrameStream, s_ladder: ScaleLadder, t_ladder: ScaleLadder,
                                    causal: bool = False, frames=None, c_dist: float = 2.0,
                                    eps_var: float = 1e-3,
                                    truncation_sigmas: float = DEFAULT_TRUNCATION) -> SpatioTemporalVolume:
    """Separable space-time scale space evaluated at ``frames`` (default: every frame).

    Non-causal mode convolves with Gaussian temporal derivative kernels around
    each requested frame; causal mode streams all frames through per-level
    cascades and keeps the outputs at the requested frames.
    """
    if not isinstance(stream, FrameStream):
        stream = FrameStream(stream)
    data = stream.frames
    n_t = data.shape[0]
    dt = stream.frame_period
    idx = np.arange(n_t) if frames is None else np.atleast_1d(np.asarray(frames, dtype=int))
    if np.any((idx < 0) | (idx >= n_t)):
        raise ParameterError("requested frame index outside the stream")
    out = np.empty((len(t_ladder), 3) + (idx.size,) + data.shape[1:])
    if causal:
        streamer = CausalSpatioTemporalStream(s_ladder, t_ladder, dt, c_dist, eps_var, truncation_sigmas)
        wanted = {int(f): j for j, f in enumerate(idx)}
        for f in range(int(idx.max()) + 1):
            vol = streamer.push(data[f])
            if f in wanted:
                out[:, :, wanted[f]] = vol.temporal[:, :, 0]
    else:
        for k, tau in enumerate(t_ladder.levels / dt**2):
            for n in range(3):
                kern = gaussian_derivative_kernel(tau, n, truncation_sigmas) / dt**n
                r = (kern.size - 1) // 2
                u = np.arange(-r, r + 1)
                for j, f in enumerate(idx):
                    src = _reflect_index(f - u, n_t)
                    out[k, n, j] = np.tensordot(kern, data[src], axes=(0, 0))
    return SpatioTemporalVolume(s_ladder, t_ladder, out, idx, dt, causal, truncation_sigmas)


class CausalSpatioTemporalStream:
    """Time-recursive spatio-temporal scale space: one frame in, one (x, y, s, tau) block out.

    Keeps only the cascade states and the two previous outputs per temporal
    level, which is all the backward temporal differences need.
    """

    def __init__(self, s_ladder: ScaleLadder, t_ladder: ScaleLadder, frame_period: float = 1.0,
                 c_dist: float = 2.0, eps_var: float = 1e-3, truncation_sigmas: float = DEFAULT_TRUNCATION):
        self.s_ladder = s_ladder
        self.t_ladder = t_ladder
        self.dt = frame_period
        self.truncation = truncation_sigmas
        self.cascades = [TimeCausalCascade.create(tau, frame_period, c_dist, eps_var) for tau in t_ladder.levels]
        self._history = [[] for _ in self.cascades]
        self.frame_index = -1

    def step(self, values, orders=(0, 1, 2)) -> np.ndarray:
        """Advance one time step with an array of any shape; returns (n_tau, len(orders), *shape).

        Spatial filtering commutes with the temporal recursion, so ``values``
        may be a frame or a stack of spatial derivative responses of it.
        """
        _check_orders(orders)
        values = np.asarray(values, dtype=float)
        self.frame_index += 1
        dt = self.dt
        block = np.empty((len(self.cascades), len(orders)) + values.shape)
        for k, cascade in enumerate(self.cascades):
            L = cascade_step(cascade, values)
            hist = self._history[k]
            prev1 = hist[-1] if hist else L
            prev2 = hist[-2] if len(hist) > 1 else prev1
            for j, n in enumerate(orders):
                if n == 0:
                    block[k, j] = L
                elif n == 1:
                    np.subtract(L, prev1, out=block[k, j])
                    block[k, j] /= dt
                else:
                    np.subtract(L, 2 * prev1, out=block[k, j])
                    block[k, j] += prev2
                    block[k, j] /= dt**2
            hist.append(L)
            if len(hist) > 2:
                hist.pop(0)
        return block

    def push(self, frame) -> SpatioTemporalVolume:
        block = self.step(as_image(frame))[:, :, None]
        return SpatioTemporalVolume(self.s_ladder, self.t_ladder, block, np.array([self.frame_index]),
                                    self.dt, True, self.truncation)


class TemporalDerivativeWindow:
    """Non-causal Gaussian temporal derivatives of a lazily produced sequence, one output time at a time.

    ``source(i)`` returns the array for input frame ``i`` (a frame or any
    spatial filtering of it). Inputs live in a ring buffer just wide enough
    for the widest kernel, so each one is produced once when outputs are
    requested in time order. Borders are reflected like the per-frame path.
    """

    def __init__(self, source, n_frames: int, t_ladder: ScaleLadder, frame_period: float = 1.0,
                 orders=(0, 1, 2), truncation_sigmas: float = DEFAULT_TRUNCATION):
        self.source = source
        self.n_frames = int(n_frames)
        _check_orders(orders)
        self.orders = tuple(orders)
        dt = float(frame_period)
        self.kernels = [gaussian_derivative_kernel(tau, n, truncation_sigmas) / dt**n
                        for tau in t_ladder.levels / dt**2 for n in self.orders]
        r_max = max((k.size - 1) // 2 for k in self.kernels)
        self.size = min(self.n_frames, 2 * r_max + 1)
        self._buffer = None
        self._held = np.full(self.size, -1)

    @staticmethod
    def buffer_bytes(n_frames, t_ladder, frame_period, item_shape, truncation_sigmas=DEFAULT_TRUNCATION):
        r_max = kernel_radius(float(t_ladder.levels[-1]) / frame_period**2, truncation_sigmas)
        return min(n_frames, 2 * r_max + 1) * int(np.prod(item_shape)) * 8

    def _load(self, i):
        slot = i % self.size
        if self._held[slot] != i:
            item = np.asarray(self.source(i), dtype=float)
            if self._buffer is None:
                self._buffer = np.empty((self.size,) + item.shape)
            self._buffer[slot] = item
            self._held[slot] = i
        return slot

    def at(self, f: int) -> np.ndarray:
        """Outputs at frame ``f``: shape (n_tau, len(orders), *item_shape)."""
        if not 0 <= f < self.n_frames:
            raise ParameterError("requested frame index outside the stream")
        weights = np.zeros((len(self.kernels), self.size))
        for row, kern in enumerate(self.kernels):
            r = (kern.size - 1) // 2
            src = _reflect_index(f - np.arange(-r, r + 1), self.n_frames)
            slots = np.array([self._load(int(i)) for i in src])
            np.add.at(weights[row], slots, kern)
        item_shape = self._buffer.shape[1:]
        out = weights @ self._buffer.reshape(self.size, -1)
        return out.reshape((-1, len(self.orders)) + item_shape)


# ----------------------------------------------------------------------------
# derivatives

def _check_orders(orders):
    if any(o < 0 or o > 2 for o in orders):
        raise UnsupportedError(f"derivative orders {tuple(orders)} exceed the supported maximum of 2")


def derivative_plane(volume, level, orders, gamma_s: float = 1.0, gamma_t: float = 1.0) -> DerivativePlane:
    """Scale-normalized derivative ``s**((m1+m2)*gamma_s/2) * tau**(n*gamma_t/2) * L_{x^m1 y^m2 t^n}``.

    ``level`` is an int for spatial/temporal volumes and ``(s_level, t_level)``
    for spatio-temporal ones. For spatial volumes ``orders = (m1, m2)``; for
    temporal volumes ``orders = (n,)``; for spatio-temporal ``(m1, m2, n)``.
    """
    orders = tuple(int(o) for o in orders)
    _check_orders(orders)
    if isinstance(volume, SpatioTemporalVolume):
        if len(orders) != 3:
            raise ParameterError("spatio-temporal derivatives need orders (m1, m2, n)")
        s_level, t_level = level
        volume.check_levels(s_level, t_level)
        m1, m2, n = orders
        s = volume.s_ladder[s_level]
        tau = volume.t_ladder[t_level]
        base = volume.temporal[t_level, n]
        vals = gaussian_derivative(base, s, {-1: m1, -2: m2}, volume.truncation)
        if vals.shape[0] == 1:
            vals = vals[0]
        vals = vals * s ** ((m1 + m2) * gamma_s / 2) * tau ** (n * gamma_t / 2)
        return DerivativePlane(orders, (gamma_s, gamma_t), vals)

    volume.check_level(level)
    if volume.kind == SPATIAL:
        if len(orders) != 2:
            raise ParameterError("spatial derivatives need orders (m1, m2)")
        m1, m2 = orders
        s = volume.ladder[level]
        if m1 == 0 and m2 == 0:
            vals = volume.planes[level].copy()
        else:
            vals = gaussian_derivative(volume.source, s, {-1: m1, -2: m2}, volume.truncation)
        vals = vals * s ** ((m1 + m2) * gamma_s / 2)
        return DerivativePlane(orders, (gamma_s,), vals)

    if volume.is_temporal:
        if len(orders) not in (1, 3):
            raise ParameterError("temporal derivatives need orders (n,)")
        n = orders[-1]
        if len(orders) == 3 and (orders[0] or orders[1]):
            raise KindError("temporal volumes have no spatial derivatives")
        tau = volume.ladder[level]
        dt = volume.sample_period
        if n == 0:
            vals = volume.planes[level].copy()
        elif volume.kind == TEMPORAL_CAUSAL:
            vals = backward_difference(volume.planes[level], n, dt)
        else:
            vals = gaussian_derivative(volume.source, tau / dt**2, {-1: n}, volume.truncation) / dt**n
        vals = vals * tau ** (n * gamma_t / 2)
        return DerivativePlane((n,), (gamma_t,), vals)

    raise KindError(f"unknown volume kind {volume.kind!r}")
