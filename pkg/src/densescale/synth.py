"""Analytic test patterns and closed-form predictions of their scale estimates."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erf

from .errors import ParameterError
from .scalespace import FrameStream, Signal1D

KINDS = ("sine2d", "chirp", "gaussian-blob", "gaussian-blink", "st-sine", "diffuse-edge", "onset-ramp")
PIPELINES = ("raw", "compensated", "post", "post-compensated", "calibrated")


@dataclass(frozen=True)
class SyntheticSpec:
    """Pattern description.

    ``dims`` is (H, W) for images, (n,) for signals and (T, H, W) for video.
    Unused parameters are ignored. Coordinates are pixel/sample indices; the
    image x axis runs along columns.
    """

    kind: str
    dims: tuple
    amplitude: float = 1.0
    omega: float | None = None
    omega_t: float | None = None
    s0: float | None = None
    tau0: float | None = None
    a: float | None = None
    b: float | None = None
    center: tuple | None = None
    origin: tuple = (0.0, 0.0, 0.0)
    sample_period: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown pattern kind {self.kind!r}; expected one of {KINDS}")
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        object.__setattr__(self, "dims", dims)
        if any(d < 1 for d in dims):
            raise ParameterError("dims must be positive")
        need = {"sine2d": ("omega",), "chirp": ("a", "b"), "gaussian-blob": ("s0",),
                "gaussian-blink": ("s0", "tau0"), "st-sine": ("omega", "omega_t"),
                "diffuse-edge": ("s0",), "onset-ramp": ("tau0",)}[self.kind]
        for name in need:
            v = getattr(self, name)
            if v is None or not v > 0:
                raise ParameterError(f"{self.kind} needs a positive {name}")
        ndim = {"sine2d": 2, "gaussian-blob": 2, "diffuse-edge": 2, "chirp": 1, "onset-ramp": 1,
                "gaussian-blink": 3, "st-sine": 3}[self.kind]
        if len(dims) != ndim:
            raise ParameterError(f"{self.kind} needs {ndim}-D dims, got {dims}")
        if not self.sample_period > 0:
            raise ParameterError("sample_period must be positive")

    @property
    def centre(self):
        if self.center is not None:
            return tuple(float(c) for c in self.center)
        return tuple((d - 1) / 2.0 for d in self.dims)


def _gauss(u, var):
    return np.exp(-(u**2) / (2 * var)) / np.sqrt(2 * pi * var)


def _check_support(extent, centre, var, label):
    r = 4 * sqrt(var)
    for n, c in zip(extent, centre):
        if c - r < 0 or c + r > n - 1:
            raise ParameterError(f"{label}: dims {tuple(extent)} too small for 4 sigma support around {centre}")


def generate(spec: SyntheticSpec):
    """Sample the pattern on its grid: ndarray image, Signal1D or FrameStream."""
    A = spec.amplitude
    k = spec.kind
    if k == "sine2d":
        h, w = spec.dims
        x0, y0 = spec.origin[:2]
        y, x = np.mgrid[0:h, 0:w].astype(float)
        return A * (np.sin(spec.omega * (x - x0)) + np.sin(spec.omega * (y - y0)))
    if k == "gaussian-blob":
        cy, cx = spec.centre
        _check_support(spec.dims, (cy, cx), spec.s0, k)
        h, w = spec.dims
        y, x = np.mgrid[0:h, 0:w].astype(float)
        return A * _gauss(x - cx, spec.s0) * _gauss(y - cy, spec.s0)
    if k == "diffuse-edge":
        h, w = spec.dims
        cx = spec.centre[1]
        _check_support((w,), (cx,), spec.s0, k)
        x = np.arange(w, dtype=float)
        row = 0.5 * (1 + erf((x - cx) / sqrt(2 * spec.s0)))
        return A * np.tile(row, (h, 1))
    if k == "chirp":
        t = np.arange(spec.dims[0]) * spec.sample_period
        return Signal1D(A * np.sin(np.exp((spec.b - t) / spec.a)), spec.sample_period)
    if k == "onset-ramp":
        dt = spec.sample_period
        c = spec.centre[0]
        _check_support(spec.dims, (c,), spec.tau0 / dt**2, k)
        t = (np.arange(spec.dims[0]) - c) * dt
        return Signal1D(A * 0.5 * (1 + erf(t / sqrt(2 * spec.tau0))), dt)
    frame_rate = 1.0 / spec.sample_period
    T, h, w = spec.dims
    t = np.arange(T, dtype=float) * spec.sample_period
    y, x = np.mgrid[0:h, 0:w].astype(float)
    if k == "st-sine":
        x0, y0, t0 = (tuple(spec.origin) + (0.0, 0.0, 0.0))[:3]
        spatial = np.sin(spec.omega * (x - x0)) + np.sin(spec.omega * (y - y0))
        temporal = np.sin(spec.omega_t * (t - t0))
        return FrameStream(A * temporal[:, None, None] * spatial[None], frame_rate)
    # gaussian-blink
    ct, cy, cx = spec.centre
    _check_support((h, w), (cy, cx), spec.s0, k)
    _check_support((T,), (ct,), spec.tau0 / spec.sample_period**2, k)
    spatial = _gauss(x - cx, spec.s0) * _gauss(y - cy, spec.s0)
    temporal = _gauss(t - ct * spec.sample_period, spec.tau0)
    return FrameStream(A * temporal[:, None, None] * spatial[None], frame_rate)


# ----------------------------------------------------------------------------
# oracles

@dataclass(frozen=True)
class OraclePrediction:
    available: bool
    s_hat: object = None
    tau_hat: object = None
    w1: object = None
    note: str = ""


NOT_AVAILABLE = OraclePrediction(False, note="no closed form for this pattern and pipeline")


def sine_raw_scale(a, b, gamma_cap, c_weight, omega=1.0):
    """Unsmoothed scale estimate of the sine measure where the first-order energy is ``a``
    and the second-order energy ``b`` (a = cos**2 terms, b = sin**2 terms).

    Returns (s_hat, w1). Solves C b u**2 + (a - (2 - G) C b) u - (1 - G) a = 0 for u = omega**2 s.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    G, C = gamma_cap, c_weight
    qa = C * b
    qb = a - (2 - G) * C * b
    qc = -(1 - G) * a
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = np.sqrt(qb**2 - 4 * qa * qc)
        # stable positive root
        u = np.where(qa > 0, np.where(qb > 0, -2 * qc / (qb + disc), (-qb + disc) / (2 * qa)), -qc / qb)
        w1 = a / (a + C * u * b)
    return u / omega**2, w1


def sine_post_scale(cos_sum, gamma_cap, c_weight, c_post, omega=1.0):
    """Largest maximum over scale of the post-smoothed sine measure.

    ``cos_sum`` is cos(2 omega x) + cos(2 omega y) at the point (cos(2 omega x) for
    a 1-D sine, with the per-axis energies halved accordingly). Returns (s_hat, w1).
    """
    G, C, c2 = gamma_cap, c_weight, c_post**2
    cs = np.atleast_1d(np.asarray(cos_sum, dtype=float))
    out_s = np.empty_like(cs)
    out_w = np.empty_like(cs)
    grid = np.geomspace(1e-2, 20, 400)

    def logq(u, k):
        e = np.exp(-2 * c2 * u) * k / 2
        a, b = 1 + e, 1 - e
        return -G * np.log(u) - u + np.log(u * a + C * u**2 * b)

    for i, k in enumerate(cs.ravel()):
        v = logq(grid, k)
        j = int(np.argmax(v))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        res = minimize_scalar(lambda u: -logq(u, k), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        u = res.x
        e = np.exp(-2 * c2 * u) * k / 2
        out_s.flat[i] = u / omega**2
        out_w.flat[i] = (1 + e) / ((1 + e) + C * u * (1 - e))
    return out_s.reshape(np.shape(cos_sum)), out_w.reshape(np.shape(cos_sum))


def compensate_geometric(s_hat, w1, lower, upper):
    """Blend correction taking boundary estimates ``lower``/``upper`` to their geometric mean."""
    w1 = np.asarray(w1, dtype=float)
    return np.sqrt(lower * upper) * s_hat / (lower**w1 * upper ** (1 - w1))


def oracle_predict(spec: SyntheticSpec, params, pipeline: str = "raw", solution=None) -> OraclePrediction:
    """Closed-form (or 1-D numeric) predictions for the scale estimates of a pattern.

    ``params`` is a QuadratureParams; ``solution`` a CalibrationSolution for the
    post-smoothed pipelines (solved on demand when omitted).
    """
    from . import calibration

    if pipeline not in PIPELINES:
        return NOT_AVAILABLE
    Gs, Gt = params.gamma_cap_s, params.gamma_cap_t
    k = spec.kind
    if k == "sine2d":
        w = spec.omega
        h, wd = spec.dims
        x0, y0 = spec.origin[:2]
        y, x = np.mgrid[0:h, 0:wd].astype(float)
        px, py = w * (x - x0), w * (y - y0)
        if pipeline in ("raw", "compensated"):
            s, w1 = sine_raw_scale(np.cos(px) ** 2 + np.cos(py) ** 2, np.sin(px) ** 2 + np.sin(py) ** 2,
                                   Gs, params.c_s, w)
            if pipeline == "compensated":
                s = compensate_geometric(s, w1, (1 - Gs) / w**2, (2 - Gs) / w**2)
            return OraclePrediction(True, s, None, w1)
        if pipeline in ("post", "post-compensated"):
            if params.c_post == 0:
                return NOT_AVAILABLE
            sol = solution or calibration.solve(Gs, params.c_post, params.c_s)
            s, w1 = sine_post_scale(np.cos(2 * px) + np.cos(2 * py), Gs, params.c_s, params.c_post, w)
            if pipeline == "post-compensated":
                s = compensate_geometric(s, w1, sol.s_sine_1 / w**2, sol.s_sine_2 / w**2)
            return OraclePrediction(True, s, None, w1)
        return NOT_AVAILABLE
    if k == "gaussian-blob":
        if pipeline == "calibrated":
            return OraclePrediction(True, spec.s0, note="blob centre")
        c = params.c_post if pipeline.startswith("post") else 0.0
        sol = solution or calibration.solve(Gs, c, params.c_s)
        s = sol.s_gauss * spec.s0
        if pipeline.endswith("compensated"):
            s *= sqrt(sol.s_sine_1 / sol.s_sine_2)
        return OraclePrediction(True, s, None, 0.0, "blob centre")
    if k == "gaussian-blink":
        s_raw = (2 - Gs) / (2 + Gs) * spec.s0
        t_raw = (2 - Gt) / (1 + Gt) * spec.tau0
        if pipeline == "raw":
            return OraclePrediction(True, s_raw, t_raw, 0.0, "blink centre")
        if pipeline == "compensated":
            return OraclePrediction(True, s_raw * sqrt((1 - Gs) / (2 - Gs)), t_raw * sqrt((1 - Gt) / (2 - Gt)),
                                    0.0, "blink centre")
        if pipeline == "calibrated":
            return OraclePrediction(True, spec.s0, spec.tau0, 0.0, "blink centre")
        return NOT_AVAILABLE
    if k == "diffuse-edge":
        if Gs == 0:
            return OraclePrediction(False, note="estimate unbounded for Gamma = 0")
        if pipeline == "raw":
            return OraclePrediction(True, (1 - Gs) / Gs * spec.s0, None, 1.0, "edge centre")
        if pipeline == "calibrated":
            return OraclePrediction(True, (2 + Gs) / Gs * spec.s0, None, 1.0, "edge centre")
        return NOT_AVAILABLE
    if k == "onset-ramp":
        if Gt == 0:
            return OraclePrediction(False, note="estimate unbounded for Gamma = 0")
        if pipeline == "raw":
            return OraclePrediction(True, None, (1 - Gt) / Gt * spec.tau0, 1.0, "ramp centre")
        if pipeline == "calibrated":
            return OraclePrediction(True, None, (1 + Gt) / Gt * spec.tau0, 1.0, "ramp centre")
        return NOT_AVAILABLE
    if k == "st-sine":
        ws, wt = spec.omega, spec.omega_t
        if pipeline == "compensated":
            return OraclePrediction(True, sqrt((1 - Gs) * (2 - Gs)) / ws**2, sqrt((1 - Gt) * (2 - Gt)) / wt**2)
        if pipeline == "raw":
            return OraclePrediction(True, ((1 - Gs) / ws**2, (2 - Gs) / ws**2),
                                    ((1 - Gt) / wt**2, (2 - Gt) / wt**2),
                                    note="(first-order, second-order) boundary values")
        return NOT_AVAILABLE
    if k == "chirp":
        if pipeline == "compensated":
            t = np.arange(spec.dims[0]) * spec.sample_period
            omega_t = np.exp((spec.b - t) / spec.a) / spec.a
            return OraclePrediction(True, None, sqrt((1 - Gt) * (2 - Gt)) / omega_t**2,
                                    note="instantaneous frequency")
        return NOT_AVAILABLE
    return NOT_AVAILABLE
