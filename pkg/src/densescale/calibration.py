"""Calibration factors for post-smoothed quasi quadrature scale estimates.

All quantities are relative: sine bounds are given for angular frequency 1
(scale ``S / omega**2`` in general) and the Gaussian factor for a blob of
variance 1 (scale ``S_Gauss * s0`` in general).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import lru_cache
from math import sqrt

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from .errors import NoRootError, ParameterError, StateError

BRACKET = (1e-4, 1e2)
SCAN_POINTS = 4000
MAX_ITER = 200
MERGE_TOL = 1e-3
GAUSSIAN = "gaussian"
SINE = "sine-wave"


@dataclass(frozen=True)
class CalibrationSolution:
    gamma_cap: float
    c_post: float
    c_weight: float
    s_sine_1: float
    s_sine_2: float
    s_gauss: float
    merged: bool = False
    dims: int = 2

    @property
    def chi(self) -> float:
        return sqrt(2 * self.s_gauss / self.s_sine_2)

    def matches(self, gamma_cap, c_post, c_weight=None, tol=1e-9) -> bool:
        ok = abs(self.gamma_cap - gamma_cap) <= tol and abs(self.c_post - c_post) <= tol
        if c_weight is not None:
            ok = ok and abs(self.c_weight - c_weight) <= tol
        return ok


@dataclass(frozen=True)
class CalibrationModel:
    kind: str = GAUSSIAN

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, SINE):
            raise ParameterError(f"calibration kind must be {GAUSSIAN!r} or {SINE!r}, got {self.kind!r}")


def _validate(gamma_cap, c_post, c_weight):
    if not 0 <= gamma_cap < 1:
        raise ParameterError(f"Gamma must lie in [0, 1), got {gamma_cap}")
    if not c_post >= 0:
        raise ParameterError(f"c must be >= 0, got {c_post}")
    if not c_weight > 0:
        raise ParameterError(f"C must be > 0, got {c_weight}")


# The equations below are the stationarity conditions d/ds of the post-smoothed
# measure of sin(x) at the phases where only the first-order component
# (sine_equation_1) or only the second-order one (sine_equation_2) survives,
# multiplied through by exp(-2 c**2 s) so that nothing overflows on the
# search bracket.

def sine_equation_1(s, gamma_cap, c_post, c_weight):
    s = np.asarray(s, dtype=float)
    G, C, c2 = gamma_cap, c_weight, c_post**2
    e = np.exp(-2 * c2 * s)
    poly = C * (2 * c2 + 1) * s**2 - s * (2 * C + 2 * c2 + 1) + G * (C * s - 1) + 1
    return e * poly - (C * s**2 - 2 * C * s + C * s * G + s - 1 + G)


def sine_equation_2(s, gamma_cap, c_post, c_weight):
    s = np.asarray(s, dtype=float)
    G, C, c2 = gamma_cap, c_weight, c_post**2
    e = np.exp(-2 * c2 * s)
    poly = -2 * C * c2 * s**2 - C * s**2 + 2 * C * s - C * s * G + 2 * c2 * s + s - 1 + G
    return e * poly - (C * s**2 - 2 * C * s + C * s * G + s - 1 + G)


def gauss_equation(s, gamma_cap, c_post, c_weight):
    """Stationarity condition over scale at the centre of a unit-variance blob (quartic in s)."""
    s = np.asarray(s, dtype=float)
    G, C, c = gamma_cap, c_weight, c_post
    return (4 * c**6 * s**2 * ((2 * C + 1) * s**2 * (2 + G) + 2 * s * (C * (G - 1) + 1 + G) + G)
            + 4 * c**4 * s * (s + 1) * ((2 * C + 1) * s**2 * (2 + G) + s * (2 * C * (G - 2) + 1 + 2 * G) + (G - 1))
            + c**2 * (s + 1) ** 2 * ((4 * C + 1) * s**2 * (2 + G) + 2 * s * (2 * C * (G - 1) + G) + (G - 2))
            + C * (s + 1) ** 3 * (s * (2 + G) + (G - 2)))


def _all_roots(func, args, name):
    grid = np.geomspace(*BRACKET, SCAN_POINTS)
    vals = func(grid, *args)
    roots = []
    for i in np.nonzero(vals == 0)[0]:
        roots.append(float(grid[i]))
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        f = lambda x: float(func(x, *args))
        roots.append(bisect(f, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER))
    if not roots:
        raise NoRootError(f"{name}: no sign change on [{BRACKET[0]}, {BRACKET[1]}] for Gamma, c, C = {args}")
    return sorted(roots)


def solve_sine_bounds(gamma_cap: float, c_post: float, c_weight: float):
    """Relative scale estimates (S_sine,1, S_sine,2) at the pure first- and second-order phases."""
    _validate(gamma_cap, c_post, c_weight)
    if c_post == 0:
        return 1.0 - gamma_cap, 2.0 - gamma_cap
    args = (gamma_cap, c_post, c_weight)
    s1 = _all_roots(sine_equation_1, args, "S_sine,1")[0]
    s2 = _all_roots(sine_equation_2, args, "S_sine,2")[-1]
    return s1, s2


def solve_gauss(gamma_cap: float, c_post: float, c_weight: float) -> float:
    """Relative scale estimate at the centre of a Gaussian blob with s0 = 1."""
    _validate(gamma_cap, c_post, c_weight)
    if c_post == 0:
        return (2.0 - gamma_cap) / (2.0 + gamma_cap)
    return _all_roots(gauss_equation, (gamma_cap, c_post, c_weight), "S_Gauss")[0]


def calibration_ratio(solution: CalibrationSolution) -> float:
    return solution.chi


def centre_components(s, s0, gamma_cap, c_post, c_weight, dims=2):
    """Post-smoothed (first, second) order components at the centre of a Gaussian of variance ``s0``.

    Closed form: the squared derivatives of g(.; s0 + s) are Gaussian
    moments against the post-smoothing kernel of variance c**2 s.
    ``dims`` is 2 for a blob and 1 for a temporal pulse.
    """
    s = np.asarray(s, dtype=float)
    S = s0 + s
    v = c_post**2 * s
    if dims == 2:
        if c_post == 0:
            V = np.zeros_like(s)
            i0 = 1.0 / (2 * np.pi * S) ** 2
        else:
            V = 1.0 / (2.0 / S + 1.0 / v)
            i0 = V / ((2 * np.pi * S) ** 2 * v)
        e1 = 2 * V / S**2
        e2 = 8 * V**2 / S**4 - 4 * V / S**3 + 2 / S**2
    elif dims == 1:
        if c_post == 0:
            V = np.zeros_like(s)
            i0 = 1.0 / (2 * np.pi * S)
        else:
            V = 1.0 / (2.0 / S + 1.0 / v)
            i0 = np.sqrt(V / v) / (2 * np.pi * S)
        e1 = V / S**2
        e2 = 3 * V**2 / S**4 - 2 * V / S**3 + 1 / S**2
    else:
        raise ParameterError("dims must be 1 or 2")
    comp1 = s ** (1 - gamma_cap) * i0 * e1
    comp2 = c_weight * s ** (2 - gamma_cap) * i0 * e2
    return comp1, comp2


def solve_gauss_numeric(gamma_cap, c_post, c_weight, dims=2) -> float:
    """Maximize the closed-form centre response over scale (s0 = 1)."""
    _validate(gamma_cap, c_post, c_weight)

    def neg(logs):
        c1, c2 = centre_components(np.exp(logs), 1.0, gamma_cap, c_post, c_weight, dims)
        return -np.log(c1 + c2)

    grid = np.linspace(np.log(BRACKET[0]), np.log(BRACKET[1]), 2000)
    vals = np.array([neg(g) for g in grid])
    j = int(np.argmin(vals))
    if j in (0, grid.size - 1):
        raise NoRootError(f"S_Gauss: maximum at the search boundary for Gamma, c, C = {(gamma_cap, c_post, c_weight)}")
    res = minimize_scalar(neg, bounds=(grid[j - 1], grid[j + 1]), method="bounded", options={"xatol": 1e-13})
    return float(np.exp(res.x))


@lru_cache(maxsize=4096)
def _solve_cached(gamma_cap, c_post, c_weight, dims):
    s1, s2 = solve_sine_bounds(gamma_cap, c_post, c_weight)
    if dims == 2:
        sg = solve_gauss(gamma_cap, c_post, c_weight)
    elif c_post == 0:
        sg = (2.0 - gamma_cap) / (1.0 + gamma_cap)
    else:
        sg = solve_gauss_numeric(gamma_cap, c_post, c_weight, dims=1)
    return CalibrationSolution(gamma_cap, c_post, c_weight, s1, s2, sg, abs(s1 - s2) < MERGE_TOL, dims)


def solve(gamma_cap: float, c_post: float, c_weight: float | None = None, dims: int = 2) -> CalibrationSolution:
    """All calibration quantities for (Gamma, c, C); C defaults to ``1 / (2 - Gamma)``.

    ``dims = 1`` gives the Gaussian factor for a temporal pulse instead of a blob.
    """
    if c_weight is None:
        c_weight = 1.0 / (2.0 - gamma_cap)
    if dims not in (1, 2):
        raise ParameterError("dims must be 1 or 2")
    key = tuple(round(float(v), 12) for v in (gamma_cap, c_post, c_weight))
    return _solve_cached(*key, dims)


def residuals(solution: CalibrationSolution):
    """Equation values at the solved roots (zero for the analytic c = 0 case)."""
    args = (solution.gamma_cap, solution.c_post, solution.c_weight)
    if solution.c_post == 0:
        return 0.0, 0.0, 0.0
    return (float(sine_equation_1(solution.s_sine_1, *args)),
            float(sine_equation_2(solution.s_sine_2, *args)),
            float(gauss_equation(solution.s_gauss, *args)))


# ----------------------------------------------------------------------------
# applying calibration

def gaussian_factor(solution: CalibrationSolution, compensated: bool) -> float:
    """Factor mapping a Gaussian of variance s0 to the estimate s0.

    For compensated estimates the blend applied at the centre is undone
    too; its weight comes from the centre components at the selected scale
    (pure second order without post-smoothing).
    """
    if not compensated:
        return 1.0 / solution.s_gauss
    s1, s2 = solution.s_sine_1, solution.s_sine_2
    c1, c2 = centre_components(solution.s_gauss, 1.0, solution.gamma_cap, solution.c_post,
                               solution.c_weight, solution.dims)
    w1 = float(c1 / (c1 + c2))
    blend = sqrt(s1 * s2) / (s1**w1 * s2 ** (1 - w1))
    return 1.0 / (blend * solution.s_gauss)


def sine_factor(solution: CalibrationSolution) -> float:
    return sqrt(2.0) / sqrt(solution.s_sine_1 * solution.s_sine_2)


def calibration_factor(model: CalibrationModel, solution: CalibrationSolution, compensated: bool = True) -> float:
    if model.kind == GAUSSIAN:
        return gaussian_factor(solution, compensated)
    return sine_factor(solution)


def apply_calibration(estimate, model: CalibrationModel, solution: CalibrationSolution):
    """Scale an estimate (anything with ``s_hat``, ``compensated``, ``calibrated``) by the model factor."""
    if estimate.calibrated:
        raise StateError("estimate is already calibrated")
    factor = calibration_factor(model, solution, estimate.compensated)
    return replace(estimate, s_hat=estimate.s_hat * factor, calibrated=True)


def st_spatial_factor(gamma_cap_s: float) -> float:
    g = gamma_cap_s
    return (2 + g) / sqrt((2 - g) * (1 - g))


def st_temporal_factor(gamma_cap_t: float) -> float:
    g = gamma_cap_t
    return (1 + g) / sqrt((2 - g) * (1 - g))


def st_calibrate(estimate, params):
    """Calibrate a phase-compensated joint estimate so a Gaussian blink maps to (s0, tau0)."""
    if estimate.calibrated:
        raise StateError("estimate is already calibrated")
    if not estimate.compensated:
        raise StateError("joint calibration expects a phase-compensated estimate")
    return replace(estimate,
                   s_hat=estimate.s_hat * st_spatial_factor(params.gamma_cap_s),
                   tau_hat=estimate.tau_hat * st_temporal_factor(params.gamma_cap_t),
                   calibrated=True)


# ----------------------------------------------------------------------------
# tables

TABLE_COLUMNS = ("gamma", "c", "C", "S_sine_1", "S_sine_2", "S_gauss", "chi", "merged")


def table_rows(gammas, cs, weight="geometric"):
    rows = []
    for g in gammas:
        for c in cs:
            C = 1.0 / (2.0 - g) if weight == "geometric" else 1.0 / sqrt((1 - g) * (2 - g))
            rows.append(solve(g, c, C))
    return rows


def format_tables(gammas, cs, weight="geometric") -> str:
    """Aligned text rendering of the three tables (one row per c, one column per Gamma)."""
    sols = {(s.gamma_cap, s.c_post): s for s in table_rows(gammas, cs, weight)}
    blocks = []
    for title, attr in (("S_sine,1", "s_sine_1"), ("S_sine,2", "s_sine_2"),
                        ("S_Gauss", "s_gauss"), ("chi", "chi")):
        header = f"{'c':>8} " + " ".join(f"{'G=' + format(g, 'g'):>9}" for g in gammas)
        lines = [title, header]
        for c in cs:
            vals = " ".join(f"{getattr(sols[(round(g, 12), round(c, 12))], attr):9.3f}" for g in gammas)
            lines.append(f"{c:8.4f} {vals}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def tables_csv(gammas, cs, weight="geometric") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for s in table_rows(gammas, cs, weight):
        w.writerow([repr(s.gamma_cap), repr(s.c_post), repr(s.c_weight), repr(s.s_sine_1),
                    repr(s.s_sine_2), repr(s.s_gauss), repr(s.chi), int(s.merged)])
    return buf.getvalue()
