import numpy as np
import pytest

from densescale.calibration import solve
from densescale.errors import KindError, ParameterError, StateError, UnsupportedError
from densescale.quadrature import QuadratureParams
from densescale.scalespace import (
    FrameStream,
    ScaleLadder,
    Signal1D,
    build_spatial_scalespace,
    build_spatiotemporal_scalespace,
)
from densescale.selection import (
    FLAG_BORDER,
    FLAG_TIE,
    JointScaleEstimate,
    ScaleEstimate,
    ScaleSignature,
    detect_extrema,
    effective_scale,
    frequency_estimate,
    max_response_map,
    phase_compensate_geometric,
    phase_compensate_linear,
    phase_compensate_postsmoothed,
    select_dense,
    select_joint_st,
    selection_surfaces,
    st_phase_compensate,
    temporal_phase_compensate,
    wavelength_estimate,
)

LADDER5 = ScaleLadder(2.0 ** np.arange(5))


def test_effective_scale():
    assert effective_scale(7.875) == pytest.approx(3.0)


def test_monotone_signature_has_no_extrema():
    assert detect_extrema(ScaleSignature(np.arange(1.0, 6.0), None, LADDER5)) == []


def test_signature_needs_three_levels():
    with pytest.raises(ParameterError):
        detect_extrema(ScaleSignature([1.0, 2.0], None, ScaleLadder(np.array([1.0, 2.0]))))


def test_signature_length_checked():
    with pytest.raises(ParameterError):
        ScaleSignature([1.0, 2.0, 3.0], None, LADDER5)


def test_symmetric_peak_is_exact():
    est = detect_extrema(ScaleSignature([1, 2, 3, 2, 1.0], None, LADDER5))
    assert len(est) == 1
    assert est[0].s_hat == pytest.approx(4.0)
    assert est[0].magnitude == pytest.approx(3.0)
    assert not est[0].tie


def test_parabolic_refinement_in_log_scale():
    # samples of -(log2 s - 2.3)**2 are exact for a parabola in log scale
    v = -((np.arange(5) - 2.3) ** 2) + 10
    est = detect_extrema(ScaleSignature(v, None, LADDER5))[0]
    assert np.log2(est.s_hat) == pytest.approx(2.3, abs=1e-12)
    assert est.magnitude == pytest.approx(10.0)


def test_plateau_goes_to_coarser_level_and_is_flagged():
    est = detect_extrema(ScaleSignature([1, 3, 3, 2, 1.0], None, LADDER5))
    assert len(est) == 1
    assert est[0].tie
    assert 2.0 <= est[0].s_hat <= 4.0 * 2**0.5


def test_two_maxima_sorted_by_magnitude():
    est = detect_extrema(ScaleSignature([0, 2, 0, 3, 0.0], None, LADDER5))
    assert est[0].magnitude >= est[1].magnitude
    assert est[0].s_hat > est[1].s_hat


def test_endpoint_peak_not_reported():
    assert detect_extrema(ScaleSignature([5, 4, 3, 2, 1.0], None, LADDER5)) == []


def test_ratio_interpolation():
    w = np.array([0.0, 0.2, 0.4, 0.6, 0.8])
    v = -((np.arange(5) - 2.25) ** 2) + 10
    est = detect_extrema(ScaleSignature(v, w, LADDER5))[0]
    assert est.w1 == pytest.approx(0.45)
    assert est.w1 + est.w2 == pytest.approx(1.0)


# ----------------------------------------------------------------------------
# compensation

@pytest.mark.parametrize("gamma", [0.0, 0.25, 0.5])
@pytest.mark.parametrize("fn", [phase_compensate_geometric, phase_compensate_linear])
def test_compensation_boundaries(gamma, fn):
    gm = np.sqrt((1 - gamma) * (2 - gamma))
    for w1, s in ((1.0, 1 - gamma), (0.0, 2 - gamma)):
        out = fn(ScaleEstimate(s, 1.0, w1), gamma)
        assert out.s_hat == pytest.approx(gm, rel=1e-14)
        assert out.compensated


def test_geometric_fixed_point():
    g = 0.25
    gm = np.sqrt(0.75 * 1.75)
    assert phase_compensate_geometric(ScaleEstimate(gm, 1, 0.5), g).s_hat == pytest.approx(gm)


def test_geometric_monotone_in_w1():
    vals = [phase_compensate_geometric(ScaleEstimate(1.0, 1, w), 0.25).s_hat for w in np.linspace(0, 1, 11)]
    assert np.all(np.diff(vals) > 0)


def test_recompensation_rejected():
    est = phase_compensate_geometric(ScaleEstimate(1.0, 1.0, 0.5), 0.0)
    with pytest.raises(StateError):
        phase_compensate_geometric(est, 0.0)
    with pytest.raises(StateError):
        phase_compensate_linear(est, 0.0)


def test_postsmoothed_compensation_at_zero_c_equals_geometric():
    sol = solve(0.25, 0.0)
    est = ScaleEstimate(1.3, 1.0, 0.3)
    a = phase_compensate_postsmoothed(est, sol).s_hat
    b = phase_compensate_geometric(est, 0.25).s_hat
    assert a == pytest.approx(b, rel=1e-14)


def test_postsmoothed_compensation_bounds():
    sol = solve(0.0, 1.0)
    out = phase_compensate_postsmoothed(ScaleEstimate(sol.s_sine_1, 1.0, 1.0), sol)
    assert out.s_hat == pytest.approx(np.sqrt(sol.s_sine_1 * sol.s_sine_2))
    assert (round(sol.s_sine_1, 3), round(sol.s_sine_2, 3)) == (1.329, 1.474)


def test_postsmoothed_compensation_parameter_mismatch():
    est = ScaleEstimate(1.0, 1.0, 0.5, gamma_cap=0.5, c_post=1.0, post_smoothed=True)
    with pytest.raises(ParameterError):
        phase_compensate_postsmoothed(est, solve(0.25, 1.0))


def test_temporal_compensation_refuses_causal():
    with pytest.raises(UnsupportedError):
        temporal_phase_compensate(ScaleEstimate(1.0, 1.0, 0.5, kind="temporal-causal"), 0.25)


def test_wavelength_identity():
    assert wavelength_estimate(np.sqrt(2) / 0.25**2, 0.0) == pytest.approx(2 * np.pi / 0.25)
    assert frequency_estimate(np.sqrt(2) / 0.25**2, 0.0) == pytest.approx(0.25)


# ----------------------------------------------------------------------------
# dense algorithms

def test_blob_scale_without_post_smoothing():
    s0 = 16.0
    n = 129
    y, x = np.mgrid[0:n, 0:n] - n // 2
    img = np.exp(-(x**2 + y**2) / (2 * s0))
    p = QuadratureParams(gamma_cap_s=0.0)
    smap = select_dense("I", img, ScaleLadder.per_octave(1, 16, 4), p)
    assert smap.s_hat[0, 64, 64] == pytest.approx(s0, rel=0.05)


def test_sine_gradient_point_scale():
    lam = 16
    omega = 2 * np.pi / lam
    img = np.tile(np.sin(omega * np.arange(128)), (16, 1))
    p = QuadratureParams(gamma_cap_s=0.25)
    smap = select_dense("I", img, ScaleLadder.per_octave(0.5, 32, 8), p)
    # x = 64 is a zero crossing: pure gradient
    assert smap.s_hat[0, 8, 64] * omega**2 == pytest.approx(0.75, rel=0.03)


def test_algorithm_two_wavelength():
    lam = 16
    img = np.tile(np.sin(2 * np.pi * np.arange(128) / lam), (16, 1))
    g = 0.25
    smap = select_dense("II", img, ScaleLadder.per_octave(1, 32, 4), QuadratureParams(gamma_cap_s=g))
    lam_hat = wavelength_estimate(smap.s_hat[0, 8, 40:88], g)
    # the residual phase ripple of the geometric blend is about +-2% in wavelength
    assert 15.5 < lam_hat.mean() < 16.5
    assert np.all(np.abs(lam_hat / 16 - 1) < 0.05)


def sigma_spread(s):
    return np.std(np.sqrt(s)) / np.mean(np.sqrt(s))


@pytest.mark.parametrize("compensation, limit", [("geometric", 0.015), ("linear", 0.025)])
def test_compensation_flattens_sine(compensation, limit):
    img = np.tile(np.sin(np.arange(256) / 4.0), (8, 1))
    lad = ScaleLadder.per_octave(1, 64, 8)
    p = QuadratureParams(gamma_cap_s=0.0)
    raw = select_dense("I", img, lad, p).s_hat[0, 4, 64:192]
    comp = select_dense("II", img, lad, p, compensation=compensation).s_hat[0, 4, 64:192]
    assert sigma_spread(raw) >= 0.1
    # exact-optimum floors over a period: 1.0% geometric, 2.1% linear
    assert sigma_spread(comp) <= limit


def test_algorithm_validation():
    img = np.zeros((16, 16))
    lad = ScaleLadder.per_octave(1, 4, 2)
    with pytest.raises(ParameterError):
        select_dense("V", img, lad)
    with pytest.raises(ParameterError):
        select_dense("III", img, lad, QuadratureParams(c_post=0.0))
    with pytest.raises(ParameterError):
        select_dense("IV", img, lad, QuadratureParams(c_post=1.0))


def test_causal_signal_refuses_compensation():
    sig = Signal1D(np.sin(np.arange(200) / 4.0))
    lad = ScaleLadder.per_octave(2, 32, 2)
    with pytest.raises(UnsupportedError):
        select_dense("II", sig, lad, causal=True)
    assert select_dense("I", sig, lad, causal=True).n_estimates() > 0


def test_constant_image_map_is_empty():
    smap = select_dense("I", np.full((20, 20), 4.0), ScaleLadder.per_octave(1, 4, 2))
    assert smap.n_estimates() == 0
    assert np.all(np.isnan(max_response_map(smap).s_hat))
    assert selection_surfaces(smap).shape == (0, 4)


def test_border_flag():
    s0 = 16.0
    n = 40
    y, x = np.mgrid[0:n, 0:n]
    img = np.exp(-((x - 4) ** 2 + (y - 20) ** 2) / (2 * s0))
    smap = select_dense("I", img, ScaleLadder.per_octave(1, 16, 4), QuadratureParams(gamma_cap_s=0.0))
    assert smap.count[20, 4] >= 1
    assert smap.flags[0, 20, 4] & FLAG_BORDER
    assert not smap.flags[0, 20, 4] & FLAG_TIE


def test_affine_intensity_leaves_scales():
    rng = np.random.default_rng(5)
    img = rng.random((48, 48))
    lad = ScaleLadder.per_octave(1, 8, 4)
    a = select_dense("II", img, lad)
    b = select_dense("II", 2.5 * img + 7, lad)
    assert np.array_equal(a.count, b.count)
    ok = ~np.isnan(a.s_hat)
    assert np.allclose(a.s_hat[ok], b.s_hat[ok], rtol=1e-9, atol=0)
    assert np.allclose(b.magnitude[ok], 6.25 * a.magnitude[ok], rtol=1e-9)


def test_max_response_and_surfaces():
    lad = ScaleLadder.per_octave(1, 64, 4)
    u = np.arange(256)
    img = np.tile(np.sin(2 * np.pi * u / 8) + np.sin(2 * np.pi * u / 32), (4, 1))
    smap = select_dense("II", img, lad, QuadratureParams())
    mr = max_response_map(smap)
    assert np.array_equal(mr.s_hat, smap.s_hat[0])
    assert np.all(smap.magnitude[0][smap.count > 1] >= smap.magnitude[1][smap.count > 1])
    lam = wavelength_estimate(mr.s_hat[2, 64:192], 0.25)
    # the two gratings interfere, which moves local estimates by up to 0.3 octaves
    near8 = np.abs(np.log2(lam / 8)) < 0.4
    near32 = np.abs(np.log2(lam / 32)) < 0.4
    assert np.all(near8 | near32)
    assert near8.any() and near32.any()
    cloud = selection_surfaces(smap)
    assert cloud.shape == (smap.n_estimates(), 4)


def test_estimates_at_sorted():
    lad = ScaleLadder.per_octave(1, 64, 4)
    u = np.arange(256)
    img = np.tile(np.sin(2 * np.pi * u / 8) + np.sin(2 * np.pi * u / 32), (4, 1))
    smap = select_dense("I", img, lad)
    pts = np.argwhere(smap.count > 1)
    ests = smap.estimates_at(tuple(pts[0]))
    mags = [e.magnitude for e in ests]
    assert mags == sorted(mags, reverse=True)


# ----------------------------------------------------------------------------
# joint

def st_sine(ws, wt, phase_x, phase_t, T=96, n=48):
    t, y, x = np.meshgrid(np.arange(T), np.arange(n), np.arange(n), indexing="ij")
    c = n // 2
    f = (np.sin(ws * (x - c) + phase_x) + np.sin(ws * (y - c) + phase_x)) * np.sin(wt * (t - T // 2) + phase_t)
    return FrameStream(f)


@pytest.mark.parametrize("phase, factor", [(0.0, 1.0), (np.pi / 2, 2.0)])
def test_joint_selection_boundary_phases(phase, factor):
    ws, wt = 0.5, 0.25
    stream = st_sine(ws, wt, phase, phase)
    sl = ScaleLadder.per_octave(0.5, 8, 8)
    tl = ScaleLadder.per_octave(1, 16, 8)
    vol = build_spatiotemporal_scalespace(stream, sl, tl, frames=[48])
    jmap = select_joint_st(vol, QuadratureParams(gamma_cap_s=0.0, gamma_cap_t=0.0))
    est = jmap.estimates_at((0, 24, 24))[0]
    assert est.s_hat * ws**2 == pytest.approx(factor, rel=0.05)
    assert est.tau_hat * wt**2 == pytest.approx(factor, rel=0.05)
    assert sum(est.ratios) == pytest.approx(1.0)


def test_joint_static_video_is_empty():
    frames = np.repeat(np.random.default_rng(0).random((1, 24, 24)), 20, axis=0)
    vol = build_spatiotemporal_scalespace(FrameStream(frames), ScaleLadder.per_octave(1, 4, 2),
                                          ScaleLadder.per_octave(1, 4, 2), frames=[10])
    assert select_joint_st(vol).n_estimates() == 0


def test_joint_needs_st_volume():
    vol = build_spatial_scalespace(np.zeros((8, 8)), LADDER5)
    with pytest.raises(KindError):
        select_joint_st(vol)


def test_st_compensation_boundaries():
    g = 0.25
    p = QuadratureParams(gamma_cap_s=g, gamma_cap_t=g)
    gm = np.sqrt((1 - g) * (2 - g))
    out = st_phase_compensate(JointScaleEstimate(1 - g, 1 - g, 1.0, (1.0, 0.0, 0.0, 0.0)), p)
    assert (out.s_hat, out.tau_hat) == (pytest.approx(gm), pytest.approx(gm))
    out = st_phase_compensate(JointScaleEstimate(2 - g, 2 - g, 1.0, (0.0, 0.0, 0.0, 1.0)), p)
    assert (out.s_hat, out.tau_hat) == (pytest.approx(gm), pytest.approx(gm))


def test_st_compensation_guards():
    p = QuadratureParams()
    with pytest.raises(UnsupportedError):
        st_phase_compensate(JointScaleEstimate(1, 1, 1, (0.25,) * 4, causal=True), p)
    with pytest.raises(StateError):
        st_phase_compensate(JointScaleEstimate(1, 1, 1, (0.25,) * 4, compensated=True), p)
