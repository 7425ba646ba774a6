import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import smooth_random_field
from gpam_laplace import TimePath, TorusField, heat_propagate, holder_norm_surrogate, inner_l2, multiply, sobolev_norm
from gpam_laplace.torus import (
    FOUR_PI2,
    GridMismatch,
    field_from_bytes,
    field_from_json,
    field_to_bytes,
    field_to_json,
    load_field,
    load_path,
    save_field,
    save_path,
    spectral,
)

seeds = st.integers(0, 2**32 - 1)
grids = st.sampled_from([8, 12, 16, 24])


def band_limited(seed, n, kmax):
    rng = np.random.default_rng(seed)
    f = smooth_random_field(rng, n, decay=0.0)
    k = np.fft.fftfreq(n, 1.0 / n)
    mask = (np.abs(k)[:, None] <= kmax) & (np.abs(k)[None, :] <= kmax)
    return TorusField(f.modes * mask)


@given(seeds, grids)
def test_fields_are_real_with_empty_nyquist_lines(seed, n):
    f = smooth_random_field(np.random.default_rng(seed), n)
    assert f.hermitian_defect() < 1e-14
    assert np.all(f.modes[n // 2] == 0) and np.all(f.modes[:, n // 2] == 0)
    assert np.max(np.abs(np.fft.ifft2(f.modes, norm="forward").imag)) < 1e-13


@given(seeds, grids)
def test_half_spectrum_round_trip(seed, n):
    f = smooth_random_field(np.random.default_rng(seed), n)
    assert np.array_equal(TorusField.from_half(f.half).modes, f.modes)
    sp = spectral(n)
    assert np.allclose(sp.from_phys(sp.to_phys(f.half)), f.half, atol=1e-14)


@given(seeds, seeds, grids)
def test_parseval_pairing(s1, s2, n):
    f = smooth_random_field(np.random.default_rng(s1), n)
    g = smooth_random_field(np.random.default_rng(s2), n)
    direct = float(np.mean(f.values * g.values))
    assert inner_l2(f, g) == pytest.approx(direct, rel=1e-12, abs=1e-14)
    assert sobolev_norm(f, 0.0) == pytest.approx(np.sqrt(inner_l2(f, f)), rel=1e-12)


@given(seeds, seeds, grids)
def test_dealiased_product_is_exact_for_band_limited_factors(s1, s2, n):
    # factors supported on |k| <= N/4 - 1: the product still fits below N/2
    kmax = n // 4 - 1
    f, g = band_limited(s1, n, kmax), band_limited(s2, n, kmax)
    pointwise = TorusField.from_values(f.values * g.values)
    assert np.max(np.abs(multiply(f, g).modes - pointwise.modes)) < 1e-13


@given(seeds, grids)
def test_product_is_self_adjoint_in_l2(seed, n):
    rng = np.random.default_rng(seed)
    f, g, k = (smooth_random_field(rng, n, decay=0.5) for _ in range(3))
    assert inner_l2(multiply(f, g), k) == pytest.approx(inner_l2(g, multiply(f, k)), rel=1e-10, abs=1e-13)


@given(seeds, st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_heat_semigroup(seed, s, t):
    f = smooth_random_field(np.random.default_rng(seed), 16)
    a = heat_propagate(heat_propagate(f, s), t)
    b = heat_propagate(f, s + t)
    assert np.max(np.abs(a.modes - b.modes)) < 1e-13


def test_heat_flow_of_a_single_mode():
    n, t = 16, 0.013
    f = TorusField.trig((2, -1), n, "sin", 0.7)
    expect = f * np.exp(-FOUR_PI2 * 5 * t)
    assert np.max(np.abs(heat_propagate(f, t).modes - expect.modes)) < 1e-15


def test_phi1_integrates_the_semigroup():
    sp = spectral(16)
    dt = 0.01
    s = np.linspace(0, dt, 20001)
    lam = FOUR_PI2 * sp.k2[3, 2]
    quad = np.trapezoid(np.exp(-lam * (dt - s)), s)
    assert sp.phi1(dt)[3, 2] == pytest.approx(quad, rel=1e-8)
    assert sp.phi1(dt)[0, 0] == dt


def test_trig_normalisation_and_nyquist_rejection():
    f = TorusField.trig((1, 2), 16, "cos", 1.0)
    assert sobolev_norm(f, 0.0) == pytest.approx(np.sqrt(0.5))
    with pytest.raises(ValueError):
        TorusField.trig((8, 0), 16)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        TorusField.zeros(8) + TorusField.zeros(16)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), seeds)
def test_sobolev_norm_monotone_in_index(s, t, seed):
    f = smooth_random_field(np.random.default_rng(seed), 12)
    lo, hi = sorted((s, t))
    assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-12)


def test_holder_surrogate_grows_with_regularity_index(rng):
    f = smooth_random_field(rng, 32, decay=1.0)
    vals = [holder_norm_surrogate(f, a) for a in (0.0, 0.5, 1.0)]
    assert vals[0] <= vals[1] <= vals[2]
    # alpha = 0 bounds the sup norm of each dyadic block by the field sup norm times a constant
    assert vals[0] <= 3.0 * np.max(np.abs(f.values)) + 1e-12


def test_binary_and_json_serialisation(tmp_path, rng):
    f = smooth_random_field(rng, 12)
    g, off = field_from_bytes(field_to_bytes(f))
    assert off == len(field_to_bytes(f))
    assert np.array_equal(g.modes, f.modes)
    save_field(f, tmp_path / "f.tf2d")
    assert np.array_equal(load_field(tmp_path / "f.tf2d").modes, f.modes)
    assert np.allclose(field_from_json(field_to_json(f)).modes, f.modes, atol=0)
    with pytest.raises(ValueError):
        field_from_bytes(b"XXXX" + bytes(12))


def test_path_serialisation(tmp_path, rng):
    t = np.linspace(0, 0.1, 4)
    p = TimePath(np.array([smooth_random_field(rng, 8).modes for _ in t]), t)
    save_path(p, tmp_path / "p.tf2d")
    q = load_path(tmp_path / "p.tf2d", t)
    assert np.array_equal(q.modes, p.modes)
    assert p.sup_l2() == pytest.approx(max(sobolev_norm(s, 0.0) for s in p.steps))


def test_path_rejects_non_uniform_times():
    with pytest.raises(ValueError):
        TimePath(np.zeros((3, 8, 8)), np.array([0.0, 0.1, 0.3]))
