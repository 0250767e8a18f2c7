import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_gegenbauer, gamma

from paneitz_lab import Field, integrate, make_model, random_field, s3_moment, s3_quadrature
from paneitz_lab.geometry import SPHERE_VOLUME, gegenbauer_table


def moment_oracle(idx):
    """Uniform S^3 moment from the Gamma-function formula."""
    counts = np.bincount(np.asarray(idx, dtype=int), minlength=4) if len(idx) else np.zeros(4, int)
    if np.any(counts % 2):
        return 0.0
    k = counts // 2
    out = gamma(2.0) / gamma(2.0 + k.sum())
    for ki in k:
        out *= gamma(ki + 0.5) / gamma(0.5)
    return float(out)


def test_sphere_volume(sphere16):
    assert integrate(sphere16, Field.constant(sphere16, 1.0)) == pytest.approx(8 * math.pi**2 / 3, rel=1e-14)
    assert sphere16.volume == pytest.approx(SPHERE_VOLUME, rel=1e-14)


def test_sphere_polynomial_integral(sphere16):
    # int cos^2 = vol * (1/5) since sin^3 dtheta weighted average of t^2 is 1/5
    f = Field.from_function(sphere16, lambda th: np.cos(th) ** 2)
    assert integrate(sphere16, f) == pytest.approx(SPHERE_VOLUME / 5.0, rel=1e-13)


def test_torus_integrals(torus8):
    assert torus8.volume == pytest.approx(1.0)
    f = Field.from_function(torus8, lambda x1, x2, x3, x4: np.sin(2 * np.pi * x1) ** 2)
    assert integrate(torus8, f) == pytest.approx(0.5, abs=1e-14)


def test_gegenbauer_orthonormal(sphere16):
    B = sphere16.basis
    w = sphere16.background_weights
    gram = (B * w) @ B.T
    assert np.allclose(gram, np.eye(sphere16.l_max + 1), atol=1e-12)


def test_gegenbauer_matches_scipy():
    t = np.linspace(-1, 1, 7)
    table = gegenbauer_table(6, t)
    for ell in range(7):
        ref = eval_gegenbauer(ell, 1.5, t)
        c = (table[ell] @ ref) / (ref @ ref)
        assert np.allclose(table[ell], c * ref, rtol=1e-12, atol=1e-12)


def test_sphere_round_trip(sphere16):
    u = random_field(sphere16, seed=1, band=16)
    back = sphere16.synthesis(sphere16.analysis(u.physical))
    assert np.allclose(back, u.physical, atol=1e-13)


def test_torus_round_trip(torus8):
    u = random_field(torus8, seed=2)
    assert np.allclose(u.to_spectral().to_physical().physical, u.physical, atol=1e-14)


def test_make_model_rejects_bad_resolution():
    with pytest.raises(ValueError, match="at least"):
        make_model("torus", n=4)
    with pytest.raises(ValueError, match="at least"):
        make_model("sphere", l_max=4)
    with pytest.raises(ValueError, match="2\\*L_max"):
        make_model("sphere", l_max=16, n_theta=20)
    with pytest.raises(ValueError, match="unknown"):
        make_model("cube", n=8)


def test_non_zonal_factor_rejected(sphere16):
    with pytest.raises(ValueError, match="zonal"):
        make_model("sphere", l_max=16, conformal_factor=lambda x: 0.1 * x[:, 1])
    with pytest.raises(ValueError, match="zonal"):
        make_model("sphere", l_max=16, conformal_factor=np.zeros((3, 3)))


def test_conformal_volume(sphere16):
    m = make_model("sphere", l_max=16, conformal_factor=0.25)
    assert m.volume == pytest.approx(math.exp(1.0) * SPHERE_VOLUME, rel=1e-13)


def test_field_json_round_trip(sphere16):
    u = random_field(sphere16, seed=3)
    back = Field.from_json(u.to_json(), model=sphere16)
    assert np.array_equal(back.physical, u.physical)
    doc = json.loads(u.to_json())
    assert doc["kind"] == "sphere"
    assert doc["resolution"]["l_max"] == 16


def test_random_field_norms(sphere16, torus8):
    from paneitz_lab.paneitz import energy_pairing

    for m in (sphere16, torus8):
        u = random_field(m, seed=5, scale=2.0)
        assert math.sqrt(energy_pairing(m, u)) == pytest.approx(2.0, rel=1e-12)
        assert abs(u.mean()) < 1e-13
        s = random_field(m, seed=5, norm="sup", scale=0.5)
        assert s.sup_norm() == pytest.approx(0.5, rel=1e-14)


def test_random_field_seeded(sphere16):
    a = random_field(sphere16, seed=9)
    b = random_field(sphere16, seed=9)
    assert np.array_equal(a.physical, b.physical)


def test_s3_quadrature_area():
    pts, w = s3_quadrature(6)
    assert w.sum() == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)


@pytest.mark.parametrize(
    "idx, expected",
    [((0, 0), 0.25), ((1, 1), 0.25), ((0, 1), 0.0), ((2, 2, 2, 2), 1 / 8), ((0, 0, 3, 3), 1 / 24), ((), 1.0)],
)
def test_s3_moment_values(idx, expected):
    assert s3_moment(idx) == pytest.approx(expected, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=4))
def test_s3_moment_matches_gamma_formula(idx):
    assert s3_moment(idx) == pytest.approx(moment_oracle(idx), abs=1e-13)


def test_s3_moment_rejects_long_index():
    with pytest.raises(ValueError):
        s3_moment((0, 0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        s3_moment((4,))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_integral_linear_and_shift(seed, c):
    m = make_model("sphere", l_max=12)
    u = random_field(m, seed=seed)
    assert integrate(m, u + c) == pytest.approx(c * m.volume, abs=1e-11)


def test_spec_volume_examples():
    assert make_model("torus", n=16).volume == 1.0
    assert make_model("sphere", l_max=64).volume == pytest.approx(SPHERE_VOLUME, rel=1e-10)


def test_integrate_constants(torus8, sphere16):
    assert integrate(torus8, Field.constant(torus8, 2.5)) == pytest.approx(2.5, rel=1e-15)
    assert integrate(sphere16, Field.constant(sphere16, 3.0)) == pytest.approx(8 * math.pi**2, rel=1e-12)
    conf = make_model("torus", n=8, conformal_factor=0.2)
    assert integrate(conf, Field.constant(conf, 1.0)) == pytest.approx(math.exp(0.8), rel=1e-14)


def test_conformal_integral_is_weighted_background(sphere16):
    v = random_field(sphere16, seed=21, norm="sup", scale=0.4)
    f = random_field(sphere16, seed=22, mean=1.0)
    conf = sphere16.with_conformal_factor(v.physical)
    lhs = integrate(conf, f.physical)
    rhs = integrate(sphere16, f.physical * np.exp(4 * v.physical))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=4), st.randoms(use_true_random=False))
def test_s3_moment_permutation_invariant(idx, rnd):
    perm = list(idx)
    rnd.shuffle(perm)
    assert s3_moment(perm) == pytest.approx(s3_moment(idx), abs=1e-15)
