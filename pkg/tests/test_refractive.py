import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import raytransport as rt
from raytransport.errors import DomainError

MODELS = [
    rt.constant_model(1.0),
    rt.paper4_model(),
    rt.radial_poly_model([2.0, -0.5, 0.25]),
    rt.affine_model(2.0, [1.0, 0.0]),
    rt.affine_model(1.8, [0.3, -0.4]),
]

point_strategy = st.tuples(
    st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)
).map(np.array)


def christoffel_from_metric(model, x, h=1e-6):
    """Brute-force Christoffels from the generic metric formula.

    Uses 0.5 g^{kp} (d_j g_ip + d_i g_jp - d_p g_ij) with the metric entries
    n^2 delta_ij differentiated by central differences; independent of the
    closed form under test.
    """
    d = model.dim

    def gmat(y):
        n = float(model.n(y))
        return n * n * np.eye(d)

    dg = np.zeros((d, d, d))
    for p in range(d):
        e = np.zeros(d)
        e[p] = h
        dg[p] = (gmat(x + e) - gmat(x - e)) / (2.0 * h)
    ginv = np.linalg.inv(gmat(x))
    gamma = np.zeros((d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(d):
                gamma[k, i, j] = 0.5 * sum(
                    ginv[k, p] * (dg[j][i, p] + dg[i][j, p] - dg[p][i, j]) for p in range(d)
                )
    return gamma


class TestMetricInner:
    def test_euclidean_case(self, unit_model):
        assert rt.metric_inner(unit_model, [0.3, 0.1], [1, 0], [1, 0]) == 1.0

    def test_demo_origin(self, demo_model):
        # n(0) = 1.5, so n^2 = 2.25
        assert rt.metric_inner(demo_model, [0.0, 0.0], [1, 0], [1, 0]) == pytest.approx(2.25, abs=0)

    def test_orthogonality_preserved(self, demo_model):
        assert rt.metric_inner(demo_model, [0.2, -0.5], [1, 0], [0, 1]) == 0.0

    def test_outside_ball_rejected(self, demo_model):
        with pytest.raises(DomainError):
            rt.metric_inner(demo_model, [1.2, 0.0], [1, 0], [1, 0])

    @settings(max_examples=30, deadline=None)
    @given(x=point_strategy, u=point_strategy, v=point_strategy)
    def test_conformal_consistency(self, x, u, v):
        model = rt.paper4_model()
        n2 = float(model.n(x)) ** 2
        assert rt.metric_inner(model, x, u, v) == pytest.approx(n2 * np.dot(u, v), rel=1e-14, abs=1e-14)
        norm = rt.metric_norm(model, x, u)
        assert norm == pytest.approx(float(model.n(x)) * np.linalg.norm(u), rel=1e-12, abs=1e-12)


class TestChristoffel:
    def test_constant_index_vanishes(self, unit_model):
        assert_allclose(rt.christoffel(unit_model, [0.3, -0.2]), 0.0)

    def test_demo_values(self, demo_model):
        # at (0.5, 0): n = 1.75, grad n = (1, 0)
        g = rt.christoffel(demo_model, [0.5, 0.0])
        assert g[0, 0, 0] == pytest.approx(1.0 / 1.75, rel=1e-12)
        assert g[0, 1, 1] == pytest.approx(-1.0 / 1.75, rel=1e-12)
        assert g[1, 0, 1] == pytest.approx(1.0 / 1.75, rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(x=point_strategy)
    def test_lower_index_symmetry(self, x):
        g = rt.christoffel(rt.paper4_model(), x)
        assert_allclose(g, np.swapaxes(g, 1, 2), rtol=0, atol=0)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
    def test_matches_generic_metric_formula(self, model):
        rng = np.random.default_rng(7)
        for _ in range(4):
            x = rng.uniform(-0.6, 0.6, size=model.dim)
            got = rt.christoffel(model, x)
            want = christoffel_from_metric(model, x)
            assert_allclose(got, want, rtol=1e-6, atol=1e-6)


class TestAcceleration:
    def test_straight_medium(self, unit_model):
        assert_allclose(rt.geodesic_acceleration(unit_model, [0.1, 0.2], [0.5, -0.3]), 0.0)

    def test_demo_value(self, demo_model):
        a = rt.geodesic_acceleration(demo_model, [0.5, 0.0], [0.0, 1.0])
        assert_allclose(a, [1.0 / 1.75, 0.0], rtol=1e-12)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
    def test_closed_form_equals_contraction(self, model):
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = rng.uniform(-0.6, 0.6, size=model.dim)
            v = rng.uniform(-1.0, 1.0, size=model.dim)
            closed = rt.geodesic_acceleration(model, x, v)
            gamma = rt.christoffel(model, x)
            contracted = -np.einsum("kij,i,j->k", gamma, v, v)
            assert_allclose(closed, contracted, rtol=1e-12, atol=1e-12)


class TestModelDerivatives:
    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
    def test_gradient_matches_finite_differences(self, model):
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(5):
            x = rng.uniform(-0.6, 0.6, size=model.dim)
            g = np.asarray(model.grad_n(x))
            for i in range(model.dim):
                e = np.zeros(model.dim)
                e[i] = h
                fd = (float(model.n(x + e)) - float(model.n(x - e))) / (2.0 * h)
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
    def test_hessian_matches_finite_differences(self, model):
        rng = np.random.default_rng(13)
        h = 1e-5
        for _ in range(3):
            x = rng.uniform(-0.6, 0.6, size=model.dim)
            hess = np.asarray(model.hess_n(x))
            for i in range(model.dim):
                e = np.zeros(model.dim)
                e[i] = h
                fd = (np.asarray(model.grad_n(x + e)) - np.asarray(model.grad_n(x - e))) / (2.0 * h)
                assert_allclose(hess[:, i], fd, rtol=1e-5, atol=1e-7)

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
    def test_floor_certifies_positivity(self, model):
        rng = np.random.default_rng(17)
        pts = rng.uniform(-1.0, 1.0, size=(4000, model.dim))
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        assert np.all(np.asarray(model.n(pts)) >= model.floor - 1e-12)


class TestCoercivityMargin:
    def test_straight_medium(self, unit_model):
        rep = rt.coercivity_margin(unit_model, 0.01)
        assert rep.sup_riemannian == 0.0
        assert rep.sup_euclidean == 0.0
        assert rep.satisfied

    def test_demo_model_margins(self, demo_model):
        # analytic maxima: 2r/(r^2+1.5)^2 at r = 1/sqrt(2), 2r/(r^2+1.5) at r = 1
        rep = rt.coercivity_margin(demo_model, 1.0)
        assert rep.sup_riemannian == pytest.approx(np.sqrt(2.0) / 4.0, abs=1e-3)
        assert rep.sup_euclidean == pytest.approx(0.8, abs=1e-3)
        assert rep.satisfied

    def test_affine_fails_euclidean_reading(self):
        rep = rt.coercivity_margin(rt.affine_model(2.0, [1.0, 0.0]), 0.4)
        assert rep.sup_euclidean == pytest.approx(1.0, abs=1e-3)
        assert rep.sup_euclidean > rep.alpha0

    def test_bad_alpha0(self, demo_model):
        with pytest.raises(ValueError):
            rt.coercivity_margin(demo_model, 0.0)


class TestRegistry:
    def test_parse_forms(self):
        assert rt.parse_model("paper4").name == "paper4"
        assert float(rt.parse_model("constant:2.5").n(np.zeros(2))) == 2.5
        m = rt.parse_model("radial:1.5,1")
        x = np.array([0.3, -0.4])
        assert float(m.n(x)) == pytest.approx(0.25 + 1.5)
        m3 = rt.parse_model("affine:2,1,0,0", dim=3)
        assert float(m3.n(np.array([0.5, 0, 0]))) == 2.5

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            rt.parse_model("nonsense")
        with pytest.raises(ValueError):
            rt.parse_model("affine:2,1", dim=3)
        with pytest.raises(ValueError):
            rt.parse_model("constant:abc")

    def test_nonpositive_models_rejected(self):
        with pytest.raises(ValueError):
            rt.affine_model(1.0, [1.0, 0.5])
        with pytest.raises(ValueError):
            rt.radial_poly_model([-1.0])

    def test_demo_3d_extension(self):
        m3 = rt.paper4_model(dim=3)
        assert float(m3.n(np.array([0.1, 0.2, 0.3]))) == pytest.approx(0.14 + 1.5)
