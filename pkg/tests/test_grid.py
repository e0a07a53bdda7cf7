import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inflowlab import grid
from inflowlab.errors import BoundaryDataError, ConfigurationError, ExtensionError


def test_build_domain_spacing():
    d = grid.build_domain([0.0], [1.0], [100])
    assert d.spacing == pytest.approx((0.01,))
    d2 = grid.build_domain([0, 0], [1, 2], [50, 100])
    assert d2.spacing == pytest.approx((0.02, 0.02))


def test_build_domain_rejects_few_cells():
    with pytest.raises(ConfigurationError, match="cells_per_axis below minimum"):
        grid.build_domain([0.0], [1.0], [3])


def test_build_domain_rejects_reversed_axis():
    with pytest.raises(ConfigurationError, match="axis 1"):
        grid.build_domain([0, 1], [1, 0], [10, 10])


def test_classify_1d_inflow_outflow():
    d = grid.build_domain([0.0], [1.0], [10])
    part = grid.classify_boundary(d, grid.constant_sampler(1.0), grid.constant_sampler(2.0))
    assert part.class_names() == ["IN", "OUT"]
    assert part.un.tolist() == [-1.0, 1.0]
    assert part.rho_B[0] == 2.0 and np.isnan(part.rho_B[1])


def test_classify_1d_zero_flux():
    d = grid.build_domain([0.0], [1.0], [10])
    part = grid.classify_boundary(d, grid.constant_sampler(0.0), None)
    assert part.class_names() == ["ZERO", "ZERO"]
    assert not part.inflow.any() and not part.outflow.any()


def test_classify_2d_uniform_stream():
    d = grid.build_domain([0, 0], [1, 1], [4, 5])
    part = grid.classify_boundary(d, grid.constant_sampler([1.0, 0.0]), grid.constant_sampler(1.0))
    names = np.array(part.class_names())
    sides = np.array(part.sides)
    assert set(names[sides == "x-"]) == {"IN"}
    assert set(names[sides == "x+"]) == {"OUT"}
    assert set(names[(sides == "y-") | (sides == "y+")]) == {"ZERO"}


def test_missing_inflow_density_names_face():
    d = grid.build_domain([0.0], [1.0], [10])
    with pytest.raises(BoundaryDataError, match="x-"):
        grid.classify_boundary(d, grid.constant_sampler(1.0), None)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(1e-3, 1e3))
def test_classification_invariant_under_positive_scaling(ul, ur, s):
    d = grid.build_domain([0.0], [1.0], [8])
    sides = {"x-": ul, "x+": ur}
    a = grid.classify_boundary(d, grid.piecewise_sampler(sides), grid.constant_sampler(1.0))
    b = grid.classify_boundary(
        d, grid.piecewise_sampler({k: s * v for k, v in sides.items()}), grid.constant_sampler(1.0)
    )
    # scaling can only move values across the tolerance band, never flip sign
    for ca, cb, v in zip(a.cls, b.cls, a.un):
        if abs(v) > grid.TOL_CLASS and abs(s * v) > grid.TOL_CLASS:
            assert ca == cb
    assert all(c in (grid.IN, grid.OUT, grid.ZERO) for c in a.cls)


def test_extension_constant_1d():
    d = grid.build_domain([0.0], [1.0], [50])
    part = grid.classify_boundary(d, grid.constant_sampler(1.0), grid.constant_sampler(1.0))
    ext = grid.build_extension(d, part, 0.1)
    assert np.all(ext.u_inf[0] == 1.0)
    assert np.all(ext.div_u_inf == 0.0)


def test_extension_opposing_1d():
    d = grid.build_domain([0.0], [1.0], [100])
    part = grid.classify_boundary(d, grid.piecewise_sampler({"x-": 1.0, "x+": -1.0}), grid.constant_sampler(1.0))
    ext = grid.build_extension(d, part, 0.1)
    x = d.nodes(0)
    u = ext.u_inf[0]
    assert np.all(u[x <= 0.1 + 1e-12] == 1.0)
    assert np.all(u[x >= 0.9 - 1e-12] == -1.0)
    assert np.all(np.diff(u) <= 0)
    collar = grid.inner_collar(d, 0.1)
    assert np.all(np.abs(ext.div_u_inf[collar]) <= grid.TOL_DIV)


def test_extension_trace_and_refinement():
    # trace error is exactly zero because boundary faces carry u_B
    for n in (20, 40, 80):
        d = grid.build_domain([0.0], [1.0], [n])
        part = grid.classify_boundary(d, grid.piecewise_sampler({"x-": 0.5, "x+": 2.0}), grid.constant_sampler(1.0))
        ext = grid.build_extension(d, part, 0.2)
        assert ext.u_inf[0][0] == 0.5 and ext.u_inf[0][-1] == 2.0


def test_extension_2d_uniform():
    d = grid.build_domain([0, 0], [1, 1], [16, 16])
    part = grid.classify_boundary(d, grid.constant_sampler([1.0, 0.0]), grid.constant_sampler(1.0))
    ext = grid.build_extension(d, part, 0.125)
    assert np.allclose(ext.u_inf[0], 1.0, atol=1e-14)
    assert np.allclose(ext.u_inf[1], 0.0, atol=1e-14)
    assert np.max(np.abs(ext.div_u_inf)) < 1e-12


def test_extension_2d_audit_fails_loudly():
    # tangentially varying normal velocity produces negative collar divergence
    d = grid.build_domain([0, 0], [1, 1], [16, 16])
    part = grid.classify_boundary(
        d, grid.linear_tangent_sampler([0.0, 1.0], [0.0, -2.0], axis=0), grid.constant_sampler(1.0)
    )
    with pytest.raises(ExtensionError) as info:
        grid.build_extension(d, part, 0.125)
    assert info.value.worst_value < -grid.TOL_DIV


def test_extension_collar_too_thin():
    d = grid.build_domain([0.0], [1.0], [10])
    part = grid.classify_boundary(d, grid.constant_sampler(1.0), grid.constant_sampler(1.0))
    with pytest.raises(ConfigurationError):
        grid.build_extension(d, part, 0.1)


def test_inner_collar_count():
    d = grid.build_domain([0.0], [1.0], [100])
    mask = grid.inner_collar(d, 0.05)
    # oracle: count centers (k+1/2)/100 with distance < 0.05
    x = (np.arange(100) + 0.5) / 100
    expected = np.minimum(x, 1 - x) < 0.05
    assert mask.sum() == expected.sum() == 10
    assert grid.integrate(d, np.ones(d.shape), mask) == pytest.approx(0.10)


def test_inner_collar_limits():
    d = grid.build_domain([0.0], [1.0], [100])
    assert grid.inner_collar(d, 0.004).sum() == 0
    big = grid.inner_collar(d, 0.5 - 0.01)
    assert grid.integrate(d, np.ones(d.shape), big) < d.volume
    with pytest.raises(ConfigurationError):
        grid.inner_collar(d, 0.6)


def test_collar_measure_linear_bound():
    d = grid.build_domain([0, 0], [1, 1], [64, 64])
    for h in (0.05, 0.1, 0.2):
        m = grid.integrate(d, np.ones(d.shape), grid.inner_collar(d, h))
        assert m <= 4.0 * h + 4 * d.spacing[0]


def test_integrate_basics():
    d = grid.build_domain([0.0], [1.0], [100])
    assert grid.integrate(d, np.ones(100)) == pytest.approx(1.0, abs=1e-14)
    assert grid.integrate(d, np.zeros(100)) == 0.0
    assert grid.integrate(d, d.centers(0)) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        grid.integrate(d, np.ones(99))


def test_integrate_additive_and_second_order():
    errs = []
    for n in (20, 40, 80):
        d = grid.build_domain([0, 0], [1, 1], [n, n])
        X, Y = d.cell_mesh()
        f = np.sin(np.pi * X) * np.exp(Y)
        mask = grid.inner_collar(d, 0.2)
        total = grid.integrate(d, f)
        assert total == pytest.approx(grid.integrate(d, f, mask) + grid.integrate(d, f, ~mask), rel=1e-14)
        errs.append(abs(total - 2 / np.pi * (np.e - 1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_boundary_quadrature():
    d = grid.build_domain([0, 0], [2, 1], [8, 4])
    part = grid.classify_boundary(d, grid.constant_sampler([1.0, 0.0]), grid.constant_sampler(3.0))
    assert grid.integrate_boundary(part, np.ones(len(part.measures))) == pytest.approx(6.0)
    assert grid.integrate_boundary(part, np.nan_to_num(part.rho_B), part.inflow) == pytest.approx(3.0)
