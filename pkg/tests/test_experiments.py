import numpy as np
import pytest

from sepapprox.errors import ConfigurationError, DegenerateVariationError, ParameterError
from sepapprox.experiments import (BinaryDesign, binary_step, boundary_comparison,
                                   boundary_data, decision_diff, delta_error, error_map,
                                   homogeneous, model_curve, radial_ramp,
                                   single_switch_check, top_boundary_elements)
from sepapprox.models import LINEAR, SMW, SMW_APPROX, SMW_DIAG, TD_CIRC, build_context


@pytest.fixture(scope="module")
def hctx5(mesh5, interior_tables):
    return build_context(mesh5, homogeneous(mesh5), boundary_data("mixed"),
                         tables=interior_tables)


def test_radial_ramp(mesh5):
    lam = radial_ramp(mesh5)
    c = mesh5.centroid
    r = np.linalg.norm(c - 0.5, axis=1)
    assert np.all(lam.values[r <= 0.15] == 1000.0)
    assert np.all(lam.values[r >= 0.35] == 1.0)
    mid = (r > 0.15) & (r < 0.35)
    assert np.allclose(lam.values[mid], 1000 - (r[mid] - 0.15) / 0.2 * 999)
    with pytest.raises(ParameterError):
        radial_ramp(mesh5, 0.4, 0.3)


def test_unknown_scenario():
    with pytest.raises(ParameterError):
        boundary_data("periodic")


def test_smw_curve_matches_oracle(mesh4, nodes16):
    ctx = build_context(mesh4, homogeneous(mesh4), boundary_data("mixed"))
    ell = mesh4.find_element(1, (0.5, 0.25), "br")
    curve = model_curve(ctx, SMW, ell, nodes16.nodes, with_oracle=True)
    for eta, model, orc in curve:
        assert abs(model - orc) <= 1e-9 * abs(orc)
    assert curve[0][1] == ctx.compliance
    assert delta_error(ctx, SMW, ell, nodes16.nodes) <= 1e-8


def test_delta_error_validation(mesh4, nodes16):
    ctx = build_context(mesh4, homogeneous(mesh4), boundary_data("dirichlet"))
    with pytest.raises(ParameterError):
        delta_error(ctx, SMW, 100, nodes16.nodes[1:])
    # bottom-right corner element: all vertices clamped, no variation
    corner = mesh4.find_element(1, (1.0, 0.0), "br")
    with pytest.raises(DegenerateVariationError):
        delta_error(ctx, LINEAR, corner, nodes16.nodes)


def test_error_map_layout(hctx5, eta_grid, tmp_path):
    em = error_map(hctx5, SMW_DIAG, eta_grid)
    assert em.included.sum() == 1800
    assert np.all(em.delta[em.included] >= 0)
    assert np.all(np.isnan(em.delta[~hctx5.mesh.interior_elements]))
    em.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "id,cx,cy,delta" and len(lines) == 1801


def test_smw_map_is_zero(hctx5, eta_grid):
    assert error_map(hctx5, SMW, eta_grid).max() < 1e-8


def test_error_ordering_on_homogeneous_field(hctx5, eta_grid):
    m = [error_map(hctx5, k, eta_grid).max() for k in (SMW_APPROX, SMW_DIAG, TD_CIRC, LINEAR)]
    assert m[0] < m[1] < m[2] < m[3]


def test_binary_step_extremes(hctx5):
    all_on = binary_step(hctx5, SMW, 0.0)
    assert np.all(all_on.values == 1000.0)
    none = binary_step(hctx5, SMW, 1e6)
    assert np.all(none.values == 1.0)
    with pytest.raises(ParameterError):
        binary_step(hctx5, SMW, -1.0)


def test_binary_step_is_binary(hctx5):
    d = binary_step(hctx5, SMW_DIAG, 7.5)
    assert set(np.unique(d.values)) <= {1.0, 1000.0}


def test_binary_step_ties_go_to_weak(mesh4):
    # an element with no influence on the compliance always stays weak
    ctx = build_context(mesh4, homogeneous(mesh4), boundary_data("dirichlet"))
    corner = mesh4.find_element(1, (1.0, 0.0), "br")
    assert binary_step(ctx, SMW, 0.0).values[corner] == 1.0


def test_decision_diff(mesh5, hctx5):
    a = binary_step(hctx5, SMW, 7.5)
    assert decision_diff(a, a, mesh5) == 0
    comp = BinaryDesign(values=1001.0 - a.values, omega=7.5, decided=a.decided)
    assert decision_diff(a, comp, mesh5) == 1800
    b = binary_step(hctx5, SMW_DIAG, 7.5)
    assert decision_diff(a, b, mesh5) == decision_diff(b, a, mesh5)
    short = BinaryDesign(values=a.values[:-1], omega=7.5, decided=a.decided[:-1])
    with pytest.raises(ParameterError):
        decision_diff(a, short, mesh5)


def test_smw_switch_is_optimal_per_element(mesh4):
    ctx = build_context(mesh4, homogeneous(mesh4), boundary_data("mixed"))
    d = binary_step(ctx, SMW, 7.5 * 4)
    sample = np.flatnonzero(mesh4.interior_elements)[::25]
    chosen, rejected = single_switch_check(ctx, d, sample, 7.5 * 4)
    assert np.all(chosen <= rejected + 1e-12 * np.abs(rejected))


def test_top_boundary_elements(mesh4):
    ells = top_boundary_elements(mesh4)
    assert len(ells) == 2 * (mesh4.n_cells - 2)
    assert np.all(mesh4.vertices[mesh4.elements[ells], 1].max(axis=1) == 1.0)


def test_boundary_comparison_requires_tables(mesh5, interior_tables, eta_grid):
    with pytest.raises(ConfigurationError):
        boundary_comparison(mesh5, homogeneous(mesh5), boundary_data("mixed"),
                            interior_tables, {}, eta_grid)


def test_boundary_tables_leave_interior_alone(mesh5, interior_tables, top_neumann_tables,
                                              eta_grid):
    res = boundary_comparison(mesh5, homogeneous(mesh5), boundary_data("mixed"),
                              interior_tables, top_neumann_tables, eta_grid)
    assert np.array_equal(res.interior_with, res.interior_without)
    assert res.max_with < res.max_without
