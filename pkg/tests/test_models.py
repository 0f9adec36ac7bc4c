import numpy as np
import pytest

from sepapprox.errors import ConfigurationError, DomainError, ParameterError
from sepapprox.exterior import Variant, build_exterior_mesh
from sepapprox.experiments import homogeneous, radial_ramp
from sepapprox.fem import compliance_resolve_oracle, mixed_boundary_data
from sepapprox.models import (LINEAR, MMA, SMW, SMW_APPROX, SMW_DIAG, TD_CIRC, ModelKind,
                              build_context, corrections, element_table_keys, eval_model,
                              eval_model_full, holder_sector_averages,
                              holder_sector_averages_all, tdnum_equals_smwapprox_check)

ALL = [SMW, SMW_DIAG, SMW_APPROX, TD_CIRC, LINEAR, MMA(0.0)]


@pytest.fixture(scope="module")
def bc():
    return mixed_boundary_data()


@pytest.fixture(scope="module")
def ctx4(mesh4, bc, interior_tables):
    return build_context(mesh4, radial_ramp(mesh4), bc, tables=interior_tables)


def test_kind_parsing():
    assert ModelKind.parse("smwdiag") == SMW_DIAG
    assert ModelKind.parse("MMA(-5)") == MMA(-5)
    assert str(MMA(-10)) == "MMA(-10)"
    for bad in ("foo", "MMA"):
        with pytest.raises(ParameterError):
            ModelKind.parse(bad)
    with pytest.raises(ParameterError):
        ModelKind("SMW", 1.0)


def test_all_models_interpolate_at_expansion_point(ctx4):
    ells = np.flatnonzero(ctx4.mesh.interior_elements)[::17]
    for k in ALL:
        c = corrections(ctx4, k, ells, ctx4.lam.values[ells][:1])
        assert np.allclose(c[0], 0.0)
        assert eval_model(ctx4, k, ells[0], ctx4.lam.values[ells[0]]) == ctx4.compliance


def test_smw_is_exact_including_boundary(ctx4, bc):
    mesh = ctx4.mesh
    for ell in (0, 5, int(np.flatnonzero(mesh.interior_elements)[40]), mesh.n_elements - 1):
        for eta in (1.0, 37.0, 1000.0):
            got = eval_model(ctx4, SMW, ell, eta)
            want = compliance_resolve_oracle(mesh, ctx4.lam, bc, ell, eta)
            assert np.isclose(got, want, rtol=1e-10)


def test_linear_is_affine(ctx4):
    ell = int(np.flatnonzero(ctx4.mesh.interior_elements)[3])
    eta = np.array([1.0, 10.0, 100.0, 1000.0])
    c = corrections(ctx4, LINEAR, [ell], eta)[0]
    slope = np.diff(c) / np.diff(eta)
    assert np.allclose(slope, slope[0])
    g = ctx4.grad[ell]
    assert np.isclose(slope[0], -ctx4.mesh.area[ell] * g @ g)


def test_tdcirc_closed_form(ctx4):
    ell = int(np.flatnonzero(ctx4.mesh.interior_elements)[8])
    lam = ctx4.lam.values[ell]
    eta = 500.0
    g = ctx4.grad[ell]
    want = -ctx4.mesh.area[ell] * (eta - lam) * 2 * lam / (lam + eta) * g @ g
    assert np.isclose(corrections(ctx4, TD_CIRC, [ell], [eta])[0, 0], want)


def _min_sym_eig(G, lam, eta_grid):
    out = np.inf
    for eta in eta_grid:
        M = np.eye(2)[None] - (eta - lam)[:, None, None] * G
        out = min(out, np.linalg.eigvalsh(0.5 * (M + M.swapaxes(1, 2))).min())
    return out


def test_spd_across_eta_range(ctx4, eta_grid):
    ells = np.flatnonzero(ctx4.mesh.interior_elements)
    lam = ctx4.lam.values[ells]
    for k in (SMW, SMW_DIAG, TD_CIRC, LINEAR, MMA(0.0), MMA(-10.0)):
        assert _min_sym_eig(ctx4.gamma_for(k, ells), lam, eta_grid) > 0, k


@pytest.mark.parametrize("field", ["homogeneous", "radial"])
def test_spd_tabulated_model(mesh5, bc, interior_tables, eta_grid, field):
    lam = homogeneous(mesh5, 145.834) if field == "homogeneous" else radial_ramp(mesh5)
    ctx = build_context(mesh5, lam, bc, tables=interior_tables)
    ells = np.flatnonzero(mesh5.interior_elements)
    G = ctx.gamma_for(SMW_APPROX, ells)
    assert _min_sym_eig(G, lam.values[ells], eta_grid) > 0


def test_mma_requires_asymptote_below_bounds(ctx4):
    with pytest.raises(ParameterError):
        corrections(ctx4, MMA(1.0), [0], [2.0])


def test_eta_outside_bounds(ctx4):
    with pytest.raises(ParameterError):
        corrections(ctx4, SMW, [0], [0.5])


def test_full_model_is_sum_of_singles(ctx4):
    ells = np.flatnonzero(ctx4.mesh.interior_elements)[:4]
    eta = ctx4.lam.values.copy()
    eta[ells] = 1000.0
    total = eval_model_full(ctx4, SMW_DIAG, eta)
    singles = sum(eval_model(ctx4, SMW_DIAG, e, 1000.0) - ctx4.compliance for e in ells)
    assert np.isclose(total, ctx4.compliance + singles)
    assert eval_model_full(ctx4, SMW_DIAG, ctx4.lam) == ctx4.compliance


def test_approx_needs_tables(mesh4, bc):
    ctx = build_context(mesh4, homogeneous(mesh4), bc)
    with pytest.raises(ConfigurationError):
        corrections(ctx, SMW_APPROX, [0], [2.0])


def test_approx_uncovered_element(ctx4):
    ell = int(np.flatnonzero(~ctx4.mesh.interior_elements)[0])
    with pytest.raises(DomainError):
        corrections(ctx4, SMW_APPROX, [ell], [2.0])


def test_holder_bounds_and_arithmetic(mesh4, rng):
    vals = rng.uniform(1, 1000, mesh4.n_elements)
    ell = int(np.flatnonzero(mesh4.interior_elements)[12])
    from sepapprox.mesh import sector_weights
    w = sector_weights(mesh4, ell)
    nb = np.array(sorted(w))
    W = np.array([w[t] for t in nb])
    for a in (-1.0, -0.5, 0.5, 2.0):
        s = holder_sector_averages(mesh4, vals, ell, a)
        for j in range(3):
            used = nb[W[:, j] > 0]
            assert vals[used].min() - 1e-9 <= s[j] <= vals[used].max() + 1e-9
    arith = holder_sector_averages(mesh4, vals, ell, 1.0)
    want = (W * vals[nb][:, None]).sum(0) / W.sum(0)
    assert np.allclose(arith, want)
    # increasing in the exponent
    assert np.all(np.array(holder_sector_averages(mesh4, vals, ell, -1.0))
                  <= np.array(holder_sector_averages(mesh4, vals, ell, 1.0)) + 1e-9)
    allv = holder_sector_averages_all(mesh4, vals, -0.5)
    assert np.allclose(allv[ell], holder_sector_averages(mesh4, vals, ell, -0.5))
    with pytest.raises(ParameterError):
        holder_sector_averages_all(mesh4, vals, 0.0)


def test_holder_of_constant(mesh4):
    s = holder_sector_averages_all(mesh4, np.full(mesh4.n_elements, 42.0))
    assert np.allclose(s, 42.0)


def test_table_keys(mesh4):
    keys = element_table_keys(mesh4)
    assert sum(k is not None for k in keys) == mesh4.interior_elements.sum()
    tn = Variant("top", "neumann")
    keys = element_table_keys(mesh4, [tn])
    n_top = sum(k is not None and k[1] == tn for k in keys)
    assert n_top == 2 * (mesh4.n_cells - 2)  # both halves of each top cell, corners excluded


def test_tdnum_equals_smwapprox(mesh4, bc):
    ctx = build_context(mesh4, homogeneous(mesh4, 3.0), bc)
    ext = build_exterior_mesh(30.0, 2)
    ell = int(np.flatnonzero(mesh4.interior_elements & (mesh4.elem_type == 2))[9])
    for eta, s in ((1.0, (2.0, 3.0, 900.0)), (1000.0, (1.0, 1.0, 1.0)), (3.0, None)):
        rep = tdnum_equals_smwapprox_check(ctx, ext, ell, eta, s)
        assert rep.rel_diff < 1e-9
