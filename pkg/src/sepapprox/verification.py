"""Property suites run by ``sepapprox verify`` and the test suite."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exterior import SectorMaterials, Variant, build_exterior_mesh, gamma_hat, polarization_hat
from .fem import compliance_resolve_oracle, solve_1d_models
from .mesh import build_structured_mesh
from .models import (LINEAR, MMA, SMW, SMW_APPROX, SMW_DIAG, TD_CIRC, build_context,
                     corrections)
from .tables import equilibrated_nodes, interpolate_gamma

log = logging.getLogger(__name__)

REFERENCE_NODES = (1.0, 1.252, 1.590, 2.050, 2.688, 3.596, 4.921, 6.917, 10.035, 15.127,
                   23.901, 40.072, 72.563, 145.834, 340.187, 1000.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metric: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.metric:.3e} (tol {self.tolerance:.1e})"


def smw_exactness(mesh, bc, nodes, elements=None, tol=1e-8):
    """Exact SMW model against fresh re-solves at every node value."""
    from .experiments import homogeneous

    lam = homogeneous(mesh, 1.0, nodes.lb, nodes.ub)
    ctx = build_context(mesh, lam, bc)
    if elements is None:
        elements = np.flatnonzero(mesh.interior_elements)
    worst = 0.0
    for ell in elements:
        model = ctx.compliance + corrections(ctx, SMW, [ell], nodes.nodes)[0]
        orc = np.array([compliance_resolve_oracle(mesh, lam, bc, ell, e) for e in nodes.nodes])
        spread = np.ptp(orc)
        worst = max(worst, float(np.abs(model - orc).max() / spread))
    return SuiteResult("smw-exactness", worst <= tol, worst, tol,
                       {"elements": int(len(elements)), "n_ref": mesh.n_ref})


def polarization_identity(ext, nodes, n_cases=50, rng=None, table=None, tol=1e-9):
    """Fresh weak polarization matrices against the rational Gamma-hat form.

    With ``table`` the Gamma-hat comes from the table at node tuples, so a
    corrupted table fails this suite."""
    rng = np.random.default_rng(rng)
    v = nodes.nodes
    worst_p = worst_i = 0.0
    eye = np.eye(2)
    for _ in range(n_cases):
        if table is None:
            lam_out = np.exp(rng.uniform(np.log(v[0]), np.log(v[-1]), size=4))
            lam_in = float(np.exp(rng.uniform(np.log(v[0]), np.log(v[-1]))))
            mats = SectorMaterials(lam_out[0], tuple(lam_out[1:]))
            G = gamma_hat(ext, mats)
        else:
            idx = rng.integers(0, len(v), size=4)
            lam_in = float(v[rng.integers(0, len(v))])
            mats = SectorMaterials(v[idx[0]], tuple(v[idx[1:]]))
            G = interpolate_gamma(table, v[idx])
        d = lam_in - mats.lam_hat
        P = polarization_hat(ext, mats, lam_in)
        inv = np.linalg.inv(eye - d * G)
        worst_p = max(worst_p, np.abs(P - d * G @ inv).max())
        worst_i = max(worst_i, np.abs(eye + P - inv).max())
    worst = max(worst_p, worst_i)
    return SuiteResult("polarization-identity", worst <= tol, float(worst), tol,
                       {"cases": n_cases, "P": float(worst_p), "I+P": float(worst_i),
                        "source": "fresh" if table is None else "table"})


def tdnum_equivalence(ctx, ext, n_cases=20, rng=None, tol=1e-9):
    from .models import tdnum_equals_smwapprox_check

    rng = np.random.default_rng(rng)
    lb, ub = ctx.lam.bounds
    cands = np.flatnonzero(ctx.mesh.interior_elements & (ctx.mesh.elem_type == ext.elem_type))
    worst = 0.0
    for _ in range(n_cases):
        ell = int(rng.choice(cands))
        eta = float(np.exp(rng.uniform(np.log(lb), np.log(ub))))
        sectors = tuple(np.exp(rng.uniform(np.log(lb), np.log(ub), size=3)))
        rep = tdnum_equals_smwapprox_check(ctx, ext, ell, eta, sectors)
        worst = max(worst, rep.rel_diff)
    return SuiteResult("tdnum-equivalence", worst <= tol, float(worst), tol,
                       {"cases": n_cases})


def gradient_consistency(mesh, bc, tables=None, elements=None, lam0=10.0, step=1e-3,
                         tol=1e-5):
    """Every model's slope at the expansion point against central finite
    differences of the re-solved compliance."""
    from .experiments import homogeneous

    lam = homogeneous(mesh, lam0)
    ctx = build_context(mesh, lam, bc, tables=tables)
    kinds = [SMW, SMW_DIAG, TD_CIRC, LINEAR, MMA(0.0)]
    if tables:
        kinds.insert(2, SMW_APPROX)
    if elements is None:
        inner = np.flatnonzero(mesh.interior_elements)
        elements = inner[np.linspace(0, len(inner) - 1, 5).astype(int)]
    hstep = step * lam0
    worst = 0.0
    per_kind = {}
    for ell in elements:
        jp = compliance_resolve_oracle(mesh, lam, bc, ell, lam0 + hstep)
        jm = compliance_resolve_oracle(mesh, lam, bc, ell, lam0 - hstep)
        fd = (jp - jm) / (2 * hstep)
        for k in kinds:
            if k == SMW_APPROX and not ctx.approx_available()[ell]:
                continue
            cp, cm = corrections(ctx, k, [ell], [lam0 + hstep, lam0 - hstep])[0]
            slope = (cp - cm) / (2 * hstep)
            err = abs(slope - fd) / abs(fd)
            per_kind[str(k)] = max(per_kind.get(str(k), 0.0), err)
            worst = max(worst, err)
    return SuiteResult("gradient-consistency", worst <= tol, float(worst), tol,
                       {"kinds": per_kind})


def diagonal_1d(m=20, pairs=((1.0, 1000.0), (1000.0, 1.0)), tol=1e-12):
    worst = 0.0
    for lo, li in pairs:
        r = solve_1d_models(m, lo, li)
        e1 = np.abs(r["gamma_diag"] - r["expected_gamma_diag"]).max() * lo
        # the correction can dwarf J itself, so it sets the scale
        scale = max(abs(r["compliance"]), np.abs(r["closed_form"] - r["compliance"]).max())
        e2 = np.abs(r["smwdiag"] - r["closed_form"]).max() / scale
        e3 = np.abs(r["smwdiag"] - r["td_model"]).max() / scale
        worst = max(worst, e1, e2, e3)
    return SuiteResult("one-dimensional-diagonal", worst <= tol, float(worst), tol)


def node_equilibration(N=16, tol_abs=0.002, tol_rel=1e-3):
    ns = equilibrated_nodes(N, 1.0, 1000.0, -0.5)
    errs = ns.interval_errors()
    spread = float(np.ptp(errs) / errs.mean())
    ok = spread < 1e-9
    worst = 0.0
    if N == len(REFERENCE_NODES):
        for got, ref in zip(ns.nodes, REFERENCE_NODES):
            bad = abs(got - ref) / (tol_abs if ref < 10 else tol_rel * ref)
            worst = max(worst, bad)
        ok &= worst <= 1.0
    return SuiteResult("node-equilibration", bool(ok), worst, 1.0,
                       {"nodes": ns.nodes.tolist(), "error_spread": spread})


def run_all(n_ref=4, tables=None, bc=None, rng=0, exterior_R=30.0):
    """Run every suite; ``tables`` maps (type, Variant) to loaded tables."""
    from .experiments import boundary_data

    bc = bc or boundary_data("mixed")
    mesh = build_structured_mesh(n_ref)
    nodes = equilibrated_nodes(16)
    results = [node_equilibration(), diagonal_1d(), smw_exactness(mesh, bc, nodes)]
    ext = build_exterior_mesh(R=exterior_R, elem_type=1)
    table = (tables or {}).get((1, Variant()))
    results.append(polarization_identity(ext, table.nodes if table else nodes, n_cases=50,
                                         rng=rng, table=table))
    from .experiments import homogeneous
    ctx = build_context(mesh, homogeneous(mesh), bc)
    results.append(tdnum_equivalence(ctx, ext, n_cases=20, rng=rng))
    results.append(gradient_consistency(mesh, bc, tables=tables))
    return results
