"""Accuracy and decision studies for the separable models."""
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariationError, ParameterError
from .fem import (MaterialField, compliance, compliance_resolve_oracle,
                  dirichlet_boundary_data, mixed_boundary_data)
from .mesh import EDGE_TAGS, _side_mask
from .models import SMW, SMW_APPROX, build_context, corrections

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- scenarios

BOUNDARY_SCENARIOS = {
    "mixed": mixed_boundary_data,
    "dirichlet": dirichlet_boundary_data,
}


def boundary_data(name):
    try:
        return BOUNDARY_SCENARIOS[name]()
    except KeyError:
        raise ParameterError(f"unknown boundary scenario {name!r}; "
                             f"choose from {sorted(BOUNDARY_SCENARIOS)}") from None


def radial_ramp(mesh, r1=0.15, r2=0.35, center=(0.5, 0.5), lb=1.0, ub=1000.0):
    """Strong material inside ``r1``, weak outside ``r2``, linear in between;
    sampled at element centroids."""
    if not 0 <= r1 < r2:
        raise ParameterError("need 0 <= r1 < r2")
    r = np.linalg.norm(mesh.centroid - np.asarray(center), axis=1)
    t = np.clip((r - r1) / (r2 - r1), 0.0, 1.0)
    return MaterialField(ub - t * (ub - lb), bounds=(lb, ub))


def homogeneous(mesh, value=1.0, lb=1.0, ub=1000.0):
    return MaterialField.constant(mesh.n_elements, value, bounds=(lb, ub))


def default_eta_grid(nodes, refine=4):
    """The interpolation nodes with every interval split into ``refine``
    equal parts."""
    return nodes.refined(refine)


# ------------------------------------------------------------ error measure

def _relative(model, ref):
    spread = ref.max(axis=-1) - ref.min(axis=-1)
    return np.abs(model - ref).max(axis=-1), spread


def model_curve(ctx, kind, ell, eta_grid, with_oracle=False):
    vals = ctx.compliance + corrections(ctx, kind, [ell], eta_grid)[0]
    if not with_oracle:
        return list(zip(map(float, eta_grid), map(float, vals)))
    orc = [compliance_resolve_oracle(ctx.mesh, ctx.lam, ctx.bc, ell, e) for e in eta_grid]
    return list(zip(map(float, eta_grid), map(float, vals), map(float, orc)))


def delta_error(ctx, kind, ell, eta_grid, reference="oracle"):
    """Max deviation of the model from the exact single-element compliance
    over ``eta_grid``, relative to the spread of the exact values."""
    eta_grid = np.asarray(eta_grid, dtype=float)
    lb, ub = ctx.lam.bounds
    if eta_grid.min() > lb or eta_grid.max() < ub:
        raise ParameterError("eta grid must contain both material bounds")
    model = ctx.compliance + corrections(ctx, kind, [ell], eta_grid)[0]
    if reference == "oracle":
        ref = np.array([compliance_resolve_oracle(ctx.mesh, ctx.lam, ctx.bc, ell, e)
                        for e in eta_grid])
    elif reference == "smw":
        ref = ctx.compliance + corrections(ctx, SMW, [ell], eta_grid)[0]
    else:
        raise ParameterError(f"unknown reference {reference!r}")
    err, spread = _relative(model, ref)
    if spread <= 1e-14 * abs(ctx.compliance):
        raise DegenerateVariationError(f"element {ell}: compliance variation {spread:.3e} "
                                       "is too small")
    return float(err / spread)


def delta_errors(ctx, kind, ells, eta_grid):
    """Vectorized delta for many elements against the exact SMW model."""
    ref = corrections(ctx, SMW, ells, eta_grid)
    model = corrections(ctx, kind, ells, eta_grid)
    err, spread = _relative(model, ref)
    bad = spread <= 1e-14 * abs(ctx.compliance)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(bad, np.nan, err / np.where(bad, 1.0, spread))
    return out


@dataclass
class ErrorMap:
    kind: str
    delta: np.ndarray              # per element, NaN where excluded
    centroid: np.ndarray
    eta_grid: np.ndarray
    descriptor: dict = field(default_factory=dict)

    @property
    def included(self):
        return ~np.isnan(self.delta)

    def max(self):
        return float(np.nanmax(self.delta))

    def argmax(self):
        return int(np.nanargmax(self.delta))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "cx", "cy", "delta"])
            for i in np.flatnonzero(self.included):
                w.writerow([int(i), f"{self.centroid[i, 0]:.12g}",
                            f"{self.centroid[i, 1]:.12g}", f"{self.delta[i]:.12g}"])


def error_map(ctx, kind, eta_grid, elements=None):
    """delta for every selected element (default: all interior elements)."""
    mesh = ctx.mesh
    if elements is None:
        elements = np.flatnonzero(mesh.interior_elements)
    elements = np.asarray(elements, dtype=int)
    delta = np.full(mesh.n_elements, np.nan)
    delta[elements] = delta_errors(ctx, kind, elements, eta_grid)
    return ErrorMap(kind=str(kind), delta=delta, centroid=mesh.centroid,
                    eta_grid=np.asarray(eta_grid))


# ------------------------------------------------------------ binary step

@dataclass
class BinaryDesign:
    values: np.ndarray
    omega: float
    decided: np.ndarray            # elements the model could decide
    kind: str = ""

    @property
    def n_strong(self):
        return int(np.sum(self.decided & (self.values == self.values.max())))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "value", "decided"])
            for i, (v, d) in enumerate(zip(self.values, self.decided)):
                w.writerow([i, f"{v:g}", int(d)])


def volume(mesh, values, lb, ub):
    return float(np.sum(mesh.area * (np.asarray(values) - lb) / (ub - lb)))


def augmented_cost(mesh, values, bc, omega, bounds=(1.0, 1000.0)):
    lam = MaterialField(values, bounds)
    return compliance(mesh, lam, bc) + omega * volume(mesh, values, *bounds)


def binary_step(ctx, kind, omega, elements=None):
    """Pick, element by element, the bound minimizing the single-element
    model of the volume-augmented cost; ties go to the weak material.

    ``elements`` defaults to every element the model covers (tabulated
    models skip elements without a matching table).  Undecided elements keep
    their current value.
    """
    if omega < 0:
        raise ParameterError("omega must be non-negative")
    mesh = ctx.mesh
    lb, ub = ctx.lam.bounds
    if elements is None:
        if kind == SMW_APPROX:
            elements = np.flatnonzero(~np.isnan(ctx.approx_gamma()[:, 0, 0]))
        else:
            elements = np.arange(mesh.n_elements)
    ells = np.asarray(elements, dtype=int)
    c = corrections(ctx, kind, ells, [lb, ub])
    frac = (np.array([lb, ub]) - lb) / (ub - lb)
    vol = mesh.area[ells, None] * (frac[None, :] - ((ctx.lam.values[ells] - lb) / (ub - lb))[:, None])
    cost = c + omega * vol
    values = ctx.lam.values.copy()
    values[ells] = np.where(cost[:, 1] < cost[:, 0], ub, lb)
    decided = np.zeros(mesh.n_elements, dtype=bool)
    decided[ells] = True
    return BinaryDesign(values=values, omega=float(omega), decided=decided, kind=str(kind))


def decision_diff(a, b, mesh, interior_only=True):
    if len(a.values) != mesh.n_elements or len(b.values) != mesh.n_elements:
        raise ParameterError("designs do not match the mesh")
    diff = (a.values != b.values) & a.decided & b.decided
    if interior_only:
        diff &= mesh.interior_elements
    return int(diff.sum())


@dataclass
class FlipReport:
    sample: np.ndarray
    base_cost: float
    flipped_cost: np.ndarray

    @property
    def improvements(self):
        return int(np.sum(self.flipped_cost < self.base_cost - 1e-12 * abs(self.base_cost)))


def single_switch_check(ctx, design, sample, omega):
    """True augmented cost of switching each sampled element alone, starting
    from the expansion point, to the value the design gave it and to the other
    bound.  Returns (cost of the chosen value, cost of the rejected value)."""
    lb, ub = ctx.lam.bounds
    chosen, rejected = [], []
    for ell in sample:
        for target, bucket in ((design.values[ell], chosen),
                               (lb + ub - design.values[ell], rejected)):
            v = ctx.lam.values.copy()
            v[ell] = target
            bucket.append(augmented_cost(ctx.mesh, v, ctx.bc, omega, (lb, ub)))
    return np.array(chosen), np.array(rejected)


def flip_output_check(ctx, design, sample, omega):
    """True augmented cost of the design and of the design with each sampled
    element flipped."""
    lb, ub = ctx.lam.bounds
    base = augmented_cost(ctx.mesh, design.values, ctx.bc, omega, (lb, ub))
    out = []
    for ell in sample:
        v = design.values.copy()
        v[ell] = lb + ub - v[ell]
        out.append(augmented_cost(ctx.mesh, v, ctx.bc, omega, (lb, ub)))
    return FlipReport(sample=np.asarray(sample), base_cost=base, flipped_cost=np.array(out))


# ------------------------------------------------------------ sweeps

def alpha_sweep(mesh, lam, bc, tables, alphas, eta_grid):
    """Max interior delta of SMWapprox for each Hoelder exponent."""
    out = {}
    base = build_context(mesh, lam, bc, tables=tables)
    exact = base.exact_gamma()
    for a in alphas:
        ctx = build_context(mesh, lam, bc, tables=tables, alpha=a)
        ctx._exact = exact
        out[float(a)] = error_map(ctx, SMW_APPROX, eta_grid).max()
    return out


def top_boundary_elements(mesh, side="top"):
    """Elements touching ``side`` and no other side."""
    touch = np.column_stack([_side_mask(mesh.vertices, t)[mesh.elements].any(axis=1)
                             for t in EDGE_TAGS])
    k = EDGE_TAGS.index(side)
    return np.flatnonzero(touch[:, k] & (touch.sum(axis=1) == 1))


@dataclass
class BoundaryComparison:
    elements: np.ndarray
    delta_without: np.ndarray
    delta_with: np.ndarray
    interior_without: np.ndarray
    interior_with: np.ndarray

    @property
    def max_without(self):
        return float(np.nanmax(self.delta_without))

    @property
    def max_with(self):
        return float(np.nanmax(self.delta_with))


def boundary_comparison(mesh, lam, bc, interior_tables, boundary_tables, eta_grid,
                        side="top"):
    """SMWapprox delta on elements touching ``side``, modelled with the disk
    tables (as if they were interior) and with the half-disk tables."""
    from .errors import ConfigurationError
    from .exterior import Variant

    if not boundary_tables:
        raise ConfigurationError("boundary comparison needs half-disk tables; run "
                                 "`sepapprox precompute --variant top-neumann`")
    ells = top_boundary_elements(mesh, side)
    ctx_with = build_context(mesh, lam, bc, tables={**interior_tables, **boundary_tables})
    G_with = ctx_with.approx_gamma()
    if np.isnan(G_with[ells]).any():
        raise ConfigurationError(f"half-disk tables do not cover the {side} side")
    # without: the same elements looked up in the disk tables
    ctx_without = build_context(mesh, lam, bc, tables=interior_tables)
    ctx_without._exact = ctx_with.exact_gamma()
    from .tables import interpolate_gamma_batch
    q = np.column_stack([lam.values, ctx_without.sector_averages()])
    G_without = ctx_without.approx_gamma().copy()
    for et in (1, 2):
        sel = ells[mesh.elem_type[ells] == et]
        G_without[sel] = interpolate_gamma_batch(interior_tables[(et, Variant())], q[sel])
    ctx_without._approx = G_without
    inter = np.flatnonzero(mesh.interior_elements)
    return BoundaryComparison(
        elements=ells,
        delta_without=delta_errors(ctx_without, SMW_APPROX, ells, eta_grid),
        delta_with=delta_errors(ctx_with, SMW_APPROX, ells, eta_grid),
        interior_without=delta_errors(ctx_without, SMW_APPROX, inter, eta_grid),
        interior_with=delta_errors(ctx_with, SMW_APPROX, inter, eta_grid),
    )
