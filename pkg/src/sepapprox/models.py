"""Separable single-element models of the compliance.

Every model kind shares the form

    J_hat(eta) = J(lam) - |T| (eta - lam_l) g^T (I - (eta - lam_l) Gamma)^{-1} g

with ``g`` the state gradient on the element; the kinds differ only in the
2x2 matrix ``Gamma``: exact, diagonal-stiffness surrogate, interpolated
exterior-problem surrogate, ``-I / (2 lam_l)`` (circular inclusion), zero
(linearization) or ``I / (L - lam_l)`` (moving asymptote ``L``).
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigurationError, DomainError, ParameterError, SingularSystemError
from .exterior import SectorMaterials, Variant, gamma_hat, polarization_hat
from .fem import MaterialField, assemble, diag_gamma_all, exact_gamma, exact_gamma_all, solve_state
from .mesh import EDGE_TAGS, _side_mask, sector_weight_matrices
from .tables import interpolate_gamma_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelKind:
    name: str
    L: Optional[float] = None

    NAMES = ("SMW", "SMWdiag", "SMWapprox", "TDcirc", "Linear", "MMA")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ParameterError(f"unknown model kind {self.name!r}")
        if (self.name == "MMA") != (self.L is not None):
            raise ParameterError("the asymptote L is required for MMA and only for MMA")

    @classmethod
    def parse(cls, text):
        text = text.strip()
        m = re.fullmatch(r"MMA[(:]\s*([-+0-9.eE]+)\)?", text)
        if m:
            return cls("MMA", float(m.group(1)))
        for n in cls.NAMES:
            if text.lower() == n.lower():
                return cls(n)
        raise ParameterError(f"unknown model kind {text!r}")

    def __str__(self):
        return f"MMA({self.L:g})" if self.name == "MMA" else self.name


SMW = ModelKind("SMW")
SMW_DIAG = ModelKind("SMWdiag")
SMW_APPROX = ModelKind("SMWapprox")
TD_CIRC = ModelKind("TDcirc")
LINEAR = ModelKind("Linear")


def MMA(L):
    return ModelKind("MMA", float(L))


# ------------------------------------------------------------ sector averages

def _sector_matrices(mesh):
    W = getattr(mesh, "_sector_W", None)
    if W is None:
        W = [w.tocsr() for w in sector_weight_matrices(mesh)]
        mesh._sector_W = W
    return W


def holder_sector_averages_all(mesh, lam_values, alpha=-0.5):
    """(m, 3) weighted Hoelder means of the neighbour values per sector.

    Sectors without any neighbour area fall back to the element's own value.
    """
    if alpha == 0:
        raise ParameterError("Hoelder exponent must be non-zero")
    lam_values = np.asarray(lam_values, dtype=float)
    out = np.empty((mesh.n_elements, 3))
    n_empty = 0
    for j, W in enumerate(_sector_matrices(mesh)):
        means, empty = kernels.holder_means(W.indptr, W.indices, W.data, lam_values,
                                            float(alpha), lam_values)
        out[:, j] = means
        n_empty += int(empty.sum())
    if n_empty:
        log.info("%d empty sectors fell back to the element value", n_empty)
    return out


def holder_sector_averages(mesh, lam, ell, alpha=-0.5):
    values = lam.values if isinstance(lam, MaterialField) else np.asarray(lam, float)
    if alpha == 0:
        raise ParameterError("Hoelder exponent must be non-zero")
    out = []
    for W in _sector_matrices(mesh):
        lo, hi = W.indptr[ell], W.indptr[ell + 1]
        w, idx = W.data[lo:hi], W.indices[lo:hi]
        if w.sum() <= 0.0:
            log.info("element %d: empty sector, using its own value", ell)
            out.append(float(values[ell]))
        else:
            out.append(float((np.dot(w, values[idx] ** alpha) / w.sum()) ** (1.0 / alpha)))
    return tuple(out)


# ------------------------------------------------------------------ context

def element_table_keys(mesh, boundary_tables=()):
    """Per element, the (type, Variant) of the table that models it, or None.

    Interior elements use the disk table.  An element touching exactly one
    side uses the half-disk table of that side if its variant is listed in
    ``boundary_tables``; corner elements are never covered.
    """
    touch = np.column_stack([_side_mask(mesh.vertices, t)[mesh.elements].any(axis=1)
                             for t in EDGE_TAGS])
    keys = []
    by_edge = {v.edge: v for v in boundary_tables}
    for ell in range(mesh.n_elements):
        et = int(mesh.elem_type[ell])
        n = int(touch[ell].sum())
        if n == 0:
            keys.append((et, Variant()))
        elif n == 1 and EDGE_TAGS[int(np.argmax(touch[ell]))] in by_edge:
            keys.append((et, by_edge[EDGE_TAGS[int(np.argmax(touch[ell]))]]))
        else:
            keys.append(None)
    return keys


@dataclass(eq=False)
class ModelContext:
    """Expansion point and all per-element model data."""
    mesh: object
    lam: MaterialField
    bc: object
    system: object
    state: object
    alpha: float = -0.5
    tables: dict = field(default_factory=dict)      # (type, Variant) -> GammaTable
    _exact: Optional[np.ndarray] = field(default=None, repr=False)
    _exact_partial: dict = field(default_factory=dict, repr=False)
    _diag: Optional[np.ndarray] = field(default=None, repr=False)
    _sectors: Optional[np.ndarray] = field(default=None, repr=False)
    _approx: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def compliance(self):
        return self.state.compliance

    @property
    def grad(self):
        return self.state.grad

    def exact_gamma(self, ells=None):
        if ells is None:
            if self._exact is None:
                self._exact = exact_gamma_all(self.system)
            return self._exact
        ells = np.atleast_1d(ells)
        if self._exact is not None:
            return self._exact[ells]
        out = np.empty((len(ells), 2, 2))
        for i, ell in enumerate(ells):
            ell = int(ell)
            if ell not in self._exact_partial:
                self._exact_partial[ell] = exact_gamma(self.system, ell)
            out[i] = self._exact_partial[ell]
        return out

    def diag_gamma(self):
        if self._diag is None:
            self._diag = diag_gamma_all(self.system)
        return self._diag

    def sector_averages(self):
        if self._sectors is None:
            self._sectors = holder_sector_averages_all(self.mesh, self.lam.values, self.alpha)
        return self._sectors

    def approx_gamma(self):
        """Interpolated Gamma-hat per element; NaN where no table applies."""
        if self._approx is None:
            if not self.tables:
                raise ConfigurationError("SMWapprox needs Gamma-hat tables; run "
                                         "`sepapprox precompute` first")
            boundary = [v for (_, v) in self.tables if not v.interior]
            keys = element_table_keys(self.mesh, boundary)
            out = np.full((self.mesh.n_elements, 2, 2), np.nan)
            q = np.column_stack([self.lam.values, self.sector_averages()])
            for key in set(k for k in keys if k is not None):
                if key not in self.tables:
                    continue
                sel = np.array([k == key for k in keys])
                out[sel] = interpolate_gamma_batch(self.tables[key], q[sel])
            self._approx = out
        return self._approx

    def approx_available(self):
        return ~np.isnan(self.approx_gamma()[:, 0, 0])

    def gamma_for(self, kind, ells):
        ells = np.atleast_1d(np.asarray(ells, dtype=int))
        lam_l = self.lam.values[ells]
        eye = np.eye(2)[None]
        if kind.name == "SMW":
            return self.exact_gamma(ells)
        if kind.name == "SMWdiag":
            return self.diag_gamma()[ells]
        if kind.name == "SMWapprox":
            G = self.approx_gamma()[ells]
            if np.isnan(G).any():
                bad = ells[np.isnan(G[:, 0, 0])]
                raise DomainError(f"no Gamma-hat table covers element(s) {bad[:5].tolist()}")
            return G
        if kind.name == "TDcirc":
            return -eye / (2.0 * lam_l)[:, None, None]
        if kind.name == "Linear":
            return np.zeros((len(ells), 2, 2))
        if kind.name == "MMA":
            if not kind.L < self.lam.bounds[0]:
                raise ParameterError(f"MMA asymptote L={kind.L} must lie below "
                                     f"the lower bound {self.lam.bounds[0]}")
            return eye / (kind.L - lam_l)[:, None, None]
        raise ParameterError(f"unknown model kind {kind}")


def build_context(mesh, lam, bc, tables=None, alpha=-0.5):
    if not isinstance(lam, MaterialField):
        raise ParameterError("expansion point must be a MaterialField")
    system = assemble(mesh, lam, bc)
    state = solve_state(system)
    return ModelContext(mesh=mesh, lam=lam, bc=bc, system=system, state=state,
                        alpha=alpha, tables=dict(tables or {}))


def _check_eta(ctx, eta):
    lb, ub = ctx.lam.bounds
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < lb - 1e-12 * ub) or np.any(eta > ub * (1 + 1e-12)):
        raise ParameterError(f"eta outside [{lb}, {ub}]")
    return eta


def corrections(ctx, kind, ells, etas):
    """Model corrections ``J_hat - J`` for every element in ``ells`` and
    every value in ``etas``; shape (len(ells), len(etas))."""
    ells = np.atleast_1d(np.asarray(ells, dtype=int))
    etas = _check_eta(ctx, np.atleast_1d(etas))
    G = ctx.gamma_for(kind, ells).reshape(-1, 4)
    ne = len(etas)
    delta = (etas[None, :] - ctx.lam.values[ells][:, None]).ravel()
    c = kernels.rational_correction(np.repeat(G, ne, axis=0),
                                    np.repeat(ctx.grad[ells], ne, axis=0),
                                    np.repeat(ctx.mesh.area[ells], ne), delta)
    if not np.all(np.isfinite(c)):
        raise SingularSystemError(f"singular 2x2 system in model {kind}")
    return c.reshape(len(ells), ne)


def eval_model(ctx, kind, ell, eta):
    return float(ctx.compliance + corrections(ctx, kind, [ell], [eta])[0, 0])


def eval_model_full(ctx, kind, eta_vec):
    """Separable model at a full design: ``J + sum of single-element
    corrections``."""
    eta = eta_vec.values if isinstance(eta_vec, MaterialField) else np.asarray(eta_vec, float)
    if len(eta) != ctx.mesh.n_elements:
        raise ParameterError("design length does not match the mesh")
    changed = np.flatnonzero(eta != ctx.lam.values)
    if len(changed) == 0:
        return float(ctx.compliance)
    _check_eta(ctx, eta[changed])
    G = ctx.gamma_for(kind, changed).reshape(-1, 4)
    delta = eta[changed] - ctx.lam.values[changed]
    c = kernels.rational_correction(G, ctx.grad[changed], ctx.mesh.area[changed], delta)
    return float(ctx.compliance + c.sum())


# -------------------------------------------------------------- identities

@dataclass
class TDnumReport:
    ell: int
    eta: float
    sectors: tuple
    smwapprox: float
    tdnum: float
    rel_diff: float


def tdnum_equals_smwapprox_check(ctx, ext, ell, eta, sectors=None, tol=1e-9):
    """Evaluate the topological-derivative model (through the corrector's
    polarization matrix) and the exterior-Gamma SMW model with freshly solved
    exterior data, and compare them."""
    lam_l = float(ctx.lam.values[ell])
    if sectors is None:
        sectors = tuple(ctx.sector_averages()[ell])
    mats = SectorMaterials(lam_l, tuple(float(s) for s in sectors))
    g = ctx.grad[ell]
    area = ctx.mesh.area[ell]
    delta = eta - lam_l
    G = gamma_hat(ext, mats)
    smw = ctx.compliance - area * delta * g @ np.linalg.solve(np.eye(2) - delta * G, g)
    if delta == 0.0:
        td = ctx.compliance
    else:
        P = polarization_hat(ext, mats, eta)
        td = ctx.compliance - area * delta * g @ (np.eye(2) + P) @ g
    scale = max(abs(smw - ctx.compliance), abs(td - ctx.compliance), 1e-300)
    rel = abs(smw - td) / scale if smw != td else 0.0
    return TDnumReport(ell=int(ell), eta=float(eta), sectors=tuple(sectors),
                       smwapprox=float(smw), tdnum=float(td), rel_diff=float(rel))
