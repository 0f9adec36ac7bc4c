"""P1 finite elements for the stationary heat equation on structured meshes.

The stiffness matrix is written as ``K(lam) = sum_l lam_l B_l B_l^T`` with
``B_l = Btilde_l D_l``.  Dirichlet nodes are eliminated symmetrically, which
for homogeneous data is the same as zeroing their rows and columns and putting
a one on the diagonal; the factorization acts on the free block only.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterError, SingularSystemError
from .mesh import Mesh1D, _side_mask

GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass
class MaterialField:
    values: np.ndarray
    bounds: tuple = (1.0, 1000.0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        lb, ub = self.bounds
        if not 0.0 < lb <= ub:
            raise ParameterError(f"invalid bounds {self.bounds}")
        if np.any(self.values <= 0.0):
            raise ParameterError("conductivities must be positive")
        tol = 1e-12 * ub
        if np.any(self.values < lb - tol) or np.any(self.values > ub + tol):
            raise ParameterError("conductivities outside bounds")

    @classmethod
    def constant(cls, m, value, bounds=(1.0, 1000.0)):
        return cls(np.full(m, float(value)), bounds)

    def perturbed(self, ell, eta):
        v = self.values.copy()
        v[ell] = eta
        return MaterialField(v, self.bounds)

    def __len__(self):
        return len(self.values)


@dataclass
class BoundaryData:
    """Boundary and source data.

    ``dirichlet`` and ``neumann`` map side tags ('left', 'bottom', 'right',
    'top'; in 1D 'left' and 'right') to functions of the coordinates.
    """
    dirichlet: dict
    neumann: dict = field(default_factory=dict)
    source: Callable = lambda *x: np.ones_like(x[0])

    def __post_init__(self):
        if not self.dirichlet:
            raise SingularSystemError("pure Neumann problem: Dirichlet set is empty")
        overlap = set(self.dirichlet) & set(self.neumann)
        if overlap:
            raise ParameterError(f"sides {sorted(overlap)} are both Dirichlet and Neumann")


def mixed_boundary_data():
    """Dirichlet zero on left/bottom, flux x*y on right/top, unit source."""
    zero = lambda x, y: np.zeros_like(x)
    flux = lambda x, y: x * y
    return BoundaryData(
        dirichlet={"left": zero, "bottom": zero},
        neumann={"right": flux, "top": flux},
        source=lambda x, y: np.ones_like(x),
    )


def dirichlet_boundary_data():
    """Dirichlet zero on all four sides, unit source."""
    zero = lambda x, y: np.zeros_like(x)
    return BoundaryData(dirichlet={t: zero for t in ("left", "bottom", "right", "top")},
                        source=lambda x, y: np.ones_like(x))


def unit_interval_data():
    zero = lambda x: np.zeros_like(x)
    return BoundaryData(dirichlet={"left": zero, "right": zero},
                        source=lambda x: np.ones_like(x))


@dataclass(eq=False)
class AssembledSystem:
    mesh: object
    lam: MaterialField
    K: sp.csc_matrix          # full matrix with Dirichlet rows/cols replaced
    f: np.ndarray
    free: np.ndarray          # boolean mask of non-Dirichlet nodes
    u_dirichlet: np.ndarray
    _lu: object = field(default=None, repr=False)
    _free_index: np.ndarray = field(default=None, repr=False)

    @property
    def K_free(self):
        return self.K[self.free][:, self.free].tocsc()

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.K_free, permc_spec="MMD_AT_PLUS_A",
                                     diag_pivot_thresh=0.0,
                                     options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise SingularSystemError(str(exc)) from exc
        return self._lu

    @property
    def free_index(self):
        """Map global node -> row in the free block (-1 for Dirichlet)."""
        if self._free_index is None:
            idx = np.full(len(self.free), -1)
            idx[self.free] = np.arange(self.free.sum())
            self._free_index = idx
        return self._free_index

    def solve_free(self, rhs):
        x = self.lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite solution")
        return x


@dataclass(eq=False)
class StateSolution:
    u: np.ndarray
    compliance: float
    grad: np.ndarray      # (m, d) constant gradient per element


def _local_stiffness(mesh):
    return np.einsum("mad,mbd->mab", mesh.D, mesh.D)


def stiffness_matrix(mesh, lam_values):
    """Unconstrained ``sum_l lam_l B_l B_l^T`` as a CSC matrix."""
    Kloc = np.asarray(lam_values)[:, None, None] * _local_stiffness(mesh)
    k = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_vertices
    return sp.csc_matrix((Kloc.ravel(), (rows, cols)), shape=(n, n))


def _load_2d(mesh, bc):
    f = np.zeros(mesh.n_vertices)
    coords = mesh.vertices[mesh.elements]
    # edge-midpoint rule, exact for quadratics
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        mij = 0.5 * (coords[:, i] + coords[:, j])
        mik = 0.5 * (coords[:, i] + coords[:, k])
        val = mesh.area / 3.0 * 0.5 * (bc.source(mij[:, 0], mij[:, 1])
                                       + bc.source(mik[:, 0], mik[:, 1]))
        np.add.at(f, mesh.elements[:, i], val)
    for tag, g in bc.neumann.items():
        sel = mesh.boundary_edge_tag == tag
        edges = mesh.boundary_edges[sel]
        a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
        length = np.linalg.norm(b - a, axis=1)
        for s in GAUSS2:
            q = a + s * (b - a)
            gq = g(q[:, 0], q[:, 1]) * length * 0.5
            np.add.at(f, edges[:, 0], gq * (1.0 - s))
            np.add.at(f, edges[:, 1], gq * s)
    return f


def _load_1d(mesh, bc):
    f = np.zeros(mesh.n_vertices)
    x0, x1 = mesh.vertices[:-1], mesh.vertices[1:]
    for s in GAUSS2:
        q = x0 + s * (x1 - x0)
        val = bc.source(q) * mesh.area * 0.5
        f[:-1] += val * (1.0 - s)
        f[1:] += val * s
    for tag, g in bc.neumann.items():
        node = 0 if tag == "left" else mesh.n_vertices - 1
        f[node] += float(g(np.array([mesh.vertices[node]]))[0])
    return f


def _dirichlet_nodes(mesh, bc):
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    values = np.zeros(mesh.n_vertices)
    for tag, g in bc.dirichlet.items():
        if isinstance(mesh, Mesh1D):
            sel = np.zeros(mesh.n_vertices, dtype=bool)
            sel[0 if tag == "left" else -1] = True
            values[sel] = g(mesh.vertices[sel])
        else:
            sel = _side_mask(mesh.vertices, tag)
            values[sel] = g(mesh.vertices[sel, 0], mesh.vertices[sel, 1])
        mask |= sel
    return mask, values


def assemble(mesh, lam, bc):
    if not isinstance(lam, MaterialField):
        lam = MaterialField(lam, bounds=(np.min(lam), np.max(lam)))
    if len(lam) != mesh.n_elements:
        raise ParameterError(f"material field has {len(lam)} entries, mesh has "
                             f"{mesh.n_elements} elements")
    K = stiffness_matrix(mesh, lam.values).tocsr()
    f = _load_1d(mesh, bc) if isinstance(mesh, Mesh1D) else _load_2d(mesh, bc)
    dmask, uD = _dirichlet_nodes(mesh, bc)
    free = ~dmask
    # symmetric elimination of the Dirichlet values
    f = f - K[:, dmask] @ uD[dmask]
    f[dmask] = uD[dmask]
    P = sp.diags(free.astype(float))
    K = (P @ K @ P + sp.diags((~free).astype(float))).tocsc()
    K.eliminate_zeros()
    return AssembledSystem(mesh=mesh, lam=lam, K=K, f=f, free=free,
                           u_dirichlet=uD)


def element_gradients(mesh, u):
    """``grad u_h|_T = D^T u_loc / sqrt|T|`` for all elements."""
    uloc = u[mesh.elements]
    return np.einsum("mad,ma->md", mesh.D, uloc) / np.sqrt(mesh.area)[:, None]


def solve_state(sys):
    u = sys.u_dirichlet.copy()
    u[sys.free] = sys.solve_free(sys.f[sys.free])
    u[~sys.free] = sys.f[~sys.free]
    resid = np.linalg.norm(sys.K @ u - sys.f)
    if resid > 1e-10 * max(np.linalg.norm(sys.f), 1e-300):
        raise SingularSystemError(f"state residual {resid:.3e} too large")
    return StateSolution(u=u, compliance=float(sys.f @ u),
                         grad=element_gradients(sys.mesh, u))


def _free_B(sys, ell):
    """Columns of ``B_l`` restricted to the free nodes (dense, n_free x d)."""
    mesh = sys.mesh
    B = np.zeros((int(sys.free.sum()), mesh.D.shape[2]))
    idx = sys.free_index[mesh.elements[ell]]
    ok = idx >= 0
    B[idx[ok]] = mesh.D[ell][ok]
    return B


def exact_gamma(sys, ell):
    """``Gamma_l = -B_l^T K^{-1} B_l`` via d solves with the stored factors."""
    B = _free_B(sys, ell)
    X = sys.solve_free(B)
    G = -B.T @ X
    return 0.5 * (G + G.T) if G.shape[0] > 1 else G


def exact_gamma_all(sys, chunk=256):
    """Exact Gamma for every element, shape (m, d, d)."""
    mesh = sys.mesh
    m, k, d = mesh.D.shape
    nf = int(sys.free.sum())
    out = np.empty((m, d, d))
    idx = sys.free_index[mesh.elements]
    for start in range(0, m, chunk):
        ells = np.arange(start, min(start + chunk, m))
        rhs = np.zeros((nf, len(ells) * d))
        for c, ell in enumerate(ells):
            ok = idx[ell] >= 0
            rhs[idx[ell][ok], c * d:(c + 1) * d] = mesh.D[ell][ok]
        X = sys.solve_free(rhs)
        for c, ell in enumerate(ells):
            ok = idx[ell] >= 0
            Xl = X[idx[ell][ok], c * d:(c + 1) * d]
            G = -mesh.D[ell][ok].T @ Xl
            out[ell] = 0.5 * (G + G.T)
    return out


def diag_gamma_all(sys):
    """``-B_l^T diag(K)^{-1} B_l`` for every element, shape (m, d, d)."""
    mesh = sys.mesh
    diag = sys.K.diagonal()
    if np.any(diag[sys.free] == 0.0):
        raise SingularSystemError("zero diagonal entry in stiffness matrix")
    inv = np.where(sys.free, 1.0 / np.where(diag == 0.0, 1.0, diag), 0.0)
    w = inv[mesh.elements]
    return -np.einsum("mad,ma,mae->mde", mesh.D, w, mesh.D)


def diag_gamma(sys, ell):
    mesh = sys.mesh
    diag = sys.K.diagonal()
    w = np.where(sys.free, 1.0 / diag, 0.0)[mesh.elements[ell]]
    if np.any(diag[mesh.elements[ell]][sys.free[mesh.elements[ell]]] == 0.0):
        raise SingularSystemError("zero diagonal entry in stiffness matrix")
    return -(mesh.D[ell].T * w) @ mesh.D[ell]


def compliance(mesh, lam, bc):
    return solve_state(assemble(mesh, lam, bc)).compliance


def compliance_resolve_oracle(mesh, lam, bc, ell, eta):
    """Compliance after setting element ``ell`` to ``eta``, by full
    re-assembly and a fresh factorization."""
    if not isinstance(lam, MaterialField):
        lam = MaterialField(lam, bounds=(np.min(lam), np.max(lam)))
    lb, ub = lam.bounds
    if not lb - 1e-12 * ub <= eta <= ub * (1 + 1e-12):
        raise ParameterError(f"eta={eta} outside [{lb}, {ub}]")
    return compliance(mesh, lam.perturbed(ell, eta), bc)


def solve_1d_models(m, lam_out, lam_in, mesh=None):
    """Check the closed-form 1D diagonal-Gamma results on a homogeneous bar.

    Returns a dict with, for every interior element, the diagonal Gamma, the
    diagonal model value at ``eta = lam_in``, the closed-form expression and
    the discretized 1D topological-derivative model value.
    """
    from .mesh import build_mesh_1d

    mesh = mesh or build_mesh_1d(m)
    lam = MaterialField.constant(mesh.n_elements, lam_out,
                                 bounds=(min(lam_out, lam_in), max(lam_out, lam_in)))
    sys = assemble(mesh, lam, unit_interval_data())
    state = solve_state(sys)
    G = diag_gamma_all(sys)[:, 0, 0]
    J = state.compliance
    du = state.grad[:, 0]
    delta = lam_in - lam_out
    interior = np.arange(1, mesh.n_elements - 1)
    smwdiag = J - mesh.area * delta * du ** 2 / (1.0 - delta * G)
    closed = J - mesh.area * (lam_out / lam_in) * delta * du ** 2
    td_derivative = -(lam_out / lam_in) * delta * du ** 2
    td_model = J + mesh.area * td_derivative
    return {
        "interior": interior,
        "gamma_diag": G[interior],
        "expected_gamma_diag": -1.0 / lam_out,
        "smwdiag": smwdiag[interior],
        "closed_form": closed[interior],
        "td_model": td_model[interior],
        "compliance": J,
    }
