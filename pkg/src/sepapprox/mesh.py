"""Structured simplicial meshes of the unit interval and unit square."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ParameterError
from .geometry import HAT_GRADIENTS, LOCAL_CORNERS, sector_fractions

BOUNDARY_TOL = 1e-12
EDGE_TAGS = ("left", "bottom", "right", "top")


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    D: np.ndarray
    centroid: np.ndarray
    local_to_global: np.ndarray


@dataclass(eq=False)
class Mesh2D:
    """Structured triangulation of [0, 1]^2 with ``2**n_ref`` cells per side.

    Each grid square is split along its bottom-left to top-right diagonal into
    a type-1 element (right angle bottom-right) and a type-2 element (right
    angle top-left).  Element ``2*(j*N + i)`` is the type-1 half of square
    ``(i, j)``, element ``2*(j*N + i) + 1`` its type-2 half.
    """
    n_ref: int
    vertices: np.ndarray
    elements: np.ndarray
    elem_type: np.ndarray
    boundary_vertex: np.ndarray
    boundary_edges: np.ndarray
    boundary_edge_tag: np.ndarray
    D: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    centroid: np.ndarray = field(repr=False)
    dim: int = 2

    @property
    def h(self):
        return 2.0 ** (-self.n_ref)

    @property
    def n_cells(self):
        return 2 ** self.n_ref

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def interior_elements(self):
        """Boolean mask of elements with no vertex on the boundary."""
        return ~self.boundary_vertex[self.elements].any(axis=1)

    def elements_touching(self, tag):
        """Mask of elements with at least one vertex on boundary side ``tag``."""
        on = _side_mask(self.vertices, tag)
        return on[self.elements].any(axis=1)

    def element_index(self, i, j, etype):
        return 2 * (j * self.n_cells + i) + (etype - 1)

    def find_element(self, etype, vertex, corner):
        """Element of type ``etype`` whose local ``corner`` ('bl', 'br', 'tr',
        'tl') sits at ``vertex``."""
        offsets = {"bl": (0, 0), "br": (1, 0), "tr": (1, 1), "tl": (0, 1)}
        di, dj = offsets[corner]
        i = int(round(vertex[0] / self.h)) - di
        j = int(round(vertex[1] / self.h)) - dj
        if not (0 <= i < self.n_cells and 0 <= j < self.n_cells):
            raise DomainError(f"no element with {corner} corner at {vertex}")
        return self.element_index(i, j, etype)


@dataclass(eq=False)
class Mesh1D:
    m: int
    vertices: np.ndarray
    elements: np.ndarray
    D: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    centroid: np.ndarray = field(repr=False)
    dim: int = 1

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return self.m

    @property
    def boundary_vertex(self):
        mask = np.zeros(self.m + 1, dtype=bool)
        mask[[0, -1]] = True
        return mask


def _side_mask(vertices, tag):
    x, y = vertices[:, 0], vertices[:, 1]
    return {
        "left": np.abs(x) < BOUNDARY_TOL,
        "bottom": np.abs(y) < BOUNDARY_TOL,
        "right": np.abs(x - 1.0) < BOUNDARY_TOL,
        "top": np.abs(y - 1.0) < BOUNDARY_TOL,
    }[tag]


def geometry_factors(coords):
    """Per-element ``D`` matrices and areas for triangles ``coords`` (m, 3, 2).

    ``D = sqrt(det(J)/2) * G * J^{-1}`` so that ``D D^T`` is the P1 local
    stiffness matrix and ``D^T u_loc = sqrt(|T|) grad u_h``.
    """
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0.0):
        raise ParameterError("elements must be non-degenerate and counter-clockwise")
    Jinv = np.linalg.inv(J)
    D = np.sqrt(det / 2.0)[:, None, None] * np.einsum("ab,mbc->mac", HAT_GRADIENTS, Jinv)
    return D, det / 2.0


def build_structured_mesh(n_ref):
    if not isinstance(n_ref, (int, np.integer)) or not 2 <= n_ref <= 10:
        raise ParameterError(f"n_ref must be an integer in [2, 10], got {n_ref!r}")
    N = 2 ** n_ref
    h = 1.0 / N
    g = np.arange(N + 1) * h
    X, Y = np.meshgrid(g, g)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (N + 1) + i

    I, Jg = np.meshgrid(np.arange(N), np.arange(N))
    I, Jg = I.ravel(), Jg.ravel()
    elements = np.empty((2 * N * N, 3), dtype=np.int64)
    for etype, corners in LOCAL_CORNERS.items():
        rows = 2 * (Jg * N + I) + (etype - 1)
        for k, (di, dj) in enumerate(corners):
            elements[rows, k] = vid(I + di, Jg + dj)
    elem_type = np.tile([1, 2], N * N)

    x, y = vertices[:, 0], vertices[:, 1]
    boundary_vertex = ((x < BOUNDARY_TOL) | (x > 1 - BOUNDARY_TOL)
                       | (y < BOUNDARY_TOL) | (y > 1 - BOUNDARY_TOL))

    k = np.arange(N)
    edges, tags = [], []
    for tag, a, b in (
        ("left", vid(0, k), vid(0, k + 1)),
        ("bottom", vid(k, 0), vid(k + 1, 0)),
        ("right", vid(N, k), vid(N, k + 1)),
        ("top", vid(k, N), vid(k + 1, N)),
    ):
        edges.append(np.column_stack([a, b]))
        tags += [tag] * N
    coords = vertices[elements]
    D, area = geometry_factors(coords)
    return Mesh2D(
        n_ref=n_ref, vertices=vertices, elements=elements, elem_type=elem_type,
        boundary_vertex=boundary_vertex, boundary_edges=np.vstack(edges),
        boundary_edge_tag=np.array(tags), D=D, area=area,
        centroid=coords.mean(axis=1),
    )


def build_mesh_1d(m):
    if m < 2:
        raise ParameterError("need at least two elements")
    vertices = np.linspace(0.0, 1.0, m + 1)
    elements = np.column_stack([np.arange(m), np.arange(1, m + 1)])
    length = np.full(m, 1.0 / m)          # uniform by construction
    D = (np.array([-1.0, 1.0])[None, :, None] / np.sqrt(length)[:, None, None])
    return Mesh1D(m=m, vertices=vertices, elements=elements, D=D, area=length,
                  centroid=0.5 * (vertices[:-1] + vertices[1:]))


def element_geometry(mesh, ell):
    if not 0 <= ell < mesh.n_elements:
        raise IndexError(f"element index {ell} out of range")
    return ElementGeometry(
        area=float(mesh.area[ell]), D=mesh.D[ell].copy(),
        centroid=np.atleast_1d(mesh.centroid[ell]).copy(),
        local_to_global=mesh.elements[ell].copy(),
    )


def _incidence(mesh):
    m, k = mesh.elements.shape
    rows = np.repeat(np.arange(m), k)
    return sp.csr_matrix((np.ones(m * k), (rows, mesh.elements.ravel())),
                         shape=(m, mesh.n_vertices))


def neighbor_matrix(mesh):
    """Sparse boolean element adjacency through shared vertices (no self)."""
    inc = _incidence(mesh)
    adj = (inc @ inc.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.data[:] = 1.0
    return adj


def vertex_neighbors(mesh, ell):
    if not 0 <= ell < mesh.n_elements:
        raise IndexError(f"element index {ell} out of range")
    verts = mesh.elements[ell]
    hit = np.isin(mesh.elements, verts).any(axis=1)
    hit[ell] = False
    return set(np.flatnonzero(hit).tolist())


def _weights_for(mesh, ell, nbrs, cache):
    tri = mesh.vertices[mesh.elements[ell]]
    out = {}
    for t in nbrs:
        other = mesh.vertices[mesh.elements[t]]
        # translation invariance of the structured mesh: key on relative offset
        key = (int(mesh.elem_type[ell]), int(mesh.elem_type[t]),
               tuple(np.round((other[0] - tri[0]) / mesh.h).astype(int)))
        if key not in cache:
            cache[key] = sector_fractions(tri, other)
        out[t] = cache[key]
    return out


def sector_weights(mesh, ell, allow_boundary=False):
    """Area fractions ``w[T] = (|T ∩ S_1|, |T ∩ S_2|, |T ∩ S_3|) / |T|`` for
    every vertex neighbour ``T`` of element ``ell``."""
    if not allow_boundary and mesh.boundary_vertex[mesh.elements[ell]].any():
        raise DomainError(f"element {ell} touches the boundary; "
                          "pass allow_boundary=True to use the truncated fan")
    return _weights_for(mesh, ell, sorted(vertex_neighbors(mesh, ell)), {})


def sector_weight_matrices(mesh):
    """Three sparse (m, m) matrices ``W[j][l, T] = w_{S_j, T}`` for all
    elements, boundary elements included (their fan is simply truncated)."""
    adj = neighbor_matrix(mesh).tocsr()
    cache = {}
    rows, cols, vals = [], [], []
    for ell in range(mesh.n_elements):
        nbrs = adj.indices[adj.indptr[ell]:adj.indptr[ell + 1]]
        for t, w in _weights_for(mesh, ell, nbrs, cache).items():
            rows.append(ell)
            cols.append(t)
            vals.append(w)
    vals = np.array(vals)
    m = mesh.n_elements
    return [sp.csr_matrix((vals[:, j], (rows, cols)), shape=(m, m)) for j in range(3)]
