"""Truncated exterior problems around a reference triangle.

The disk ``B_R(0)`` (or a half-disk for elements on the boundary of the
design domain) is meshed so that the reference triangle is a single element and
the three sector-separating bisector rays are resolved by mesh edges.  Each
sector is a convex polygon, so it is triangulated on its own by a Delaunay
triangulation of boundary and fill points; the pieces are then glued together.
"""
import csv
import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshConstructionError, ParameterError, SingularSystemError
from .geometry import (REFERENCE_TRIANGLES, _cross, clip_halfplane, incenter,
                       polygon_area)
from .mesh import geometry_factors

SIDES = ("left", "bottom", "right", "top")
BCS = ("dirichlet", "neumann")
_NORMALS = {"left": (-1.0, 0.0), "bottom": (0.0, -1.0),
            "right": (1.0, 0.0), "top": (0.0, 1.0)}
HAT_TAG = -1


@dataclass(frozen=True)
class Variant:
    """``edge=None`` is the full disk; otherwise the half-disk cut by the
    design-domain side ``edge`` with condition ``bc`` on the straight part."""
    edge: Optional[str] = None
    bc: Optional[str] = None

    def __post_init__(self):
        if self.edge is None:
            if self.bc is not None:
                raise ParameterError("interior variant takes no boundary condition")
        else:
            if self.edge not in SIDES:
                raise ParameterError(f"unknown edge {self.edge!r}")
            if self.bc not in BCS:
                raise ParameterError(f"unknown boundary condition {self.bc!r}")

    @property
    def interior(self):
        return self.edge is None

    def code(self, elem_type):
        """Integer code ``type + 10*edge + 100*bc`` (edge/bc 0 = interior)."""
        e = 0 if self.edge is None else SIDES.index(self.edge) + 1
        b = 0 if self.bc is None else BCS.index(self.bc) + 1
        return int(elem_type) + 10 * e + 100 * b

    @classmethod
    def from_code(cls, code):
        e, b = (code // 10) % 10, code // 100
        return cls(None if e == 0 else SIDES[e - 1], None if b == 0 else BCS[b - 1])

    def __str__(self):
        return "interior" if self.edge is None else f"{self.edge}-{self.bc}"

    @classmethod
    def parse(cls, text):
        if text in (None, "", "interior"):
            return cls()
        edge, sep, bc = text.partition("-")
        if not sep:
            raise ParameterError(f"variant {text!r} is neither 'interior' nor EDGE-BC")
        return cls(edge, bc)


@dataclass(frozen=True)
class SectorMaterials:
    lam_hat: float
    lam_s: tuple

    def __post_init__(self):
        vals = (self.lam_hat,) + tuple(self.lam_s)
        if len(self.lam_s) != 3 or any(not v > 0 for v in vals):
            raise ParameterError(f"invalid sector materials {vals}")

    @classmethod
    def homogeneous(cls, lam):
        return cls(float(lam), (float(lam),) * 3)

    def with_hat(self, lam_hat):
        return SectorMaterials(float(lam_hat), tuple(self.lam_s))


@dataclass(eq=False)
class ExteriorMesh:
    R: float
    elem_type: int
    variant: Variant
    vertices: np.ndarray
    elements: np.ndarray
    hat_element: int
    sector_tag: np.ndarray          # -1 for the hat element, 0..2 for S1..S3
    dirichlet_vertex: np.ndarray
    D: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    halfplane: Optional[tuple] = None   # (normal, offset) of the straight cut

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def domain_area(self):
        return float(self.area.sum())

    def mesh_hash(self):
        h = hashlib.blake2b(digest_size=8)
        h.update(np.array([self.R, self.elem_type, self.variant.code(self.elem_type)],
                          dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.elements, dtype="<i8").tobytes())
        return int.from_bytes(h.digest(), "little")

    def to_csv(self, vertex_path, element_path):
        with open(vertex_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "x", "y", "dirichlet"])
            for i, (x, y) in enumerate(self.vertices):
                w.writerow([i, repr(x), repr(y), int(self.dirichlet_vertex[i])])
        names = {HAT_TAG: "hat", 0: "S1", 1: "S2", 2: "S3"}
        with open(element_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "v0", "v1", "v2", "sector"])
            for i, tri in enumerate(self.elements):
                w.writerow([i, *tri.tolist(), names[int(self.sector_tag[i])]])


def default_h(r, R, h_near=1.12, h_far=1.25):
    """Target edge length: linear growth from the reference scale to the rim."""
    return h_near + (h_far - h_near) * np.clip(r / R, 0.0, 1.0)


def _resample(a, b, sizing):
    """Points strictly between ``a`` and ``b`` spaced by the local target
    length.  Canonical orientation so shared segments get identical points."""
    if tuple(a) > tuple(b):
        return _resample(b, a, sizing)[::-1]
    L = np.linalg.norm(b - a)
    s = [0.0]
    while s[-1] < L:
        p = a + (s[-1] / L) * (b - a)
        s.append(s[-1] + sizing(np.linalg.norm(p)))
    n = max(int(round(len(s) - 1 + (L - s[-2]) / (s[-1] - s[-2]) - 1)), 1)
    s = np.array(s[:n + 1])
    s = s * (L / s[-1]) if len(s) > 1 else s
    return a + (s[1:-1] / L)[:, None] * (b - a)


def _fill_points(R, sizing):
    pts = [np.zeros((1, 2))]
    r = sizing(0.0)
    k = 0
    while r < R:
        h = sizing(r)
        n = max(int(round(2 * np.pi * r / h)), 6)
        th = (np.arange(n) + 0.5 * (k % 2)) * 2 * np.pi / n
        pts.append(r * np.column_stack([np.cos(th), np.sin(th)]))
        r += h * np.sqrt(3.0) / 2.0
        k += 1
    return np.vstack(pts)


def _dist_to_polygon(pts, poly):
    d = np.full(len(pts), np.inf)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.minimum(d, np.linalg.norm(pts - (a + t[:, None] * ab), axis=1))
    return d


def _inside_convex(pts, poly):
    ok = np.ones(len(pts), dtype=bool)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        ok &= _cross(b - a, pts - a) > 0.0
    return ok


def _dedupe(poly, tol=1e-12):
    out = []
    for p in poly:
        if not out or np.linalg.norm(p - out[-1]) > tol:
            out.append(p)
    while len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= tol:
        out.pop()
    return np.array(out).reshape(-1, 2)


def halfplane_for(elem_type, edge):
    """Outward normal ``n`` and offset ``s`` so the domain is ``n.x <= s``,
    with the straight cut through the extreme reference-triangle vertex."""
    n = np.array(_NORMALS[edge])
    s = float(np.max(REFERENCE_TRIANGLES[elem_type] @ n))
    return n, s


def build_exterior_mesh(R=30.0, elem_type=1, variant=None, h_near=1.12, h_far=1.25,
                        n_rim=None):
    if R < 10.0:
        raise ParameterError(f"R must be at least 10, got {R}")
    if elem_type not in REFERENCE_TRIANGLES:
        raise ParameterError(f"unknown element type {elem_type!r}")
    variant = variant or Variant()
    if not 0 < h_near <= h_far:
        raise ParameterError("need 0 < h_near <= h_far")
    sizing = lambda r: default_h(r, R, h_near, h_far)
    tri = REFERENCE_TRIANGLES[elem_type]
    c = incenter(tri)

    n_rim = n_rim or max(128, int(np.ceil(2 * np.pi * R / h_far)))
    th = np.arange(n_rim) * 2 * np.pi / n_rim
    domain = R * np.column_stack([np.cos(th), np.sin(th)])
    halfplane = None
    if not variant.interior:
        n, s = halfplane_for(elem_type, variant.edge)
        halfplane = (n, s)
        # n.x <= s is the left side of the direction n rotated by +90 degrees
        direction = np.array([-n[1], n[0]])
        domain = clip_halfplane(domain, s * n, direction, keep_left=True)
        domain = _dedupe(domain)

    fill = _fill_points(R, sizing)
    fill = fill[np.linalg.norm(fill, axis=1) < R]

    all_pts, all_tris, tags = [], [], []
    for j in range(3):
        a, b = tri[(j + 1) % 3], tri[(j + 2) % 3]
        poly = clip_halfplane(domain, c, a - c, keep_left=True)
        poly = clip_halfplane(poly, c, b - c, keep_left=False)
        poly = clip_halfplane(poly, a, b - a, keep_left=False)   # outside T-hat
        poly = _dedupe(poly)
        if len(poly) < 3 or polygon_area(poly) < 1e-12:
            continue
        boundary = []
        for i in range(len(poly)):
            p, q = poly[i], poly[(i + 1) % len(poly)]
            boundary.append(p[None])
            on_hat_edge = (abs(_cross(b - a, p - a)) < 1e-12
                           and abs(_cross(b - a, q - a)) < 1e-12)
            if not on_hat_edge:
                boundary.append(_resample(p, q, sizing))
        boundary = np.vstack(boundary)
        r = np.linalg.norm(fill, axis=1)
        keep = _inside_convex(fill, poly)
        keep &= _dist_to_polygon(fill, poly) > 0.5 * sizing(r)
        pts = np.vstack([boundary, fill[keep]])
        dl = Delaunay(pts, qhull_options="Qbb Qc Qz Q12")
        t = dl.simplices
        P = pts[t]
        ar = 0.5 * _cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        good = np.abs(ar) > 1e-10
        t = t[good]
        flip = ar[good] < 0
        t[flip] = t[flip][:, [0, 2, 1]]
        if abs(np.abs(ar[good]).sum() - polygon_area(poly)) > 1e-8 * polygon_area(poly):
            raise MeshConstructionError(f"sector {j + 1} triangulation does not "
                                        "cover its polygon")
        offset = sum(len(p) for p in all_pts)
        all_pts.append(pts)
        all_tris.append(t + offset)
        tags.append(np.full(len(t), j))

    all_pts.append(tri)
    offset = sum(len(p) for p in all_pts[:-1])
    all_tris.append(np.array([[offset, offset + 1, offset + 2]]))
    tags.append(np.array([HAT_TAG]))

    pts = np.vstack(all_pts)
    tris = np.vstack(all_tris)
    tags = np.concatenate(tags)
    # merge coincident points; the hat vertices come last but must be exact
    tree = cKDTree(pts)
    pairs = tree.query_pairs(1e-9, output_type="ndarray")
    parent = np.arange(len(pts))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, k in pairs:
        ri, rk = find(i), find(k)
        if ri != rk:
            parent[max(ri, rk)] = min(ri, rk)
    rep = np.array([find(i) for i in range(len(pts))])
    # prefer the exact hat coordinates for merged hat vertices
    for v in range(offset, offset + 3):
        pts[rep[v]] = pts[v]
    uniq, inverse = np.unique(rep, return_inverse=True)
    vertices = pts[uniq]
    elements = inverse[tris]
    hat_element = len(elements) - 1

    _check_conforming(vertices, elements)
    D, area = geometry_factors(vertices[elements])

    rim = np.abs(np.linalg.norm(vertices, axis=1) - R) < 1e-9 * R
    dirichlet = rim.copy()
    if halfplane is not None and variant.bc == "dirichlet":
        n, s = halfplane
        dirichlet |= np.abs(vertices @ n - s) < 1e-9
    return ExteriorMesh(R=float(R), elem_type=int(elem_type), variant=variant,
                        vertices=vertices, elements=elements, hat_element=hat_element,
                        sector_tag=tags, dirichlet_vertex=dirichlet, D=D, area=area,
                        halfplane=halfplane)


def _check_conforming(vertices, elements):
    e = np.sort(np.vstack([elements[:, [0, 1]], elements[:, [1, 2]],
                           elements[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshConstructionError("edge shared by more than two elements")
    used = np.zeros(len(vertices), dtype=bool)
    used[elements.ravel()] = True
    if not used.all():
        raise MeshConstructionError("mesh has unused vertices")
    # Euler characteristic of a disk: V - E + F = 1
    n_edges = len(counts)
    if len(vertices) - n_edges + len(elements) != 1:
        raise MeshConstructionError("mesh is not a conforming triangulation of a disk")


# --------------------------------------------------------------------- solves

@dataclass(eq=False)
class ExteriorSystem:
    """Factorized operator ``A = sum lam_T B_T B_T^T`` on the free nodes."""
    ext: ExteriorMesh
    mats: SectorMaterials
    lu: object
    free_index: np.ndarray
    A_free: sp.csc_matrix

    def solve(self, rhs):
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite exterior solution")
        return x

    def hat_B(self):
        """``B-hat`` restricted to the free nodes, shape (n_free, 2)."""
        ext = self.ext
        B = np.zeros((self.A_free.shape[0], 2))
        idx = self.free_index[ext.elements[ext.hat_element]]
        ok = idx >= 0
        B[idx[ok]] = ext.D[ext.hat_element][ok]
        return B


def element_coefficients(ext, mats):
    lam = np.empty(ext.n_elements)
    lam[ext.sector_tag == HAT_TAG] = mats.lam_hat
    for j in range(3):
        lam[ext.sector_tag == j] = mats.lam_s[j]
    return lam


class _StiffnessParts:
    """Per-material-group stiffness matrices so ``A(mats)`` is a cheap sum."""

    def __init__(self, ext):
        self.ext = ext
        free = ~ext.dirichlet_vertex
        idx = np.full(ext.n_vertices, -1)
        idx[free] = np.arange(free.sum())
        self.free_index = idx
        nf = int(free.sum())
        Kloc = np.einsum("mad,mbd->mab", ext.D, ext.D)
        self.parts = []
        for tag in (HAT_TAG, 0, 1, 2):
            sel = np.flatnonzero(ext.sector_tag == tag)
            rows = np.repeat(idx[ext.elements[sel]], 3, axis=1).ravel()
            cols = np.tile(idx[ext.elements[sel]], (1, 3)).ravel()
            vals = Kloc[sel].ravel()
            ok = (rows >= 0) & (cols >= 0)
            self.parts.append(sp.csc_matrix((vals[ok], (rows[ok], cols[ok])),
                                            shape=(nf, nf)))

    def matrix(self, mats):
        coeffs = (mats.lam_hat,) + tuple(mats.lam_s)
        A = coeffs[0] * self.parts[0]
        for c, P in zip(coeffs[1:], self.parts[1:]):
            A = A + c * P
        return A.tocsc()


_PARTS_CACHE = {}


def _parts(ext):
    key = id(ext)
    hit = _PARTS_CACHE.get(key)
    if hit is None or hit.ext is not ext:
        hit = _StiffnessParts(ext)
        _PARTS_CACHE.clear()
        _PARTS_CACHE[key] = hit
    return hit


def assemble_exterior(ext, mats):
    parts = _parts(ext)
    A = parts.matrix(mats)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SingularSystemError(f"exterior factorization failed for {mats}") from exc
    return ExteriorSystem(ext=ext, mats=mats, lu=lu, free_index=parts.free_index,
                          A_free=A)


def _expand(system, x):
    u = np.zeros(system.ext.n_vertices)
    free = system.free_index >= 0
    u[free] = x
    return u


def hat_rhs(ext, k, scale=1.0):
    """Global load ``-scale * int_{T-hat} e_k . grad(psi_i)``."""
    rhs = np.zeros(ext.n_vertices)
    verts = ext.elements[ext.hat_element]
    area = ext.area[ext.hat_element]
    grad = ext.D[ext.hat_element] / np.sqrt(area)      # rows: grad psi_i
    rhs[verts] = -scale * area * grad[:, k]
    return rhs


def _solve_rhs(system, rhs):
    free = system.free_index >= 0
    x = system.solve(rhs[free])
    resid = np.linalg.norm(system.A_free @ x - rhs[free])
    if resid > 1e-10 * max(np.linalg.norm(rhs), 1e-300):
        raise SingularSystemError(f"exterior residual {resid:.3e}")
    return _expand(system, x)


def solve_W(ext, mats, k, system=None):
    if k not in (0, 1):
        raise ParameterError("direction index k must be 0 or 1")
    system = system or assemble_exterior(ext, mats)
    return _solve_rhs(system, hat_rhs(ext, k))


def solve_corrector_K(ext, mats_out, lam_in, k, system=None):
    """Corrector with ``lam_in`` on the hat element, sector values of
    ``mats_out``; ``mats_out.lam_hat`` is the background value ``lam_out``."""
    lam_out = mats_out.lam_hat
    inner = mats_out.with_hat(lam_in)
    system = system or assemble_exterior(ext, inner)
    return _solve_rhs(system, hat_rhs(ext, k, scale=lam_in - lam_out))


def hat_gradient(ext, u):
    e = ext.hat_element
    return ext.D[e].T @ u[ext.elements[e]] / np.sqrt(ext.area[e])


def gamma_hat(ext, mats, system=None):
    """``Gamma-hat`` with column k the gradient of ``W_k`` on the hat element,
    computed as ``-Bhat^T A^{-1} Bhat``."""
    system = system or assemble_exterior(ext, mats)
    B = system.hat_B()
    X = system.solve(B)
    G = -B.T @ X
    return 0.5 * (G + G.T)


def gamma_hat_columns(ext, mats):
    """Same as :func:`gamma_hat` but literally through the two W solves."""
    system = assemble_exterior(ext, mats)
    cols = [hat_gradient(ext, solve_W(ext, mats, k, system)) for k in (0, 1)]
    return np.column_stack(cols)


def polarization_hat(ext, mats_out, lam_in):
    system = assemble_exterior(ext, mats_out.with_hat(lam_in))
    cols = [hat_gradient(ext, solve_corrector_K(ext, mats_out, lam_in, k, system))
            for k in (0, 1)]
    return np.column_stack(cols)


def lift_gamma(G_y, x, y):
    """``Gamma-hat`` at hat value ``x`` from its value at hat value ``y``:
    ``G(x) = G(y) (I - (x - y) G(y))^{-1}``; exact on the discrete level."""
    G_y = np.asarray(G_y)
    d = G_y.shape[-1]
    M = np.eye(d) - (x - y) * G_y
    return np.linalg.solve(M.swapaxes(-1, -2), G_y.swapaxes(-1, -2)).swapaxes(-1, -2)


def rotate_180(G):
    """Conjugation by the point reflection (identity on 2x2 matrices)."""
    Q = -np.eye(2)
    return Q @ G @ Q.T
