"""Reference-triangle conventions and small planar-geometry helpers.

Both the structured mesh and the exterior meshes import their local vertex
ordering and sector labelling from here, so the two sides can never disagree.

Local vertex order (counter-clockwise) for the two element types of the
structured mesh, with ``bl``/``br``/``tr``/``tl`` the corners of a grid square:

    type 1: (bl, br, tr)   right angle at br
    type 2: (bl, tr, tl)   right angle at tl

Sector ``S_j`` (``j = 1, 2, 3``) is the wedge opposite local vertex ``j``;
its boundary rays start at the other two vertices and run along the outward
angle bisectors.  Every bisector passes through the incenter, so the wedges are
exactly the angular regions around the incenter between the rays through
consecutive vertices.
"""
import numpy as np

ELEMENT_TYPES = (1, 2)

# reference triangles centred at their centroid, unit legs
REFERENCE_TRIANGLES = {
    1: np.array([[-2.0, -1.0], [1.0, -1.0], [1.0, 2.0]]) / 3.0,
    2: np.array([[-1.0, -2.0], [2.0, 1.0], [-1.0, 1.0]]) / 3.0,
}

# corner offsets (in grid cells) of each local vertex inside a grid square
LOCAL_CORNERS = {
    1: ((0, 0), (1, 0), (1, 1)),
    2: ((0, 0), (1, 1), (0, 1)),
}

HAT_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def triangle_area(p):
    """Signed area of the triangle with vertex rows ``p`` (positive if CCW)."""
    p = np.asarray(p, dtype=float)
    return 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                  - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))


def incenter(p):
    p = np.asarray(p, dtype=float)
    a = np.linalg.norm(p[1] - p[2])
    b = np.linalg.norm(p[2] - p[0])
    c = np.linalg.norm(p[0] - p[1])
    return (a * p[0] + b * p[1] + c * p[2]) / (a + b + c)


def outward_bisectors(p):
    """Unit directions of the outward angle-bisector rays at each vertex."""
    p = np.asarray(p, dtype=float)
    d = p - incenter(p)
    return d / np.linalg.norm(d, axis=1)[:, None]


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def sector_of_points(tri, pts):
    """Sector index (0, 1, 2 for S1..S3) of each point around triangle ``tri``.

    Points are classified by angle around the incenter; the caller is
    responsible for excluding points inside the triangle itself.
    """
    tri = np.asarray(tri, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    c = incenter(tri)
    rel = pts - c
    out = np.full(len(pts), -1, dtype=int)
    for j in range(3):
        a = tri[(j + 1) % 3] - c
        b = tri[(j + 2) % 3] - c
        inside = (_cross(a, rel) >= 0.0) & (_cross(b, rel) < 0.0)
        out[inside & (out < 0)] = j
    return out


def clip_halfplane(poly, origin, direction, keep_left=True):
    """Sutherland-Hodgman clip of a convex polygon against the line through
    ``origin`` along ``direction``."""
    if len(poly) == 0:
        return poly
    sign = 1.0 if keep_left else -1.0
    s = sign * _cross(direction, poly - origin)
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if s[i] >= 0.0:
            out.append(poly[i])
        if (s[i] >= 0.0) != (s[j] >= 0.0):
            t = s[i] / (s[i] - s[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def sector_fractions(tri, other):
    """Area fractions |T ∩ S_j| / |T| of triangle ``other`` in the three
    sectors of ``tri``."""
    tri = np.asarray(tri, dtype=float)
    other = np.asarray(other, dtype=float)
    c = incenter(tri)
    total = polygon_area(other)
    w = np.zeros(3)
    for j in range(3):
        a = tri[(j + 1) % 3] - c
        b = tri[(j + 2) % 3] - c
        piece = clip_halfplane(other, c, a, keep_left=True)
        piece = clip_halfplane(piece, c, b, keep_left=False)
        w[j] = polygon_area(piece) / total
    return w
