"""Conforming triangular meshes of waveguide cross-sections.

A :class:`Mesh` stores node coordinates (meters), counter-clockwise triangles
and the derived edge topology: unique node-index pairs stored ``(lo, hi)``
with ``lo < hi``, per-triangle edge ids with orientation signs, boundary
flags, and the labelling of the boundary into connected components.  The
number of boundary components drives the expected count of TEM modes
downstream (one less than the number of components).

Generators are provided for structured rectangles, polar discs/annuli and
axis-aligned rectilinear polygons, together with uniform (red) refinement and
a line-oriented ASCII import/export format.  All construction funnels through
:func:`build_topology`, which validates the triangulation.

Meshes are immutable after construction (arrays are write-protected), so they
can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

#: Signed triangle areas at or below this value (m^2) are rejected.  This is a
#: numerical guard far below any realistic element, not a modelling knob;
#: clockwise triangles fail it as well because their signed area is negative.
AREA_EPS = 1e-20


class MeshError(ValueError):
    """Invalid, non-conforming or non-manifold triangulation."""


@dataclass(frozen=True)
class Point2:
    """A point of the cross-section plane, coordinates in meters."""

    x: float
    y: float


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with derived edge and boundary topology.

    Attributes
    ----------
    nodes : (V, 2) float array
        Node coordinates in meters.
    triangles : (T, 3) int array
        Node indices, counter-clockwise.
    edges : (E, 2) int array
        Unique edges as ``(lo, hi)`` node pairs, ``lo < hi``, sorted
        lexicographically.
    tri_edges : (T, 3) int array
        Global edge index of the local edges ``(0,1), (1,2), (2,0)``.
    tri_edge_signs : (T, 3) int array
        ``+1`` where the triangle traverses the edge from ``lo`` to ``hi``,
        ``-1`` otherwise.
    boundary_node, boundary_edge : bool arrays
        Flags over nodes / edges.
    boundary_component : (E,) int array
        Component id (0-based) for boundary edges, ``-1`` for interior ones.
    h : float
        Longest edge length (meters).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    boundary_node: np.ndarray
    boundary_edge: np.ndarray
    boundary_component: np.ndarray
    h: float

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_boundary_components(self) -> int:
        if not self.boundary_edge.any():
            return 0
        return int(self.boundary_component.max()) + 1

    def euler_deficit(self) -> int:
        """``V - E + T - (2 - B)``; zero for a valid planar triangulation."""
        return (self.num_nodes - self.num_edges + self.num_triangles
                - (2 - self.num_boundary_components))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_coords(points) -> np.ndarray:
    if len(points) and isinstance(points[0], Point2):
        points = [(p.x, p.y) for p in points]
    coords = np.asarray(points, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise MeshError(f"node coordinates must be (V, 2), got {coords.shape}")
    return np.ascontiguousarray(coords)


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def _boundary_components(edges, boundary_edge, num_nodes) -> np.ndarray:
    """Label boundary edges by connectivity through shared nodes."""
    component = np.full(edges.shape[0], -1, dtype=np.int64)
    bidx = np.flatnonzero(boundary_edge)
    if bidx.size == 0:
        return component
    be = edges[bidx]
    graph = coo_matrix(
        (np.ones(be.shape[0]), (be[:, 0], be[:, 1])),
        shape=(num_nodes, num_nodes),
    )
    _, node_label = connected_components(graph, directed=False)
    raw = node_label[be[:, 0]]
    # relabel by first appearance in edge order so ids are deterministic
    _, first = np.unique(raw, return_index=True)
    order = {raw[i]: rank for rank, i in enumerate(np.sort(first))}
    component[bidx] = [order[r] for r in raw]
    return component


def _check_hanging_nodes(nodes, edges, boundary_edge, boundary_node):
    """A node in the interior of a boundary edge means a hanging node.

    Non-conformity always surfaces on boundary edges: a long edge facing two
    half edges is incident to only one triangle, so it gets classified as
    boundary and the mid node lies on it.
    """
    bidx = np.flatnonzero(boundary_edge)
    nidx = np.flatnonzero(boundary_node)
    if bidx.size == 0 or nidx.size == 0:
        return
    a = nodes[edges[bidx, 0]]
    d = nodes[edges[bidx, 1]] - a
    lens2 = np.einsum("ij,ij->i", d, d)
    p = nodes[nidx]
    w = p[:, None, :] - a[None, :, :]
    t = np.einsum("nek,ek->ne", w, d) / lens2
    cross = np.abs(w[:, :, 0] * d[None, :, 1] - w[:, :, 1] * d[None, :, 0])
    on_open_segment = (cross <= 1e-9 * lens2) & (t > 1e-6) & (t < 1 - 1e-6)
    if on_open_segment.any():
        n, e = np.argwhere(on_open_segment)[0]
        raise MeshError(
            f"non-conforming mesh: node {nidx[n]} lies inside boundary "
            f"edge {edges[bidx[e], 0]}-{edges[bidx[e], 1]}"
        )


def build_topology(nodes, triangles, *, area_eps: float = AREA_EPS) -> Mesh:
    """Derive edge/boundary topology and validate the triangulation.

    Raises :class:`MeshError` for degenerate (or clockwise) triangles,
    duplicate triangles, non-manifold edges (shared by more than two
    triangles), inconsistent orientation and hanging nodes.
    """
    nodes = _as_coords(nodes)
    tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshError(f"triangles must be (T, 3), got {tris.shape}")
    num_nodes = nodes.shape[0]
    if not np.isfinite(nodes).all():
        raise MeshError("non-finite node coordinate")
    if tris.size == 0:
        raise MeshError("mesh has no triangles")
    if tris.min() < 0 or tris.max() >= num_nodes:
        raise MeshError("triangle node index out of range")
    if (np.diff(np.sort(tris, axis=1), axis=1) == 0).any():
        raise MeshError("triangle with repeated node")

    areas = signed_areas(nodes, tris)
    bad = np.flatnonzero(areas <= area_eps)
    if bad.size:
        raise MeshError(
            f"degenerate or clockwise triangle {bad[0]} "
            f"(signed area {areas[bad[0]]:.3e} m^2)"
        )

    key = np.sort(tris, axis=1)
    if np.unique(key, axis=0).shape[0] != tris.shape[0]:
        raise MeshError("duplicate triangle")

    used = np.zeros(num_nodes, dtype=bool)
    used[tris] = True
    if not used.all():
        raise MeshError(f"node {np.flatnonzero(~used)[0]} not used by any triangle")
    uniq, counts = np.unique(
        nodes.view([("x", float), ("y", float)]).reshape(-1), return_counts=True
    )
    if (counts > 1).any():
        raise MeshError("duplicate node coordinates")

    # local edges (0,1), (1,2), (2,0); global edges stored lo < hi
    local = tris[:, [[0, 1], [1, 2], [2, 0]]]
    lo = local.min(axis=2)
    hi = local.max(axis=2)
    keys = lo.astype(np.int64) * num_nodes + hi
    uniq_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    edges = np.column_stack(
        [uniq_keys // num_nodes, uniq_keys % num_nodes]
    ).astype(np.int64)
    tri_edges = inverse.reshape(tris.shape[0], 3)
    tri_edge_signs = np.where(local[:, :, 0] == lo, 1, -1).astype(np.int64)

    incidence = np.bincount(tri_edges.ravel(), minlength=edges.shape[0])
    if (incidence > 2).any():
        e = int(np.flatnonzero(incidence > 2)[0])
        raise MeshError(
            f"non-manifold edge {edges[e, 0]}-{edges[e, 1]} "
            f"shared by {incidence[e]} triangles"
        )
    sign_sums = np.zeros(edges.shape[0], dtype=np.int64)
    np.add.at(sign_sums, tri_edges.ravel(), tri_edge_signs.ravel())
    if ((incidence == 2) & (sign_sums != 0)).any():
        e = int(np.flatnonzero((incidence == 2) & (sign_sums != 0))[0])
        raise MeshError(
            f"non-conforming mesh: edge {edges[e, 0]}-{edges[e, 1]} traversed "
            "twice in the same direction"
        )

    boundary_edge = incidence == 1
    boundary_node = np.zeros(num_nodes, dtype=bool)
    boundary_node[edges[boundary_edge].ravel()] = True
    _check_hanging_nodes(nodes, edges, boundary_edge, boundary_node)
    component = _boundary_components(edges, boundary_edge, num_nodes)

    vec = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    h = float(np.sqrt(np.einsum("ij,ij->i", vec, vec)).max())

    return Mesh(
        nodes=_freeze(nodes),
        triangles=_freeze(tris),
        edges=_freeze(edges),
        tri_edges=_freeze(tri_edges),
        tri_edge_signs=_freeze(tri_edge_signs),
        boundary_node=_freeze(boundary_node),
        boundary_edge=_freeze(boundary_edge),
        boundary_component=_freeze(component),
        h=h,
    )


def generate_rectangle(a: float, b: float, nx: int, ny: int) -> Mesh:
    """Structured mesh of the rectangle ``[0, a] x [0, b]``.

    Each of the ``nx * ny`` cells is split along its lower-left to
    upper-right diagonal, a fixed convention that keeps spectra reproducible.
    """
    if a <= 0 or b <= 0:
        raise MeshError("rectangle sides must be positive")
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    xs = np.linspace(0.0, a, nx + 1)
    ys = np.linspace(0.0, b, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ll = (j * (nx + 1) + i).ravel()
    lr = ll + 1
    ul = ll + (nx + 1)
    ur = ul + 1
    tris = np.empty((2 * ll.size, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([ll, lr, ur])
    tris[1::2] = np.column_stack([ll, ur, ul])
    return build_topology(nodes, tris)


def generate_annulus(r_inner: float, r_outer: float, n_r: int, n_theta: int) -> Mesh:
    """Polar structured mesh of an annulus, or of a disc when ``r_inner == 0``.

    The circular boundaries are polygonal; refinement later never snaps new
    nodes back onto the true circle, so the geometric error is fixed by
    ``n_theta``.
    """
    if r_inner < 0 or r_outer <= r_inner:
        raise MeshError("need 0 <= r_inner < r_outer")
    if n_theta < 3:
        raise MeshError("n_theta must be at least 3")
    if n_r < 1:
        raise MeshError("n_r must be at least 1")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    ct, st = np.cos(theta), np.sin(theta)

    def ring(radius):
        return np.column_stack([radius * ct, radius * st])

    radii = np.linspace(r_inner, r_outer, n_r + 1)
    tris = []
    if r_inner > 0:
        nodes = np.concatenate([ring(r) for r in radii])
        first_ring = 0

        def node_id(i_ring, k):
            return first_ring + i_ring * n_theta + (k % n_theta)

        ring_lo = range(n_r)
    else:
        nodes = np.concatenate([[[0.0, 0.0]]] + [ring(r) for r in radii[1:]])

        def node_id(i_ring, k):
            return 1 + (i_ring - 1) * n_theta + (k % n_theta)

        for k in range(n_theta):
            tris.append([0, node_id(1, k), node_id(1, k + 1)])
        ring_lo = range(1, n_r)
    for i in ring_lo:
        for k in range(n_theta):
            a = node_id(i, k)
            b = node_id(i + 1, k)
            c = node_id(i + 1, k + 1)
            d = node_id(i, k + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return build_topology(nodes, np.asarray(tris, dtype=np.int64))


def _point_in_polygon(px, py, verts) -> bool:
    """Even-odd test; points on the boundary count as outside."""
    n = len(verts)
    inside = False
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if y1 == y2:  # horizontal edge
            if py == y1 and min(x1, x2) <= px <= max(x1, x2):
                return False
        else:  # vertical edge
            if px == x1 and min(y1, y2) <= py <= max(y1, y2):
                return False
            if (y1 > py) != (y2 > py) and px < x1:
                inside = not inside
    return inside


def _validate_rectilinear(verts):
    n = len(verts)
    if n < 4:
        raise MeshError("rectilinear polygon needs at least 4 vertices")
    segs = []
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        if (dx != 0) == (dy != 0):
            raise MeshError(
                f"edge {i} is not axis-aligned (or has zero length)"
            )
        segs.append(((x1, y1), (x2, y2)))
    for i in range(n):
        (ax1, ay1), (ax2, ay2) = segs[i]
        (bx1, by1), (bx2, by2) = segs[(i + 1) % n]
        da = (ax2 - ax1, ay2 - ay1)
        db = (bx2 - bx1, by2 - by1)
        if da[0] * db[0] < 0 or da[1] * db[1] < 0:
            raise MeshError(f"polygon doubles back at vertex {(i + 1) % n}")
    area2 = sum(p[0] * q[1] - q[0] * p[1] for p, q in segs)
    if area2 <= 0:
        raise MeshError("polygon must be simple and counter-clockwise")
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            (ax1, ay1), (ax2, ay2) = segs[i]
            (bx1, by1), (bx2, by2) = segs[j]
            if (min(ax1, ax2) <= max(bx1, bx2) and min(bx1, bx2) <= max(ax1, ax2)
                    and min(ay1, ay2) <= max(by1, by2)
                    and min(by1, by2) <= max(ay1, ay2)):
                raise MeshError(f"polygon edges {i} and {j} intersect")


def generate_rectilinear_polygon(vertices, h_target: float) -> Mesh:
    """Grid mesh of an axis-aligned rectilinear polygon (counter-clockwise).

    The bounding box is covered by a uniform grid with cell sides at most
    ``h_target``; cells whose closure lies inside the polygon are kept and
    split with the same diagonal convention as :func:`generate_rectangle`.
    """
    coords = _as_coords(vertices)
    if h_target <= 0:
        raise MeshError("h_target must be positive")
    verts = [(float(x), float(y)) for x, y in coords]
    _validate_rectilinear(verts)

    xmin, ymin = coords.min(axis=0)
    xmax, ymax = coords.max(axis=0)
    nx = max(1, int(math.ceil((xmax - xmin) / h_target - 1e-12)))
    ny = max(1, int(math.ceil((ymax - ymin) / h_target - 1e-12)))
    hx = (xmax - xmin) / nx
    hy = (ymax - ymin) / ny

    xs = xmin + hx * np.arange(nx + 1)
    ys = ymin + hy * np.arange(ny + 1)

    # margins absorb float jitter when polygon edges land on grid lines
    mx, my = 1e-9 * hx, 1e-9 * hy

    def cell_is_inside(i, j):
        cx0, cx1 = xs[i], xs[i + 1]
        cy0, cy1 = ys[j], ys[j + 1]
        if not _point_in_polygon(0.5 * (cx0 + cx1), 0.5 * (cy0 + cy1), verts):
            return False
        for k in range(len(verts)):
            x1, y1 = verts[k]
            x2, y2 = verts[(k + 1) % len(verts)]
            if y1 == y2:  # horizontal edge crossing the open cell?
                if (cy0 + my < y1 < cy1 - my
                        and max(min(x1, x2), cx0)
                        < min(max(x1, x2), cx1) - mx):
                    return False
            else:
                if (cx0 + mx < x1 < cx1 - mx
                        and max(min(y1, y2), cy0)
                        < min(max(y1, y2), cy1) - my):
                    return False
        return True

    node_id = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    nodes = []
    tris = []

    def nid(i, j):
        if node_id[i, j] < 0:
            node_id[i, j] = len(nodes)
            nodes.append((xs[i], ys[j]))
        return node_id[i, j]

    for j in range(ny):
        for i in range(nx):
            if not cell_is_inside(i, j):
                continue
            ll = nid(i, j)
            lr = nid(i + 1, j)
            ul = nid(i, j + 1)
            ur = nid(i + 1, j + 1)
            tris.append([ll, lr, ur])
            tris.append([ll, ur, ul])
    if not tris:
        raise MeshError("no grid cell lies inside the polygon; decrease h_target")
    return build_topology(np.asarray(nodes, dtype=float),
                          np.asarray(tris, dtype=np.int64))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split each triangle into 4 congruent children via edge midpoints.

    Parent node positions (and indices) are preserved; the midpoint of edge
    ``e`` becomes node ``V + e``, so the refinement is nested.
    """
    mid = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    nodes = np.concatenate([mesh.nodes, mid])
    v = mesh.triangles
    m = mesh.num_nodes + mesh.tri_edges  # midpoints of local edges 01, 12, 20
    children = np.empty((mesh.num_triangles * 4, 3), dtype=np.int64)
    children[0::4] = np.column_stack([v[:, 0], m[:, 0], m[:, 2]])
    children[1::4] = np.column_stack([v[:, 1], m[:, 1], m[:, 0]])
    children[2::4] = np.column_stack([v[:, 2], m[:, 2], m[:, 1]])
    children[3::4] = np.column_stack([m[:, 0], m[:, 1], m[:, 2]])
    return build_topology(nodes, children)


def export_mesh(mesh: Mesh) -> str:
    """Serialize to the line-oriented ASCII format (0-based indices).

    Coordinates are written with :func:`repr`, the shortest representation
    that round-trips ``float`` exactly, so import/export is bit-faithful.
    """
    lines = [f"nodes {mesh.num_nodes}"]
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in mesh.nodes)
    lines.append(f"triangles {mesh.num_triangles}")
    lines.extend(f"{i} {j} {k}" for i, j, k in mesh.triangles)
    return "\n".join(lines) + "\n"


def import_mesh(text: str) -> Mesh:
    """Parse the ASCII mesh format; errors carry 1-based line numbers."""
    tokens = []  # (line_number, fields)
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            tokens.append((ln, body.split()))

    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            raise MeshError(f"unexpected end of file while reading {what}")
        item = tokens[pos]
        pos += 1
        return item

    ln, fields = take("header")
    if len(fields) != 2 or fields[0] != "nodes":
        raise MeshError(f"line {ln}: expected 'nodes <count>'")
    try:
        num_nodes = int(fields[1])
    except ValueError:
        raise MeshError(f"line {ln}: bad node count {fields[1]!r}") from None
    nodes = np.empty((num_nodes, 2), dtype=float)
    for i in range(num_nodes):
        ln, fields = take(f"node {i}")
        if len(fields) != 2:
            raise MeshError(f"line {ln}: expected 'x y'")
        try:
            nodes[i] = [float(fields[0]), float(fields[1])]
        except ValueError:
            raise MeshError(f"line {ln}: bad coordinate") from None

    ln, fields = take("header")
    if len(fields) != 2 or fields[0] != "triangles":
        raise MeshError(f"line {ln}: expected 'triangles <count>'")
    try:
        num_tris = int(fields[1])
    except ValueError:
        raise MeshError(f"line {ln}: bad triangle count {fields[1]!r}") from None
    tris = np.empty((num_tris, 3), dtype=np.int64)
    for i in range(num_tris):
        ln, fields = take(f"triangle {i}")
        if len(fields) != 3:
            raise MeshError(f"line {ln}: expected 'i j k'")
        try:
            tris[i] = [int(f) for f in fields]
        except ValueError:
            raise MeshError(f"line {ln}: bad node index") from None
        if tris[i].min() < 0 or tris[i].max() >= num_nodes:
            raise MeshError(f"line {ln}: node index out of range")
    if pos != len(tokens):
        raise MeshError(f"line {tokens[pos][0]}: trailing content")
    return build_topology(nodes, tris)
