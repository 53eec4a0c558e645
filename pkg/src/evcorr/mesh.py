"""Conforming triangular meshes: construction, validation, and plain-text I/O.

A mesh is a list of 2D vertices, a list of vertex-index triples (triangles)
and a per-vertex integer boundary marker (0 = interior, >0 = boundary
component id).  An edge table is derived on construction and every mesh is
validated: positive triangle areas after canonical orientation, no dangling
vertex references, and the edge-manifold property (interior edges shared by
exactly 2 triangles, boundary edges by exactly 1).

File format: a node file whose first line is ``N 2`` followed by N lines
``id x y marker``, and an element file whose first line is ``M 3`` followed
by M lines ``id v1 v2 v3``.  Ids are 1-based in files, 0-based in memory.
"""

import numpy as np

from .errors import MeshParseError, MeshValidationError


class Mesh:
    """Immutable triangulation with derived edge table and element geometry."""

    def __init__(self, vertices, triangles, boundary_markers):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        markers = np.ascontiguousarray(boundary_markers, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (N, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshValidationError("triangles must be an (M, 3) array")
        if markers.shape != (len(vertices),):
            raise MeshValidationError("one boundary marker per vertex required")

        nv = len(vertices)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
            bad = int(np.argmax((triangles < 0) | (triangles >= nv)))
            raise MeshValidationError(
                f"triangle {bad // 3} references a vertex outside 0..{nv - 1}"
            )

        # canonical orientation: every triangle counterclockwise
        p0 = vertices[triangles[:, 0]]
        d1 = vertices[triangles[:, 1]] - p0
        d2 = vertices[triangles[:, 2]] - p0
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed == 0.0):
            bad = int(np.argmax(signed == 0.0))
            raise MeshValidationError(f"triangle {bad} has zero area")
        flip = signed < 0.0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip, 1], triangles[flip, 2] = (
                triangles[flip, 2].copy(),
                triangles[flip, 1].copy(),
            )
            signed = np.abs(signed)

        self.vertices = vertices
        self.triangles = triangles
        self.boundary_markers = markers
        self.areas = signed

        self._build_edge_table()
        self._validate()
        for arr in (self.vertices, self.triangles, self.boundary_markers,
                    self.areas, self.edges, self.tri_edges, self.edge_lengths):
            arr.flags.writeable = False

    def _build_edge_table(self):
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        self.edges = edges
        self.tri_edges = inverse.reshape(3, len(t)).T  # local order 01,12,20
        self.edge_tri_count = counts
        self.boundary_edge_mask = counts == 1
        dv = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        self.edge_lengths = np.hypot(dv[:, 0], dv[:, 1])

    def _validate(self):
        if np.any(self.edge_tri_count > 2):
            bad = int(np.argmax(self.edge_tri_count > 2))
            raise MeshValidationError(
                f"edge {tuple(self.edges[bad])} is shared by "
                f"{self.edge_tri_count[bad]} triangles"
            )
        if self.edge_lengths.size and self.edge_lengths.min() <= 0.0:
            raise MeshValidationError("mesh contains a zero-length edge")
        bverts = np.unique(self.edges[self.boundary_edge_mask])
        if np.any(self.boundary_markers[bverts] == 0):
            bad = int(bverts[np.argmax(self.boundary_markers[bverts] == 0)])
            raise MeshValidationError(
                f"vertex {bad} lies on a boundary edge but has marker 0"
            )

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def element_min_edge(self):
        """Shortest edge of each element (the local mesh width h_e)."""
        return self.edge_lengths[self.tri_edges].min(axis=1)

    def element_diameter(self):
        """Longest edge of each element."""
        return self.edge_lengths[self.tri_edges].max(axis=1)


def min_edge(mesh):
    """Length of the shortest edge over the whole edge table."""
    return float(mesh.edge_lengths.min())


def max_edge(mesh):
    """Length of the longest edge over the whole edge table."""
    return float(mesh.edge_lengths.max())


def _parse_counted(text, what, ncols, first_cols):
    lines = text.splitlines()
    if not lines:
        raise MeshParseError(f"empty {what} file", line=1)
    head = lines[0].split()
    if len(head) != 2:
        raise MeshParseError(
            f"expected '<count> {first_cols}' header, got {lines[0]!r}", line=1
        )
    try:
        count = int(head[0])
        cols = int(head[1])
    except ValueError:
        raise MeshParseError(f"non-integer header {lines[0]!r}", line=1) from None
    if cols != first_cols:
        raise MeshParseError(
            f"{what} header must declare {first_cols} columns, got {cols}", line=1
        )
    rows = []
    lineno = 1
    for raw in lines[1:]:
        lineno += 1
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        fields = stripped.split()
        if len(fields) != ncols:
            raise MeshParseError(
                f"expected {ncols} fields, got {len(fields)}", line=lineno
            )
        rows.append((lineno, fields))
    if len(rows) != count:
        raise MeshParseError(
            f"{what} header declares {count} rows but file has {len(rows)}",
            line=lineno,
        )
    return rows


def load_mesh(node_text, element_text):
    """Build a validated Mesh from node/element file contents."""
    node_rows = _parse_counted(node_text, "node", 4, 2)
    vertices = np.empty((len(node_rows), 2))
    markers = np.empty(len(node_rows), dtype=np.int64)
    for expect, (lineno, fields) in enumerate(node_rows, start=1):
        try:
            vid = int(fields[0])
            x, y = float(fields[1]), float(fields[2])
            marker = int(fields[3])
        except ValueError:
            raise MeshParseError(f"malformed node row {fields}", line=lineno) from None
        if vid != expect:
            raise MeshParseError(
                f"node ids must be sequential 1-based; expected {expect}, got {vid}",
                line=lineno,
            )
        vertices[expect - 1] = (x, y)
        markers[expect - 1] = marker

    elem_rows = _parse_counted(element_text, "element", 4, 3)
    triangles = np.empty((len(elem_rows), 3), dtype=np.int64)
    for expect, (lineno, fields) in enumerate(elem_rows, start=1):
        try:
            eid = int(fields[0])
            v = [int(f) for f in fields[1:]]
        except ValueError:
            raise MeshParseError(
                f"malformed element row {fields}", line=lineno
            ) from None
        if eid != expect:
            raise MeshParseError(
                f"element ids must be sequential 1-based; expected {expect}, got {eid}",
                line=lineno,
            )
        if min(v) < 1 or max(v) > len(vertices):
            raise MeshParseError(
                f"element references vertex outside 1..{len(vertices)}", line=lineno
            )
        triangles[expect - 1] = [vi - 1 for vi in v]

    return Mesh(vertices, triangles, markers)


def write_mesh(mesh):
    """Serialize to (node_text, element_text); decimals keep 17 significant digits."""
    node_lines = [f"{mesh.num_vertices} 2"]
    for i, ((x, y), m) in enumerate(zip(mesh.vertices, mesh.boundary_markers), 1):
        node_lines.append(f"{i} {x:.17g} {y:.17g} {m}")
    elem_lines = [f"{mesh.num_triangles} 3"]
    for i, (a, b, c) in enumerate(mesh.triangles, 1):
        elem_lines.append(f"{i} {a + 1} {b + 1} {c + 1}")
    return "\n".join(node_lines) + "\n", "\n".join(elem_lines) + "\n"


def unit_square_mesh(n):
    """Structured n-by-n unit square grid split along one diagonal direction."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    markers = np.zeros(len(vertices), dtype=np.int64)
    on_edge = (
        np.isclose(vertices[:, 0], 0.0)
        | np.isclose(vertices[:, 0], 1.0)
        | np.isclose(vertices[:, 1], 0.0)
        | np.isclose(vertices[:, 1], 1.0)
    )
    markers[on_edge] = 1
    return Mesh(vertices, np.array(triangles), markers)
