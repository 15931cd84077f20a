"""Triangle meshes with per-vertex normals, uvs and shading tangents.

Texture coordinates wrap in u (cylindrical atlases are the common case) and
clamp in v.  Seam and pole vertices may be duplicated for uv purposes;
topological queries (edge adjacency, tangent averaging) weld vertices by
position first so duplicated seams behave like ordinary interior edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateTriangle, InvalidResolution

MIN_TRIANGLE_AREA = 1e-12


@dataclass
class TriMesh:
    vertices: np.ndarray  # (N, 3) float64, object units
    triangles: np.ndarray  # (M, 3) int32
    normals: np.ndarray  # (N, 3) float64, unit
    uvs: np.ndarray  # (N, 2) float64 in [0, 1]^2
    tangents: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64)
        n = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise IndexError("triangle indices out of range")
        areas = self.face_areas()
        bad = np.nonzero(areas <= MIN_TRIANGLE_AREA)[0]
        if bad.size:
            raise DegenerateTriangle(
                f"degenerate triangles (area <= {MIN_TRIANGLE_AREA:g}) at indices "
                f"{bad.tolist()}"
            )
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero-length vertex normal")
        self.normals = self.normals / norms[:, None]
        if self.tangents is None:
            self.tangents = compute_vertex_tangents(
                self.vertices, self.triangles, self.normals, self.uvs
            )
        else:
            self.tangents = np.ascontiguousarray(self.tangents, dtype=np.float64)

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(
            np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
        )

    def face_normals(self) -> np.ndarray:
        """Unnormalized geometric face normals (cross of edge vectors)."""
        v = self.vertices[self.triangles]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def surface_area(self) -> float:
        return float(self.face_areas().sum())

    def bounding_radius(self) -> float:
        """Radius of the origin-centered bounding sphere."""
        return float(np.linalg.norm(self.vertices, axis=1).max())


def weld_ids(vertices: np.ndarray, decimals: int = 8) -> np.ndarray:
    """Map each vertex to a shared id for positionally coincident vertices."""
    key = np.round(vertices, decimals=decimals)
    _, ids = np.unique(key, axis=0, return_inverse=True)
    return ids.astype(np.int64)


def compute_vertex_tangents(
    vertices: np.ndarray,
    triangles: np.ndarray,
    normals: np.ndarray,
    uvs: np.ndarray,
) -> np.ndarray:
    """Area-accumulated du-direction tangents, averaged over welded vertices.

    Faces with a degenerate uv footprint contribute nothing; vertices left
    without any contribution get an arbitrary normal-perpendicular fallback.
    """
    v = vertices[triangles]
    t_uv = uvs[triangles]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    du1, dv1 = t_uv[:, 1, 0] - t_uv[:, 0, 0], t_uv[:, 1, 1] - t_uv[:, 0, 1]
    du2, dv2 = t_uv[:, 2, 0] - t_uv[:, 0, 0], t_uv[:, 2, 1] - t_uv[:, 0, 1]
    denom = du1 * dv2 - du2 * dv1
    ok = np.abs(denom) > 1e-12
    face_t = np.zeros_like(d1)
    face_t[ok] = (
        dv2[ok, None] * d1[ok] - dv1[ok, None] * d2[ok]
    ) / denom[ok, None]

    ids = weld_ids(vertices)
    acc = np.zeros((ids.max() + 1, 3))
    for corner in range(3):
        np.add.at(acc, ids[triangles[:, corner]], face_t)
    tangents = acc[ids]
    lengths = np.linalg.norm(tangents, axis=1)
    weak = lengths < 1e-10
    if np.any(weak):
        tangents[weak] = _any_perpendicular(normals[weak])
        lengths = np.linalg.norm(tangents, axis=1)
    return tangents / lengths[:, None]


def _any_perpendicular(n: np.ndarray) -> np.ndarray:
    ref = np.zeros_like(n)
    use_x = np.abs(n[:, 1]) > 0.9
    ref[use_x, 0] = 1.0
    ref[~use_x, 1] = 1.0
    t = np.cross(ref, n)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def make_uv_sphere(rings: int, segments: int, radius: float = 1.0) -> TriMesh:
    """Latitude/longitude sphere with ``2 * segments * (rings - 1)`` triangles.

    The vertex grid is ``(rings + 1) x (segments + 1)``; the seam column and
    pole rows are duplicated so uvs stay in [0, 1].  Vertex normals are the
    exact analytic directions.
    """
    if rings < 3 or segments < 3:
        raise InvalidResolution(f"need rings, segments >= 3, got {rings}, {segments}")
    i = np.arange(rings + 1)
    j = np.arange(segments + 1)
    theta = np.pi * i / rings
    phi = 2.0 * np.pi * j / segments
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    pts = np.stack(
        [np.sin(tt) * np.cos(pp), np.cos(tt), np.sin(tt) * np.sin(pp)], axis=-1
    ).reshape(-1, 3)
    uv = np.stack(
        [np.tile(j / segments, rings + 1), np.repeat(i / rings, segments + 1)], axis=-1
    )
    tris = []
    cols = segments + 1
    for ri in range(rings):
        for sj in range(segments):
            a = ri * cols + sj
            b = (ri + 1) * cols + sj
            c = (ri + 1) * cols + sj + 1
            d = ri * cols + sj + 1
            if ri > 0:
                tris.append((a, c, d))
            if ri < rings - 1:
                tris.append((a, b, c))
    mesh = TriMesh(
        vertices=radius * pts,
        triangles=np.array(tris, dtype=np.int32),
        normals=pts.copy(),
        uvs=uv,
    )
    return _orient_outward(mesh)


def make_cylinder(
    segments: int,
    height_segments: int,
    radius: float = 1.0,
    height: float = 2.0,
    caps: bool = True,
) -> TriMesh:
    """Closed y-axis cylinder centered at the origin.

    Side uvs run u around the circumference and v from top (0) to bottom (1);
    cap vertices reuse the v = 0 / v = 1 texture rows.
    """
    if segments < 3 or height_segments < 1:
        raise InvalidResolution(
            f"need segments >= 3, height_segments >= 1, got {segments}, {height_segments}"
        )
    verts, norms, uvs = [], [], []
    cols = segments + 1
    for ri in range(height_segments + 1):
        y = height / 2 - height * ri / height_segments
        for sj in range(segments + 1):
            phi = 2.0 * np.pi * sj / segments
            verts.append((radius * np.cos(phi), y, radius * np.sin(phi)))
            norms.append((np.cos(phi), 0.0, np.sin(phi)))
            uvs.append((sj / segments, ri / height_segments))
    tris = []
    for ri in range(height_segments):
        for sj in range(segments):
            a = ri * cols + sj
            b = (ri + 1) * cols + sj
            c = (ri + 1) * cols + sj + 1
            d = ri * cols + sj + 1
            tris.append((a, c, d))
            tris.append((a, b, c))
    if caps:
        for sign, v_row, ring in ((1.0, 0.0, 0), (-1.0, 1.0, height_segments)):
            center = len(verts)
            verts.append((0.0, sign * height / 2, 0.0))
            norms.append((0.0, sign, 0.0))
            uvs.append((0.5, v_row))
            base = len(verts)
            for sj in range(segments + 1):
                phi = 2.0 * np.pi * sj / segments
                verts.append((radius * np.cos(phi), sign * height / 2, radius * np.sin(phi)))
                norms.append((0.0, sign, 0.0))
                uvs.append((0.5, v_row))
            for sj in range(segments):
                if sign > 0:
                    tris.append((center, base + sj + 1, base + sj))
                else:
                    tris.append((center, base + sj, base + sj + 1))
    mesh = TriMesh(
        vertices=np.array(verts),
        triangles=np.array(tris, dtype=np.int32),
        normals=np.array(norms),
        uvs=np.array(uvs),
    )
    return _orient_outward(mesh)


def make_quad(width: float = 1.0, height: float = 1.0) -> TriMesh:
    """Two-triangle plate in the xy plane facing +z."""
    w, h = width / 2, height / 2
    verts = np.array([[-w, -h, 0], [w, -h, 0], [w, h, 0], [-w, h, 0]], dtype=np.float64)
    return TriMesh(
        vertices=verts,
        triangles=np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32),
        normals=np.tile([0.0, 0.0, 1.0], (4, 1)),
        uvs=np.array([[0, 1], [1, 1], [1, 0], [0, 0]], dtype=np.float64),
    )


def _orient_outward(mesh: TriMesh) -> TriMesh:
    """Flip triangles whose geometric normal opposes the mean vertex normal."""
    fn = mesh.face_normals()
    vn = mesh.normals[mesh.triangles].mean(axis=1)
    flip = np.einsum("ij,ij->i", fn, vn) < 0
    if np.any(flip):
        t = mesh.triangles.copy()
        t[flip] = t[flip][:, ::-1]
        mesh.triangles = np.ascontiguousarray(t)
    return mesh


def load_obj(path) -> TriMesh:
    """Wavefront OBJ reader (v / vn / vt / f with per-corner indices).

    Corners with distinct (position, uv, normal) triples become distinct
    vertices, the standard OBJ unwelding.
    """
    positions, texcoords, normals = [], [], []
    corner_map: dict[tuple[int, int, int], int] = {}
    out_v, out_vt, out_vn, faces = [], [], [], []

    def corner(spec: str) -> int:
        parts = spec.split("/")
        vi = int(parts[0])
        ti = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        ni = int(parts[2]) if len(parts) > 2 and parts[2] else 0
        key = (vi, ti, ni)
        if key not in corner_map:
            corner_map[key] = len(out_v)
            out_v.append(positions[vi - 1])
            out_vt.append(texcoords[ti - 1] if ti else (0.0, 0.0))
            out_vn.append(normals[ni - 1] if ni else (0.0, 0.0, 1.0))
        return corner_map[key]

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            token = line.split()
            if not token:
                continue
            if token[0] == "v":
                positions.append(tuple(float(x) for x in token[1:4]))
            elif token[0] == "vt":
                texcoords.append(tuple(float(x) for x in token[1:3]))
            elif token[0] == "vn":
                normals.append(tuple(float(x) for x in token[1:4]))
            elif token[0] == "f":
                idx = [corner(c) for c in token[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    return TriMesh(
        vertices=np.array(out_v),
        triangles=np.array(faces, dtype=np.int32),
        normals=np.array(out_vn),
        uvs=np.array(out_vt),
    )


def save_obj(path, mesh: TriMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in mesh.vertices:
            fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for t in mesh.uvs:
            fh.write(f"vt {t[0]:.17g} {t[1]:.17g}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        for f in mesh.triangles:
            fh.write(
                "f "
                + " ".join(f"{i + 1}/{i + 1}/{i + 1}" for i in f)
                + "\n"
            )
