"""Face mesh with per-corner UVs and blendshape deltas, plus OBJ/.bsd I/O."""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatVersionError, InvariantError, ParseError

COMPONENT_LABELS = ("foreface", "backhead", "teeth", "lefteye", "righteye")

_UV_AREA_MIN = 1e-12
_UV_OVERLAP_MAX = 1e-9


@dataclass
class FaceMesh:
    vertices: np.ndarray          # (V, 3) f32, neutral pose
    triangles: np.ndarray         # (F, 3) i32 vertex indices
    uv_corners: np.ndarray        # (F, 3, 2) f32 per-corner UVs
    blendshape_deltas: np.ndarray  # (B, V, 3) f32, may be (0, V, 3)
    component_label: str = "foreface"

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float32)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        self.uv_corners = np.ascontiguousarray(self.uv_corners, dtype=np.float32)
        self.blendshape_deltas = np.ascontiguousarray(self.blendshape_deltas, dtype=np.float32)
        if self.blendshape_deltas.size == 0:
            self.blendshape_deltas = self.blendshape_deltas.reshape(0, len(self.vertices), 3)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_blendshapes(self) -> int:
        return len(self.blendshape_deltas)

    def validate(self, check_overlap: bool = True) -> None:
        if self.component_label not in COMPONENT_LABELS:
            raise InvariantError(f"unknown component label {self.component_label!r}")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= self.num_vertices):
            bad = np.where((self.triangles < 0) | (self.triangles >= self.num_vertices))[0]
            raise InvariantError(f"triangle {bad[0]} has out-of-range vertex index")
        if self.blendshape_deltas.shape[1:] != (self.num_vertices, 3):
            raise InvariantError("blendshape delta shape does not match vertex count")
        areas = uv_areas(self.uv_corners)
        degenerate = np.where(areas <= _UV_AREA_MIN)[0]
        if degenerate.size:
            raise InvariantError(f"degenerate UV triangle at face {degenerate[0]} (area {areas[degenerate[0]]:.3e})")
        if check_overlap:
            pair = _find_uv_overlap(self.uv_corners)
            if pair is not None:
                i, j, area = pair
                raise InvariantError(f"UV triangles {i} and {j} overlap by area {area:.3e}")

    def content_hash(self) -> int:
        """Stable u64 digest of geometry, UVs and blendshapes."""
        h = hashlib.sha256()
        for a in (self.vertices, self.triangles, self.uv_corners, self.blendshape_deltas):
            h.update(a.tobytes())
        h.update(self.component_label.encode())
        return struct.unpack("<Q", h.digest()[:8])[0]


@dataclass
class ExpressionWeights:
    weights: np.ndarray  # (B,) in [0, 1]

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32).reshape(-1)

    def validate(self, mesh: FaceMesh) -> None:
        if len(self.weights) != mesh.num_blendshapes:
            raise InvariantError(
                f"weights length {len(self.weights)} != blendshape count {mesh.num_blendshapes}")
        if self.weights.size and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise InvariantError("expression weights must lie in [0, 1]")

    @classmethod
    def neutral(cls, mesh: FaceMesh) -> "ExpressionWeights":
        return cls(np.zeros(mesh.num_blendshapes, dtype=np.float32))


def _cross2(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]


def uv_areas(uv_corners: np.ndarray) -> np.ndarray:
    """Unsigned area of each UV triangle."""
    a, b, c = uv_corners[:, 0], uv_corners[:, 1], uv_corners[:, 2]
    return 0.5 * np.abs(_cross2(b - a, c - a))


def triangle_areas_3d(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted per-vertex normals."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    fn = np.cross(b - a, c - a)  # length = 2*area
    vn = np.zeros_like(vertices, dtype=np.float64)
    for k in range(3):
        np.add.at(vn, triangles[:, k], fn)
    norms = np.linalg.norm(vn, axis=1, keepdims=True)
    return (vn / np.maximum(norms, 1e-20)).astype(vertices.dtype)


def _clip_polygon(poly, edge_a, edge_b, inside_sign):
    # Sutherland-Hodgman clip of poly against one half plane through edge_a->edge_b.
    ex, ey = edge_b[0] - edge_a[0], edge_b[1] - edge_a[1]
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp = (ex * (p[1] - edge_a[1]) - ey * (p[0] - edge_a[0])) * inside_sign
        sq = (ex * (q[1] - edge_a[1]) - ey * (q[0] - edge_a[0])) * inside_sign
        if sp >= 0:
            out.append(p)
        if (sp > 0) != (sq > 0) and sp != sq:
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _polygon_area(poly):
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * abs(s)


def _tri_overlap_area(t0, t1) -> float:
    sign = 1.0 if _cross2(t1[1] - t1[0], t1[2] - t1[0]) > 0 else -1.0
    poly = [tuple(p) for p in t0]
    for k in range(3):
        poly = _clip_polygon(poly, t1[k], t1[(k + 1) % 3], sign)
        if len(poly) < 3:
            return 0.0
    return _polygon_area(poly)


def _find_uv_overlap(uv_corners: np.ndarray, grid: int = 64):
    """First pair of UV triangles overlapping by more than the tolerance, or None."""
    uv = uv_corners.astype(np.float64)
    lo = uv.min(axis=1)
    hi = uv.max(axis=1)
    cell_lo = np.clip((lo * grid).astype(int), 0, grid - 1)
    cell_hi = np.clip((hi * grid).astype(int), 0, grid - 1)
    buckets: dict[tuple[int, int], list[int]] = {}
    for f in range(len(uv)):
        for cx in range(cell_lo[f, 0], cell_hi[f, 0] + 1):
            for cy in range(cell_lo[f, 1], cell_hi[f, 1] + 1):
                buckets.setdefault((cx, cy), []).append(f)
    seen = set()
    for ids in buckets.values():
        for ii in range(len(ids)):
            for jj in range(ii + 1, len(ids)):
                i, j = ids[ii], ids[jj]
                if (i, j) in seen:
                    continue
                seen.add((i, j))
                if (hi[i] < lo[j]).any() or (hi[j] < lo[i]).any():
                    continue
                area = _tri_overlap_area(uv[i], uv[j])
                if area > _UV_OVERLAP_MAX:
                    return i, j, area
    return None


class UvIndex:
    """Grid-accelerated point location in the UV layout of a mesh."""

    def __init__(self, mesh: FaceMesh, grid: int = 128):
        self.mesh = mesh
        self.grid = grid
        uv = mesh.uv_corners.astype(np.float64)
        lo = np.clip((uv.min(axis=1) * grid).astype(int), 0, grid - 1)
        hi = np.clip((uv.max(axis=1) * grid).astype(int), 0, grid - 1)
        self._buckets: dict[tuple[int, int], list[int]] = {}
        for f in range(len(uv)):
            for cx in range(lo[f, 0], hi[f, 0] + 1):
                for cy in range(lo[f, 1], hi[f, 1] + 1):
                    self._buckets.setdefault((cx, cy), []).append(f)
        a = uv[:, 0]
        ab = uv[:, 1] - a
        ac = uv[:, 2] - a
        det = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
        self._a = a
        self._inv = np.stack([
            np.stack([ac[:, 1], -ac[:, 0]], axis=1),
            np.stack([-ab[:, 1], ab[:, 0]], axis=1),
        ], axis=1) / det[:, None, None]

    def _bary(self, tri_ids, point):
        rel = point[None, :] - self._a[tri_ids]
        w = np.einsum("fij,fj->fi", self._inv[tri_ids], rel)  # (w1, w2)
        return np.concatenate([1.0 - w.sum(axis=1, keepdims=True), w], axis=1)

    def locate(self, uv_points: np.ndarray, snap_tol: float = 2e-3):
        """Containing triangle id and (w0, w1) barycentric pair per point.

        Ties (shared edges) resolve to the lowest triangle index. Points not
        inside any triangle snap to the nearest candidate within `snap_tol`
        of barycentric excess, else get id -1.
        """
        pts = np.asarray(uv_points, dtype=np.float64).reshape(-1, 2)
        tri_ids = np.full(len(pts), -1, dtype=np.int32)
        bary = np.zeros((len(pts), 2), dtype=np.float64)
        g = self.grid
        for i, p in enumerate(pts):
            cx = min(max(int(p[0] * g), 0), g - 1)
            cy = min(max(int(p[1] * g), 0), g - 1)
            cands = []
            for dx in (0, -1, 1):
                for dy in (0, -1, 1):
                    cands.extend(self._buckets.get((cx + dx, cy + dy), ()))
            if not cands:
                continue
            cands = np.unique(np.asarray(cands, dtype=np.int64))
            w = self._bary(cands, p)
            excess = np.maximum(-w.min(axis=1), 0.0)
            inside = excess <= 1e-9
            if inside.any():
                k = cands[inside][0]
                tri_ids[i] = k
                bary[i] = self._bary(np.asarray([k]), p)[0, :2]
            else:
                k = int(np.argmin(excess))
                if excess[k] <= snap_tol:
                    tri_ids[i] = cands[k]
                    w = np.clip(w[k], 0.0, None)
                    w = w / w.sum()
                    bary[i] = w[:2]
        return tri_ids, bary.astype(np.float32)


def uv_from_cache(mesh: FaceMesh, triangle_ids: np.ndarray, barycentric: np.ndarray) -> np.ndarray:
    """Reconstruct UV positions from cached triangle ids and (w0, w1)."""
    corners = mesh.uv_corners[triangle_ids].astype(np.float64)
    w0 = barycentric[:, 0:1].astype(np.float64)
    w1 = barycentric[:, 1:2].astype(np.float64)
    w2 = 1.0 - w0 - w1
    return (w0 * corners[:, 0] + w1 * corners[:, 1] + w2 * corners[:, 2]).astype(np.float32)


def rasterize_uv_mask(mesh: FaceMesh, resolution: int) -> np.ndarray:
    """Boolean occupancy of UV texels (texel centers inside any UV triangle)."""
    mask = np.zeros((resolution, resolution), dtype=bool)
    uv = mesh.uv_corners.astype(np.float64)
    for f in range(len(uv)):
        a, b, c = uv[f]
        lo = np.floor(np.minimum(np.minimum(a, b), c) * resolution).astype(int)
        hi = np.ceil(np.maximum(np.maximum(a, b), c) * resolution).astype(int)
        lo = np.clip(lo, 0, resolution)
        hi = np.clip(hi, 0, resolution)
        if (hi <= lo).any():
            continue
        us = (np.arange(lo[0], hi[0]) + 0.5) / resolution
        vs = (np.arange(lo[1], hi[1]) + 0.5) / resolution
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(det) < 1e-15:
            continue
        w1 = ((uu - a[0]) * (c[1] - a[1]) - (vv - a[1]) * (c[0] - a[0])) / det
        w2 = ((b[0] - a[0]) * (vv - a[1]) - (b[1] - a[1]) * (uu - a[0])) / det
        inside = (w1 >= -1e-9) & (w2 >= -1e-9) & (w1 + w2 <= 1.0 + 1e-9)
        # mask indexed [u_texel, v_texel]
        mask[lo[0]:hi[0], lo[1]:hi[1]] |= inside
    return mask


def local_uv_to_model_scale(mesh: FaceMesh) -> np.ndarray:
    """Per-triangle factor converting UV lengths to model-unit lengths."""
    a3 = triangle_areas_3d(mesh.vertices, mesh.triangles)
    a2 = uv_areas(mesh.uv_corners)
    return np.sqrt(a3 / np.maximum(a2, 1e-20)).astype(np.float32)


# ---------------------------------------------------------------------------
# OBJ + .bsd blendshape sidecar I/O

def load_mesh(path, validate: bool = True) -> FaceMesh:
    """Load an OBJ (v/vt/f) and, when present, the companion `.bsd` deltas."""
    path = Path(path)
    verts, uvs, faces, face_uvs = [], [], [], []
    label = "foreface"
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "vt":
                    uvs.append([float(parts[1]), float(parts[2])])
                elif tag == "o":
                    if parts[1] in COMPONENT_LABELS:
                        label = parts[1]
                elif tag == "f":
                    if len(parts) != 4:
                        raise ParseError(f"{path.name}:{lineno}: only triangular faces supported")
                    vi, ti = [], []
                    for corner in parts[1:4]:
                        fields = corner.split("/")
                        vi.append(int(fields[0]) - 1)
                        if len(fields) < 2 or not fields[1]:
                            raise ParseError(f"{path.name}:{lineno}: face corner missing UV index")
                        ti.append(int(fields[1]) - 1)
                    faces.append(vi)
                    face_uvs.append(ti)
            except ParseError:
                raise
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path.name}:{lineno}: malformed record {line!r}") from exc
    if not verts or not faces:
        raise ParseError(f"{path.name}: no vertices or faces found")
    verts = np.asarray(verts, dtype=np.float32)
    uvs = np.asarray(uvs, dtype=np.float32)
    faces = np.asarray(faces, dtype=np.int32)
    face_uvs = np.asarray(face_uvs, dtype=np.int32)
    if face_uvs.min() < 0 or face_uvs.max() >= len(uvs):
        raise ParseError(f"{path.name}: face UV index out of range")
    deltas = np.zeros((0, len(verts), 3), dtype=np.float32)
    sidecar = path.with_suffix(".bsd")
    if sidecar.exists():
        deltas = load_blendshapes(sidecar, expected_vertices=len(verts))
    mesh = FaceMesh(verts, faces, uvs[face_uvs], deltas, component_label=label)
    if validate:
        mesh.validate()
    return mesh


def save_mesh(mesh: FaceMesh, path) -> None:
    """Write OBJ; blendshapes (if any) go to the `.bsd` sidecar."""
    path = Path(path)
    uv_flat = mesh.uv_corners.reshape(-1, 2)
    uv_unique, uv_inverse = np.unique(uv_flat, axis=0, return_inverse=True)
    uv_inverse = uv_inverse.reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write(f"o {mesh.component_label}\n")
        for v in mesh.vertices:
            fh.write("v %.9g %.9g %.9g\n" % (v[0], v[1], v[2]))
        for t in uv_unique:
            fh.write("vt %.9g %.9g\n" % (t[0], t[1]))
        for f in range(mesh.num_triangles):
            c = [f"{mesh.triangles[f, k] + 1}/{uv_inverse[f, k] + 1}" for k in range(3)]
            fh.write("f %s %s %s\n" % tuple(c))
    if mesh.num_blendshapes:
        save_blendshapes(mesh.blendshape_deltas, path.with_suffix(".bsd"))


_BSD_MAGIC = b"BSD1"


def load_blendshapes(path, expected_vertices: int | None = None) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != _BSD_MAGIC:
        raise FormatVersionError(f"{path}: not a BSD1 blendshape file")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ChecksumError(f"{path}: CRC mismatch")
    b, v = struct.unpack("<II", blob[4:12])
    body = np.frombuffer(blob[12:-4], dtype="<f4")
    if body.size != b * v * 3:
        raise ParseError(f"{path}: body size {body.size} != {b}x{v}x3")
    if expected_vertices is not None and v != expected_vertices:
        raise InvariantError(f"{path}: blendshape vertex count {v} != mesh vertex count {expected_vertices}")
    return body.reshape(b, v, 3).copy()


def save_blendshapes(deltas: np.ndarray, path) -> None:
    deltas = np.ascontiguousarray(deltas, dtype="<f4")
    b, v, _ = deltas.shape
    payload = _BSD_MAGIC + struct.pack("<II", b, v) + deltas.tobytes()
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))
