"""Triangle meshes: validation, Wavefront OBJ (v/f records), synthetic meshes."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ValidationError

AREA_EPS = 1e-14


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def n_faces(self):
        return len(self.faces)

    def face_areas(self):
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def degenerate_faces(self):
        v = self.vertices[self.faces]
        scale = max(np.ptp(self.vertices, axis=0).max(), 1e-300) if len(self.vertices) else 1.0
        return np.flatnonzero(self.face_areas() <= AREA_EPS * scale * scale)

    def validate(self):
        if len(self.faces) == 0:
            raise ValidationError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            bad = np.flatnonzero((self.faces < 0).any(1) | (self.faces >= len(self.vertices)).any(1))
            raise ValidationError(f"face indices out of range in faces {bad.tolist()}")
        bad = self.degenerate_faces()
        if bad.size:
            raise ValidationError(f"degenerate (zero-area) faces: {bad.tolist()}")
        flipped = flipped_adjacencies(self.faces)
        if flipped:
            raise ValidationError(f"inconsistent winding between faces {flipped[:10]}")
        return self

    def transformed(self, R, t):
        return TriangleMesh(self.vertices @ np.asarray(R).T + np.asarray(t), self.faces.copy())

    def centroid(self):
        return self.vertices.mean(axis=0)

    def extent(self):
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0)))


def flipped_adjacencies(faces):
    """Face pairs sharing a directed edge (neighbors with opposite normals)."""
    seen = defaultdict(list)
    for fi, (a, b, c) in enumerate(np.asarray(faces)):
        for e in ((a, b), (b, c), (c, a)):
            seen[(int(e[0]), int(e[1]))].append(fi)
    return [tuple(v) for v in seen.values() if len(v) > 1]


def load_obj(path):
    """Read ``v`` and ``f`` records; polygons are fan-triangulated, other records ignored."""
    verts, faces = [], []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="replace").split("#", 1)[0].strip()
            parts = line.split()
            try:
                if parts and parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif parts and parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(idx) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
            except ValueError as exc:
                raise FormatError(str(exc), path=path, offset=offset) from exc
            offset += len(raw)
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def save_obj(path, mesh):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v %r %r %r\n" % tuple(float(x) for x in v))
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def grid_mesh(nx, ny, size=(1.0, 1.0), bump=0.25):
    """A (nx x ny)-cell sheet in the xy-plane, domed towards +z, 2*nx*ny faces.

    Normals point to +z, i.e. towards a camera placed on the +z axis.
    """
    xs = np.linspace(-size[0] / 2, size[0] / 2, nx + 1)
    ys = np.linspace(-size[1] / 2, size[1] / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    r2 = (X / (size[0] / 2)) ** 2 + (Y / (size[1] / 2)) ** 2
    Z = bump * np.exp(-r2)
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 1, a + nx + 2
            faces += [[a, b, d], [a, d, c]]
    return TriangleMesh(verts, np.asarray(faces))
