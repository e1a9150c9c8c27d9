"""OBJ and PLY readers/writers for :class:`TriMesh`."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from .mesh import TriMesh


class MeshFormatError(ValueError):
    pass


def load_mesh(path, format: Optional[str] = None) -> TriMesh:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        return load_obj(path)
    if fmt == "ply":
        return load_ply(path)
    raise MeshFormatError(f"unsupported mesh format {fmt!r} for {path}")


def save_mesh(mesh: TriMesh, path, format: Optional[str] = None, colors=None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        save_obj(mesh, path)
    elif fmt == "ply":
        save_ply(mesh, path, colors=colors)
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r} for {path}")


def _obj_index(token: str, count: int, path, lineno: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise MeshFormatError(f"{path}:{lineno}: bad index {token!r}") from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += count
    else:
        raise MeshFormatError(f"{path}:{lineno}: index 0 is invalid in OBJ")
    if not 0 <= i < count:
        raise MeshFormatError(f"{path}:{lineno}: index {token} out of range")
    return i


def load_obj(path) -> TriMesh:
    verts, vnormals, faces, corner_vn = [], [], [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag in ("v", "vn"):
                if len(tokens) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: expected 3 coordinates")
                try:
                    xyz = [float(t) for t in tokens[1:4]]
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: bad coordinate") from None
                (verts if tag == "v" else vnormals).append(xyz)
            elif tag == "f":
                if len(tokens) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                vi, ni = [], []
                for tok in tokens[1:]:
                    parts = tok.split("/")
                    vi.append(_obj_index(parts[0], len(verts), path, lineno))
                    if len(parts) == 3 and parts[2]:
                        ni.append(_obj_index(parts[2], len(vnormals), path, lineno))
                    else:
                        ni.append(-1)
                # fan triangulation around the first corner
                for k in range(1, len(vi) - 1):
                    tri = (vi[0], vi[k], vi[k + 1])
                    if len(set(tri)) < 3:
                        raise MeshFormatError(f"{path}:{lineno}: degenerate face")
                    faces.append(tri)
                    corner_vn.append((ni[0], ni[k], ni[k + 1]))
            # vt, g, o, s, usemtl, mtllib are ignored
    vertices = np.array(verts, dtype=np.float64).reshape(-1, 3)
    face_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    normals = None
    if vnormals and faces:
        cvn = np.array(corner_vn, dtype=np.int64)
        if np.all(cvn >= 0):
            # per-vertex normals only when every vertex maps to a single vn
            vn = np.asarray(vnormals, dtype=np.float64)
            assign = np.full(len(vertices), -1, dtype=np.int64)
            fv, fn = face_arr.reshape(-1), cvn.reshape(-1)
            assign[fv] = fn
            if np.all(assign[fv] == fn) and np.all(assign >= 0):
                normals = vn[assign]
    return TriMesh(vertices, face_arr, normals)


def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in mesh.vertices]
    if mesh.vertex_normals is not None:
        lines += [f"vn {x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in mesh.vertex_normals]
        lines += [f"f {a}//{a} {b}//{b} {c}//{c}\n" for a, b, c in mesh.faces + 1]
    else:
        lines += [f"f {a} {b} {c}\n" for a, b, c in mesh.faces + 1]
    with open(path, "w") as fh:
        fh.writelines(lines)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _ply_header(fh, path):
    if fh.readline().strip() != b"ply":
        raise MeshFormatError(f"{path}:1: missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop, dtype) or (prop, ('list', count_t, item_t))])
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshFormatError(f"{path}:{lineno}: unexpected end of header")
        tokens = raw.decode("ascii", "replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}:{lineno}: property before element")
            try:
                if tokens[1] == "list":
                    elements[-1][2].append((tokens[4], ("list", _PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]])))
                else:
                    elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
            except KeyError as exc:
                raise MeshFormatError(f"{path}:{lineno}: unknown property type {exc}") from None
        elif tokens[0] == "end_header":
            return fmt, elements, lineno
        else:
            raise MeshFormatError(f"{path}:{lineno}: unexpected header line {raw!r}")


def load_ply(path) -> TriMesh:
    with open(path, "rb") as fh:
        fmt, elements, lineno = _ply_header(fh, path)
        if fmt == "ascii":
            verts, faces = _ply_ascii(fh, elements, path, lineno)
        elif fmt == "binary_little_endian":
            verts, faces = _ply_binary(fh, elements, path)
        else:
            raise MeshFormatError(f"{path}: unsupported PLY format {fmt!r}")
    if verts is None:
        raise MeshFormatError(f"{path}: no vertex element")
    return TriMesh(verts, faces if faces is not None else np.zeros((0, 3), np.int64))


def _fan(poly, out):
    for k in range(1, len(poly) - 1):
        out.append((poly[0], poly[k], poly[k + 1]))


def _ply_ascii(fh, elements, path, lineno):
    verts = faces = None
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise MeshFormatError(f"{path}:{lineno}: unexpected end of file in {name}")
            tokens = raw.split()
            pos = 0
            rec = {}
            try:
                for pname, ptype in props:
                    if isinstance(ptype, tuple):
                        n = int(tokens[pos])
                        rec[pname] = [int(t) for t in tokens[pos + 1:pos + 1 + n]]
                        pos += 1 + n
                    else:
                        rec[pname] = float(tokens[pos])
                        pos += 1
            except (ValueError, IndexError):
                raise MeshFormatError(f"{path}:{lineno}: malformed {name} record") from None
            rows.append(rec)
        if name == "vertex":
            verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64).reshape(-1, 3)
        elif name == "face":
            key = "vertex_indices" if any(p == "vertex_indices" for p, _ in props) else "vertex_index"
            tris = []
            for r in rows:
                _fan(r[key], tris)
            faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return verts, faces


def _ply_binary(fh, elements, path):
    verts = faces = None
    data = fh.read()
    offset = 0
    for name, count, props in elements:
        has_list = any(isinstance(t, tuple) for _, t in props)
        if not has_list:
            dt = np.dtype([(p, "<" + t) for p, t in props])
            arr = np.frombuffer(data, dtype=dt, count=count, offset=offset)
            offset += dt.itemsize * count
            if name == "vertex":
                verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
            continue
        if name != "face" or len(props) != 1:
            raise MeshFormatError(f"{path}: unsupported list layout in element {name!r}")
        _, (_, ct, it) = props[0]
        cdt, idt = np.dtype("<" + ct), np.dtype("<" + it)
        # fast path: all triangles
        tri_dt = np.dtype([("n", cdt), ("i", idt, (3,))])
        if offset + tri_dt.itemsize * count <= len(data):
            arr = np.frombuffer(data, dtype=tri_dt, count=count, offset=offset)
            if np.all(arr["n"] == 3):
                faces = arr["i"].astype(np.int64)
                offset += tri_dt.itemsize * count
                continue
        tris = []
        for _ in range(count):
            if offset + cdt.itemsize > len(data):
                raise MeshFormatError(f"{path}: truncated face data")
            n = int(np.frombuffer(data, cdt, 1, offset)[0])
            offset += cdt.itemsize
            poly = np.frombuffer(data, idt, n, offset).tolist()
            offset += idt.itemsize * n
            _fan(poly, tris)
        faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return verts, faces


def save_ply(mesh: TriMesh, path, colors=None, ascii: bool = False) -> None:
    """Write PLY; ``colors`` is an optional (V, 3) uint8 array."""
    header = ["ply", f"format {'ascii' if ascii else 'binary_little_endian'} 1.0",
              f"element vertex {mesh.n_vertices}",
              "property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices", "end_header"]
    head = ("\n".join(header) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(head)
        if ascii:
            for i, (x, y, z) in enumerate(mesh.vertices.astype(np.float32)):
                extra = "" if colors is None else " %d %d %d" % tuple(colors[i])
                fh.write(f"{x:.9g} {y:.9g} {z:.9g}{extra}\n".encode())
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n".encode())
            return
        fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
        if colors is not None:
            fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        vrec = np.empty(mesh.n_vertices, dtype=np.dtype(fields))
        vrec["x"], vrec["y"], vrec["z"] = mesh.vertices.T.astype(np.float32)
        if colors is not None:
            vrec["red"], vrec["green"], vrec["blue"] = colors.T
        fh.write(vrec.tobytes())
        frec = np.empty(mesh.n_faces, dtype=np.dtype([("n", "u1"), ("i", "<i4", (3,))]))
        frec["n"] = 3
        frec["i"] = mesh.faces.astype(np.int32)
        fh.write(frec.tobytes())


def ensure_exists(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(os.fspath(p))
    return p


__all__ = ["MeshFormatError", "load_mesh", "save_mesh", "load_obj", "save_obj", "load_ply", "save_ply"]
