"""PLY point-cloud reader/writer (ASCII and binary little-endian).

Reads any vertex layout that provides x/y/z; optional red/green/blue
(uchar scaled by 1/255, or float taken as-is). Missing colors default to
mid-gray (0.5, 0.5, 0.5). Writing emits double positions + uchar colors, so
binary round trips reproduce positions exactly and colors within 1/255.
"""

from __future__ import annotations

import io

import numpy as np

from .core import PointCloud
from .errors import PlyEncodingError, PlyHeaderError, PlyTruncatedError

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def read_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()

    # ---- header ----
    pos = 0
    line_no = 0
    elements = []  # (name, count, [(prop_name, np_type)]) in file order
    cur = None
    fmt = None

    def next_line():
        nonlocal pos, line_no
        end = raw.find(b"\n", pos)
        if end < 0:
            raise PlyHeaderError(line_no + 1, "unterminated header (no end_header)")
        line = raw[pos:end].strip().decode("ascii", "replace")
        pos = end + 1
        line_no += 1
        return line

    if next_line() != "ply":
        raise PlyHeaderError(1, "file does not start with 'ply'")
    while True:
        line = next_line()
        if line == "end_header":
            break
        tok = line.split()
        if not tok or tok[0] == "comment" or tok[0] == "obj_info":
            continue
        if tok[0] == "format":
            if len(tok) < 2:
                raise PlyHeaderError(line_no, "malformed format line")
            if tok[1] == "ascii":
                fmt = "ascii"
            elif tok[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise PlyEncodingError(line_no, tok[1])
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyHeaderError(line_no, f"malformed element line: {line!r}")
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyHeaderError(line_no, f"bad element count: {tok[2]!r}") from None
            cur = (tok[1], count, [])
            elements.append(cur)
        elif tok[0] == "property":
            if cur is None:
                raise PlyHeaderError(line_no, "property before any element")
            if tok[1] == "list":
                cur[2].append((tok[-1], "list", tok[2:-1]))
            else:
                if len(tok) != 3 or tok[1] not in _TYPES:
                    raise PlyHeaderError(line_no, f"unsupported property: {line!r}")
                cur[2].append((tok[2], _TYPES[tok[1]]))
        else:
            raise PlyHeaderError(line_no, f"unrecognized keyword {tok[0]!r}")
    if fmt is None:
        raise PlyHeaderError(line_no, "missing format line")

    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise PlyHeaderError(line_no, "no vertex element declared")
    vi = names.index("vertex")
    for name, _count, props in elements[:vi]:
        if any(p[1] == "list" for p in props):
            raise PlyHeaderError(
                line_no, f"variable-size element {name!r} precedes vertex data"
            )
    vname, vcount, vprops = elements[vi]
    if any(p[1] == "list" for p in vprops):
        raise PlyHeaderError(line_no, "list properties on vertices are unsupported")
    pnames = [p[0] for p in vprops]
    for axis in ("x", "y", "z"):
        if axis not in pnames:
            raise PlyHeaderError(line_no, f"vertex element lacks property {axis!r}")

    # ---- body ----
    if fmt == "binary":
        skip = sum(
            c * np.dtype([(f"f{i}", "<" + t) for i, (_n, t) in enumerate(p)]).itemsize
            for _n, c, p in elements[:vi]
        )
        dt = np.dtype([(n, "<" + t) for n, t in vprops])
        start = pos + skip
        need = vcount * dt.itemsize
        if len(raw) - start < need:
            raise PlyTruncatedError(
                len(raw), f"need {need} vertex bytes, have {len(raw) - start}"
            )
        rec = np.frombuffer(raw, dtype=dt, count=vcount, offset=start)
    else:
        text = raw[pos:].decode("ascii", "replace")
        skip_rows = sum(c for _n, c, _p in elements[:vi])
        if vcount == 0:
            arr = np.empty((0, len(vprops)))
        else:
            try:
                arr = np.loadtxt(
                    io.StringIO(text), skiprows=skip_rows, max_rows=vcount, ndmin=2
                )
            except ValueError as exc:
                raise PlyTruncatedError(pos, f"unparseable ASCII vertex data: {exc}") from None
        if arr.shape[0] < vcount:
            raise PlyTruncatedError(
                len(raw), f"expected {vcount} vertex rows, found {arr.shape[0]}"
            )
        if arr.shape[1] < len(vprops):
            raise PlyTruncatedError(pos, "vertex rows have too few columns")
        rec = {n: arr[:, i] for i, (n, _t) in enumerate(vprops)}

    pts = np.stack(
        [np.asarray(rec["x"], np.float64), np.asarray(rec["y"], np.float64),
         np.asarray(rec["z"], np.float64)], axis=1,
    )
    if all(c in pnames for c in ("red", "green", "blue")):
        cols = np.stack(
            [np.asarray(rec["red"], np.float64), np.asarray(rec["green"], np.float64),
             np.asarray(rec["blue"], np.float64)], axis=1,
        )
        ctype = dict(zip(pnames, [p[1] for p in vprops]))["red"]
        if fmt == "binary" and ctype in ("u1", "i1"):
            cols /= 255.0
        elif fmt == "ascii" and cols.size and cols.max() > 1.0:
            cols /= 255.0
    else:
        cols = np.full((vcount, 3), 0.5)
    return PointCloud(pts, cols)


def write_ply(cloud: PointCloud, path, binary: bool = True) -> None:
    n = len(cloud)
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {n}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    cols = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            rec = np.empty(
                n,
                dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                       ("red", "u1"), ("green", "u1"), ("blue", "u1")],
            )
            rec["x"], rec["y"], rec["z"] = cloud.points.T
            rec["red"], rec["green"], rec["blue"] = cols.T
            f.write(rec.tobytes())
        else:
            for p, c in zip(cloud.points, cols):
                f.write(b"%.6f %.6f %.6f %d %d %d\n" % (p[0], p[1], p[2], c[0], c[1], c[2]))
