"""File formats: binary section container, binary PPM images, Wavefront OBJ.

Container layout (all integers little-endian)::

    magic        8 bytes   b"SCRFCT" + 0x00 + version (currently 1)
    n_sections   u32
    section * n_sections:
        name_len u16, name (utf-8)
        kind     u8        0 = ndarray, 1 = JSON document (utf-8)
        ndarray: dtype u8 (see DTYPES), ndim u8, shape u64 * ndim
        length   u64       payload byte count
        payload  raw bytes (arrays are C-order, little-endian)
        crc32    u32       of the payload

Readers verify every CRC and report the first bad section by name.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"SCRFCT\x00\x01"
DTYPES = {0: "<f8", 1: "<i8", 2: "|u1", 3: "<f4", 4: "<i4"}
_CODES = {np.dtype(v).str: k for k, v in DTYPES.items()}


class CheckpointError(ValueError):
    """A container could not be read; ``section`` names where it failed."""

    def __init__(self, section, message):
        super().__init__(f"corrupt checkpoint section {section!r}: {message}")
        self.section = section


def write_container(path, arrays, docs=None):
    """Write named arrays and JSON documents to ``path``."""
    docs = docs or {}
    chunks = [MAGIC, struct.pack("<I", len(arrays) + len(docs))]
    for name, doc in docs.items():
        payload = json.dumps(doc, sort_keys=True).encode("utf-8")
        chunks.append(_header(name, 1))
        chunks.append(struct.pack("<Q", len(payload)))
        chunks.append(payload)
        chunks.append(struct.pack("<I", zlib.crc32(payload)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        code = _CODES.get(np.dtype(le).str)
        if code is None:
            raise TypeError(f"unsupported dtype {arr.dtype} for section {name!r}")
        arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
        payload = arr.tobytes()
        chunks.append(_header(name, 0))
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(struct.pack("<Q", len(payload)))
        chunks.append(payload)
        chunks.append(struct.pack("<I", zlib.crc32(payload)))
    Path(path).write_bytes(b"".join(chunks))


def _header(name, kind):
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw + struct.pack("<B", kind)


def read_container(path):
    """Return ``(arrays, docs)`` dictionaries read from ``path``."""
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError("header", "bad magic")
    pos = 8
    try:
        (count,) = struct.unpack_from("<I", buf, pos)
    except struct.error:
        raise CheckpointError("header", "truncated") from None
    pos += 4
    arrays, docs = {}, {}
    name = "header"
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (kind,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = None
            if kind == 0:
                code, ndim = struct.unpack_from("<BB", buf, pos)
                pos += 2
                shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
                pos += 8 * ndim
                if code not in DTYPES:
                    raise CheckpointError(name, f"unknown dtype code {code}")
            elif kind != 1:
                raise CheckpointError(name, f"unknown section kind {kind}")
            (length,) = struct.unpack_from("<Q", buf, pos)
            pos += 8
            payload = buf[pos:pos + length]
            pos += length
            (crc,) = struct.unpack_from("<I", buf, pos)
            pos += 4
        except (struct.error, UnicodeDecodeError):
            raise CheckpointError(name, "truncated or malformed") from None
        if len(payload) != length or zlib.crc32(payload) != crc:
            raise CheckpointError(name, "checksum mismatch")
        if kind == 1:
            docs[name] = json.loads(payload.decode("utf-8"))
        else:
            arr = np.frombuffer(payload, dtype=DTYPES[code])
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise CheckpointError(name, "shape does not match payload")
            arrays[name] = arr.reshape(shape).copy()
    return arrays, docs


def write_ppm(path, image):
    """Write an (H, W, 3) float image in [0, 1] as binary P6, 8 bits."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    data = np.round(img * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_ppm(path):
    buf = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        end = pos
        while not buf[end:end + 1].isspace():
            end += 1
        tokens.append(buf[pos:end])
        pos = end
    if tokens[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h, maxval = (int(x) for x in tokens[1:])
    pos += 1
    data = np.frombuffer(buf[pos:pos + w * h * 3], dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_obj(path, vertices, triangles, normals=None, colors=None):
    """ASCII OBJ with 9 significant digits; per-vertex colours as ``v x y z r g b``."""
    lines = ["# scorecraft mesh"]
    for i, v in enumerate(vertices):
        s = "v " + " ".join(f"{x:.9g}" for x in v)
        if colors is not None:
            s += " " + " ".join(f"{c:.9g}" for c in colors[i])
        lines.append(s)
    if normals is not None:
        lines.extend("vn " + " ".join(f"{x:.9g}" for x in n) for n in normals)
        lines.extend(f"f {a}//{a} {b}//{b} {c}//{c}" for a, b, c in np.asarray(triangles) + 1)
    else:
        lines.extend(f"f {a} {b} {c}" for a, b, c in np.asarray(triangles) + 1)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_obj(path):
    """Return ``(vertices, triangles, normals, colors)``; absent parts are None."""
    verts, cols, norms, faces = [], [], [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            nums = [float(x) for x in parts[1:]]
            verts.append(nums[:3])
            if len(nums) >= 6:
                cols.append(nums[3:6])
        elif parts[0] == "vn":
            norms.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return (
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        np.array(norms) if norms else None,
        np.array(cols) if len(cols) == len(verts) and cols else None,
    )
