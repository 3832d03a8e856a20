"""Binary file formats: F32M tensor maps, P6 PPM images, SHAN checkpoints.

F32M: magic 'F32M', u32 version=1, u32 rank, rank*u32 extents, then
little-endian float32 values row-major.

PPM: binary P6 with maxval 255; values map linearly, byte = round(255*x).

SHAN: magic 'SHAN', u32 version, u64 parameter count, then per parameter
(lexicographic by name): u16 name length, name bytes (utf-8), u32 rank,
rank*u32 extents, little-endian float32 data. A trailing u32-length-prefixed
utf-8 block holds config key=value lines (one per line), including the
parameter-init seed.
"""

import struct

import numpy as np

from .errors import DataError

F32M_MAGIC = b"F32M"
SHAN_MAGIC = b"SHAN"


def write_f32m(path, array):
    arr = np.asarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(F32M_MAGIC)
        f.write(struct.pack("<II", 1, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr).tobytes())


def read_f32m(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != F32M_MAGIC:
        raise DataError(f"{path}: not an F32M file")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported F32M version {version}")
    shape = struct.unpack_from(f"<{rank}I", blob, 12)
    count = int(np.prod(shape))
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=12 + 4 * rank)
    if data.size != count:
        raise DataError(f"{path}: truncated F32M payload")
    return data.reshape(shape).astype(np.float32)


def write_ppm(path, image):
    """image: (3,H,W) or (1,H,W) float in [0,1]; single channel is replicated."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise DataError(f"PPM image must be (1|3,H,W), got {arr.shape}")
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    h, w = arr.shape[1], arr.shape[2]
    byts = np.clip(np.rint(255.0 * arr), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(byts.transpose(1, 2, 0).tobytes())


def read_ppm(path):
    """Returns a (3,H,W) float32 array in [0,1]."""
    with open(path, "rb") as f:
        blob = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(blob):
            raise DataError(f"{path}: truncated PPM header")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            pos = blob.find(b"\n", pos) + 1
            continue
        if ch.isspace():
            pos += 1
            continue
        end = pos
        while end < len(blob) and not blob[end:end + 1].isspace():
            end += 1
        fields.append(blob[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise DataError(f"{path}: not a binary P6 PPM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    pix = np.frombuffer(blob, dtype=np.uint8, count=3 * w * h, offset=pos)
    if pix.size != 3 * w * h:
        raise DataError(f"{path}: truncated PPM payload")
    return (pix.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float32)) / 255.0


def write_checkpoint(path, arrays, config):
    """arrays: {name: ndarray}; config: {key: value} stringified as key=value lines."""
    names = sorted(arrays)
    with open(path, "wb") as f:
        f.write(SHAN_MAGIC)
        f.write(struct.pack("<IQ", 1, len(names)))
        for name in names:
            arr = np.asarray(arrays[name], dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).tobytes())
        kv = "".join(f"{k}={v}\n" for k, v in config.items()).encode("utf-8")
        f.write(struct.pack("<I", len(kv)))
        f.write(kv)


def read_checkpoint(path):
    """Returns ({name: float32 ndarray}, {key: str})."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None
    if blob[:4] != SHAN_MAGIC:
        raise DataError(f"{path}: not a SHAN checkpoint")
    version, count = struct.unpack_from("<IQ", blob, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported SHAN version {version}")
    pos = 16
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * n
    (kvlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    config = {}
    for line in blob[pos:pos + kvlen].decode("utf-8").splitlines():
        if line:
            k, _, v = line.partition("=")
            config[k] = v
    return arrays, config
