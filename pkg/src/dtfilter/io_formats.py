"""Bit-exact on-disk formats for images, maps, and model checkpoints.

Formats:
  tensor      ``DTT1\\n`` + ASCII header ``<H> <W> <C> f64\\n`` + little-endian
              float64 payload, row-major channel-innermost, no trailing bytes.
  PPM/PGM     binary netpbm (P6/P5 only), maxval 255.
  checkpoint  ``DTCK v1\\n<n>\\n`` + n index lines ``<name> <nbytes>\\n`` +
              that many complete tensor blobs concatenated in index order.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, InvalidParameterError, LabelError
from .grids import EdgeMap, ScoreMap

TENSOR_MAGIC = b"DTT1"
CHECKPOINT_MAGIC = b"DTCK v1"

# Checkpoint section names in on-disk order.  Each parameter tensor is stored
# as a 3-D tensor blob; 4-D conv kernels fold their two channel axes into the
# innermost dimension and are unfolded on read.
CHECKPOINT_SECTIONS = (
    "conv1_weight",
    "conv1_bias",
    "conv2_weight",
    "conv2_bias",
    "head_weight",
    "head_bias",
)


def _tensor_bytes(data: np.ndarray) -> bytes:
    h, w, c = data.shape
    header = f"{h} {w} {c} f64\n".encode("ascii")
    return TENSOR_MAGIC + b"\n" + header + np.ascontiguousarray(data, dtype="<f8").tobytes()


def _parse_tensor(buf: bytes, base: int, what: str) -> np.ndarray:
    """Parse one complete tensor blob; `base` offsets error messages."""
    if len(buf) < 5 or buf[:4] != TENSOR_MAGIC or buf[4:5] != b"\n":
        raise FormatError(f"{what}: bad magic at byte {base}, expected 'DTT1' + newline")
    end = buf.find(b"\n", 5)
    if end < 0:
        raise FormatError(f"{what}: unterminated header at byte {base + 5}")
    fields = buf[5:end].decode("ascii", errors="replace").split()
    if len(fields) != 4 or fields[3] != "f64":
        raise FormatError(
            f"{what}: header must be '<H> <W> <C> f64', got {buf[5:end]!r} at byte {base + 5}"
        )
    try:
        h, w, c = (int(v) for v in fields[:3])
    except ValueError:
        raise FormatError(f"{what}: non-integer dimension in header {buf[5:end]!r}") from None
    if min(h, w, c) < 1:
        raise FormatError(f"{what}: dimensions must be >= 1, got {h}x{w}x{c}")
    payload = buf[end + 1 :]
    expected = 8 * h * w * c
    if len(payload) != expected:
        raise FormatError(
            f"{what}: payload is {len(payload)} bytes at byte {base + end + 1}, "
            f"expected exactly {expected}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(h, w, c).astype(np.float64)


def write_tensor(path, m: ScoreMap) -> None:
    """Write a score map as a tensor blob (lossless, little-endian float64)."""
    with open(path, "wb") as f:
        f.write(_tensor_bytes(m.data))


def read_tensor(path) -> ScoreMap:
    """Read a tensor blob back into a score map, bitwise."""
    with open(path, "rb") as f:
        buf = f.read()
    return ScoreMap(_parse_tensor(buf, 0, str(path)))


def _read_netpbm_header(buf: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    """Parse 'P6'/'P5', width, height, maxval; returns (w, h, maxval, payload offset).

    Whitespace-separated tokens with '#' comments to end of line, then exactly
    one whitespace byte before the payload.
    """
    if buf[:2] != magic:
        raise FormatError(
            f"{path}: bad magic {buf[:2]!r} at byte 0, expected {magic.decode()!r}"
        )
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(buf):
            raise FormatError(f"{path}: truncated header at byte {pos}")
        ch = buf[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
        elif ch.isdigit():
            start = pos
            while pos < len(buf) and buf[pos : pos + 1].isdigit():
                pos += 1
            tokens.append(int(buf[start:pos]))
        else:
            raise FormatError(f"{path}: unexpected header byte {ch!r} at byte {pos}")
    if pos >= len(buf) or buf[pos : pos + 1] not in b" \t\r\n":
        raise FormatError(f"{path}: missing whitespace after maxval at byte {pos}")
    w, h, maxval = tokens
    if w < 1 or h < 1:
        raise FormatError(f"{path}: image dimensions must be >= 1, got {w}x{h}")
    if not (1 <= maxval <= 255):
        raise FormatError(f"{path}: only single-byte maxval <= 255 supported, got {maxval}")
    return w, h, maxval, pos + 1


def _read_netpbm(path, magic: bytes, channels: int) -> tuple[np.ndarray, int]:
    with open(path, "rb") as f:
        buf = f.read()
    w, h, maxval, offset = _read_netpbm_header(buf, magic, path)
    expected = w * h * channels
    payload = buf[offset : offset + expected]
    if len(payload) != expected or len(buf) != offset + expected:
        raise FormatError(
            f"{path}: payload is {len(buf) - offset} bytes at byte {offset}, "
            f"expected exactly {expected}"
        )
    values = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return values, maxval


def _quantize(values: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Scale to [0, maxval], rounding half away from zero, clamping after."""
    scaled = values * float(maxval)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, 0, maxval).astype(np.uint8)


def read_ppm(path) -> ScoreMap:
    """Read a binary P6 image, scaling samples to [0, 1] by v/255."""
    values, maxval = _read_netpbm(path, b"P6", 3)
    if maxval != 255:
        raise FormatError(f"{path}: PPM maxval must be 255, got {maxval}")
    return ScoreMap(values.astype(np.float64) / 255.0)


def write_ppm(path, image: ScoreMap) -> None:
    """Write a 3-channel map in [0, 1] as a binary P6 image."""
    if image.channels != 3:
        raise InvalidParameterError(f"PPM requires 3 channels, got {image.channels}")
    u8 = _quantize(image.data)
    with open(path, "wb") as f:
        f.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def read_pgm(path, mode: str = "labels"):
    """Read a binary P5 map.

    mode='labels' returns the raw integer samples; mode='edge' returns an
    EdgeMap scaled to [0, 1] by v/maxval.
    """
    if mode not in ("labels", "edge"):
        raise InvalidParameterError(f"mode must be 'labels' or 'edge', got {mode!r}")
    values, maxval = _read_netpbm(path, b"P5", 1)
    values = values[:, :, 0]
    if mode == "labels":
        return values.astype(np.int64)
    return EdgeMap(values.astype(np.float64) / float(maxval))


def write_pgm(path, data, mode: str = "labels") -> None:
    """Write a label map (raw integers) or an edge map (scaled) as binary P5."""
    if mode == "labels":
        arr = np.asarray(data)
        if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
            raise LabelError(f"label map must be a 2-D integer array, got {arr.dtype}, {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise LabelError(f"labels must fit one byte, got range [{arr.min()}, {arr.max()}]")
        u8 = arr.astype(np.uint8)
    elif mode == "edge":
        if not isinstance(data, EdgeMap):
            raise InvalidParameterError("edge mode expects an EdgeMap")
        u8 = _quantize(data.data)
    else:
        raise InvalidParameterError(f"mode must be 'labels' or 'edge', got {mode!r}")
    h, w = u8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def write_checkpoint(path, model) -> None:
    """Serialize an edge model as named tensor sections behind an ASCII index."""
    c1 = model.conv1_weight.shape[3]
    c2 = model.conv2_weight.shape[3]
    sections = {
        "conv1_weight": model.conv1_weight.reshape(3, 3, 3 * c1),
        "conv1_bias": model.conv1_bias.reshape(1, 1, c1),
        "conv2_weight": model.conv2_weight.reshape(3, 3, c1 * c2),
        "conv2_bias": model.conv2_bias.reshape(1, 1, c2),
        "head_weight": model.head_weight.reshape(1, 1, c1 + c2),
        "head_bias": np.array([[[model.head_bias]]], dtype=np.float64),
    }
    blobs = {name: _tensor_bytes(sections[name]) for name in CHECKPOINT_SECTIONS}
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(f"{len(CHECKPOINT_SECTIONS)}\n".encode("ascii"))
        for name in CHECKPOINT_SECTIONS:
            f.write(f"{name} {len(blobs[name])}\n".encode("ascii"))
        for name in CHECKPOINT_SECTIONS:
            f.write(blobs[name])


def read_checkpoint(path):
    """Reconstruct an edge model from a checkpoint; bitwise-lossless."""
    from .edgenet import EdgeModel  # deferred: edgenet imports this module

    with open(path, "rb") as f:
        buf = f.read()
    head = len(CHECKPOINT_MAGIC)
    if buf[: head + 1] != CHECKPOINT_MAGIC + b"\n":
        raise FormatError(
            f"{path}: bad or unsupported checkpoint version in {buf[:head]!r}; expected 'DTCK v1'"
        )
    pos = head + 1
    end = buf.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"{path}: truncated section count at byte {pos}")
    try:
        count = int(buf[pos:end])
    except ValueError:
        raise FormatError(f"{path}: bad section count {buf[pos:end]!r}") from None
    pos = end + 1
    index: list[tuple[str, int]] = []
    for _ in range(count):
        end = buf.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: truncated index at byte {pos}")
        parts = buf[pos:end].decode("ascii", errors="replace").rsplit(" ", 1)
        if len(parts) != 2 or not parts[1].isdigit():
            raise FormatError(f"{path}: bad index line {buf[pos:end]!r} at byte {pos}")
        index.append((parts[0], int(parts[1])))
        pos = end + 1
    names = [name for name, _ in index]
    if names != list(CHECKPOINT_SECTIONS):
        missing = sorted(set(CHECKPOINT_SECTIONS) - set(names))
        detail = f"missing sections {missing}" if missing else f"unexpected sections {names}"
        raise FormatError(f"{path}: {detail}; expected exactly {list(CHECKPOINT_SECTIONS)}")
    tensors: dict[str, np.ndarray] = {}
    for name, nbytes in index:
        blob = buf[pos : pos + nbytes]
        if len(blob) != nbytes:
            raise FormatError(f"{path}: section {name!r} truncated at byte {pos}")
        tensors[name] = _parse_tensor(blob, pos, f"{path}:{name}")
        pos += nbytes
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes after last section")

    conv1 = tensors["conv1_weight"]
    if conv1.shape[:2] != (3, 3) or conv1.shape[2] % 3 != 0:
        raise FormatError(f"{path}: conv1_weight shape {conv1.shape} is not (3, 3, 3*c1)")
    c1 = conv1.shape[2] // 3
    conv2 = tensors["conv2_weight"]
    if conv2.shape[:2] != (3, 3) or conv2.shape[2] != c1 * tensors["conv2_bias"].shape[2]:
        raise FormatError(f"{path}: conv2_weight shape {conv2.shape} inconsistent with c1={c1}")
    c2 = conv2.shape[2] // c1
    if tensors["head_weight"].shape != (1, 1, c1 + c2) or tensors["head_bias"].shape != (1, 1, 1):
        raise FormatError(f"{path}: head section shapes inconsistent with c1={c1}, c2={c2}")
    return EdgeModel(
        conv1_weight=conv1.reshape(3, 3, 3, c1),
        conv1_bias=tensors["conv1_bias"].reshape(c1),
        conv2_weight=conv2.reshape(3, 3, c1, c2),
        conv2_bias=tensors["conv2_bias"].reshape(c2),
        head_weight=tensors["head_weight"].reshape(c1 + c2),
        head_bias=float(tensors["head_bias"][0, 0, 0]),
    )
