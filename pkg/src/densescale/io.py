"""PGM images, CSV signals, video frame directories and scale-map writers."""
from __future__ import annotations

import csv
import os
import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .scalespace import FrameStream, Signal1D, as_image
from .selection import S_EFF_OFFSET, JointScaleMap, ScaleMap, effective_scale, max_response_map

MAP_MAGIC = b"DSCLMAP1"
JOINT_MAGIC = b"DSCLJNT1"
_WS = b" \t\r\n\v\f"


# ----------------------------------------------------------------------------
# PGM

class _HeaderReader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def token(self) -> bytes:
        buf, n = self.buf, len(self.buf)
        while self.pos < n:
            ch = buf[self.pos:self.pos + 1]
            if ch == b"#":
                end = buf.find(b"\n", self.pos)
                self.pos = n if end < 0 else end + 1
            elif ch in _WS:
                self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < n and buf[self.pos:self.pos + 1] not in _WS and buf[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if start == self.pos:
            raise FormatError(f"unexpected end of header at byte {start}", start)
        return buf[start:self.pos]

    def integer(self, what: str) -> int:
        start = self.pos
        tok = self.token()
        if not tok.isdigit():
            raise FormatError(f"bad {what} {tok!r} at byte {start}", start)
        return int(tok)


def decode_pgm(buf: bytes) -> np.ndarray:
    """Decode P2/P5 bytes into a float image in [0, 1]."""
    r = _HeaderReader(buf)
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file (magic {magic!r}) at byte 0", 0)
    r.pos = 2
    w = r.integer("width")
    h = r.integer("height")
    maxval = r.integer("maxval")
    if w < 1 or h < 1:
        raise FormatError(f"empty image {w}x{h} in header", r.pos)
    if not 0 < maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535 at byte {r.pos}", r.pos)
    n = w * h
    if magic == b"P5":
        if r.pos >= len(buf) or buf[r.pos:r.pos + 1] not in _WS:
            raise FormatError(f"missing whitespace after header at byte {r.pos}", r.pos)
        start = r.pos + 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(buf) - start < need:
            raise FormatError(f"truncated payload: need {need} bytes from byte {start}, have {len(buf) - start}",
                              len(buf))
        data = np.frombuffer(buf, dtype=dtype, count=n, offset=start).astype(float)
    else:
        vals = []
        for _ in range(n):
            start = r.pos
            try:
                vals.append(r.integer("sample"))
            except FormatError as exc:
                raise FormatError(f"truncated or bad ASCII payload at byte {start}: {exc}", start) from None
        data = np.asarray(vals, dtype=float)
    if data.max(initial=0) > maxval:
        raise FormatError(f"sample exceeds maxval {maxval}", None)
    return data.reshape(h, w) / maxval


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def encode_pgm(image, ascii: bool = False, maxval: int = 255) -> bytes:
    img = as_image(image)
    if not 0 < maxval <= 65535:
        raise ParameterError("maxval must lie in 1..65535")
    q = np.clip(np.rint(img * maxval), 0, maxval).astype(np.int64)
    h, w = q.shape
    if ascii:
        lines = [" ".join(str(v) for v in row) for row in q]
        return f"P2\n{w} {h}\n{maxval}\n".encode() + ("\n".join(lines) + "\n").encode()
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()


def write_image(image, path, ascii: bool = False, maxval: int = 255):
    """Write intensities in [0, 1] (clipped) as 8-bit PGM by default."""
    data = encode_pgm(image, ascii, maxval)
    with open(path, "wb") as fh:
        fh.write(data)


# ----------------------------------------------------------------------------
# signals

_HEADER = re.compile(r"#\s*sample_period\s*=\s*(\S+)")


def read_signal(path) -> Signal1D:
    """One value per line; ``# sample_period=<seconds>`` header, other ``#`` lines ignored."""
    period = 1.0
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                m = _HEADER.match(text)
                if m:
                    try:
                        period = float(m.group(1))
                    except ValueError:
                        raise FormatError(f"line {lineno}: bad sample_period {m.group(1)!r}", lineno) from None
                continue
            field = text.split(",")[0].strip()
            try:
                vals.append(float(field))
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric value {field!r}", lineno) from None
    if not vals:
        raise FormatError("signal file contains no samples", 0)
    try:
        return Signal1D(np.asarray(vals), period)
    except ParameterError as exc:
        raise FormatError(str(exc), 0) from None


def write_signal(signal: Signal1D, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# sample_period={signal.sample_period!r}\n")
        for v in signal.data:
            fh.write(repr(float(v)) + "\n")


# ----------------------------------------------------------------------------
# video

def read_frames(directory) -> FrameStream:
    """Numbered PGM frames (sorted by the digits in their names) plus ``manifest.txt`` with ``fps=<n>``."""
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.is_file():
        raise FormatError(f"{manifest}: missing manifest", 0)
    fps = None
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        line = line.strip()
        if line.startswith("fps="):
            try:
                fps = float(line[4:])
            except ValueError:
                raise FormatError(f"{manifest}: line {lineno}: bad fps {line[4:]!r}", lineno) from None
    if fps is None or not fps > 0:
        raise FormatError(f"{manifest}: no positive fps=<n> line", 0)
    names = [p for p in d.iterdir() if p.suffix.lower() == ".pgm"]
    if not names:
        raise FormatError(f"{d}: no .pgm frames", 0)

    def key(p):
        digits = re.findall(r"\d+", p.stem)
        return (int(digits[-1]) if digits else -1, p.name)

    frames = []
    for p in sorted(names, key=key):
        try:
            frames.append(read_image(p))
        except FormatError as exc:
            raise FormatError(f"{p.name}: {exc}", exc.offset) from None
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise FormatError(f"{d}: frames differ in size {sorted(shapes)}", 0)
    return FrameStream(np.stack(frames), fps)


def write_frames(stream: FrameStream, directory, prefix: str = "frame"):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "manifest.txt").write_text(f"fps={stream.frame_rate!r}\n")
    lo, hi = float(stream.frames.min()), float(stream.frames.max())
    span = hi - lo if hi > lo else 1.0
    width = max(4, len(str(len(stream.frames))))
    for i, frame in enumerate(stream.frames):
        write_image((frame - lo) / span, d / f"{prefix}{i:0{width}d}.pgm")


# ----------------------------------------------------------------------------
# scale maps

def encode_scale_map(smap: ScaleMap) -> bytes:
    """Magic, uint64 H and W, then per point (row-major) float64 count and (s_hat, magnitude, w1) triples.

    A map without any estimate is written as the 24-byte header alone.
    """
    shape = smap.shape
    h, w = (1, shape[0]) if len(shape) == 1 else (int(np.prod(shape[:-1])), shape[-1])
    head = MAP_MAGIC + struct.pack("<QQ", h, w)
    if smap.n_estimates() == 0:
        return head
    counts = smap.count.reshape(-1)
    m = smap.max_count
    s = smap.s_hat.reshape(m, -1)
    mag = smap.magnitude.reshape(m, -1)
    w1 = smap.w1.reshape(m, -1)
    parts = [head]
    for i, c in enumerate(counts):
        rec = np.empty(1 + 3 * c, dtype="<f8")
        rec[0] = c
        rec[1::3], rec[2::3], rec[3::3] = s[:c, i], mag[:c, i], w1[:c, i]
        parts.append(rec.tobytes())
    return b"".join(parts)


def decode_scale_map(buf: bytes):
    """Inverse of encode_scale_map: (shape, list of per-point lists of (s_hat, magnitude, w1))."""
    if buf[:8] != MAP_MAGIC:
        raise FormatError("bad scale-map magic at byte 0", 0)
    if len(buf) < 24:
        raise FormatError(f"truncated scale-map header at byte {len(buf)}", len(buf))
    h, w = struct.unpack("<QQ", buf[8:24])
    points = []
    if len(buf) == 24:
        return (h, w), [[] for _ in range(h * w)]
    pos = 24
    for _ in range(h * w):
        if pos + 8 > len(buf):
            raise FormatError(f"truncated scale-map body at byte {pos}", pos)
        c = int(struct.unpack_from("<d", buf, pos)[0])
        pos += 8
        end = pos + 24 * c
        if end > len(buf):
            raise FormatError(f"truncated scale-map record at byte {pos}", pos)
        vals = np.frombuffer(buf, dtype="<f8", count=3 * c, offset=pos).reshape(c, 3)
        points.append([tuple(map(float, v)) for v in vals])
        pos = end
    if pos != len(buf):
        raise FormatError(f"trailing bytes after scale map at byte {pos}", pos)
    return (h, w), points


def scale_map_image(s_hat, sigma_min: float, sigma_max: float) -> np.ndarray:
    """8-bit gray levels: 0 marks no estimate, 1..255 span s_eff over the ladder range (darker = finer)."""
    s = np.asarray(s_hat, dtype=float)
    lo = np.log2(S_EFF_OFFSET + sigma_min**2)
    hi = np.log2(S_EFF_OFFSET + sigma_max**2)
    out = np.zeros(s.shape, dtype=np.uint8)
    valid = np.isfinite(s) & (s > 0)
    if np.any(valid):
        t = (effective_scale(s[valid]) - lo) / (hi - lo)
        out[valid] = np.clip(np.rint(1 + 254 * t), 1, 255).astype(np.uint8)
    return out


def scale_map_summary(s_hat) -> dict:
    s = np.asarray(s_hat, dtype=float)
    s = s[np.isfinite(s) & (s > 0)]
    if s.size == 0:
        return {"points": 0, "mean_s_eff": float("nan"), "std_s_eff": float("nan"),
                "sigma_mean": float("nan"), "relative_spread": float("nan")}
    se = effective_scale(s)
    mu, sd = float(se.mean()), float(se.std())
    sig = np.sqrt(2**mu - S_EFF_OFFSET)
    hi = np.sqrt(2 ** (mu + sd) - S_EFF_OFFSET)
    lo = np.sqrt(max(2 ** (mu - sd) - S_EFF_OFFSET, 0.0))
    return {"points": int(s.size), "mean_s_eff": mu, "std_s_eff": sd,
            "sigma_mean": float(sig), "relative_spread": float((hi - lo) / (2 * sig))}


def _write_pgm_u8(levels: np.ndarray, path):
    h, w = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode() + levels.astype("u1").tobytes())


def write_scale_map(smap, base_path, sigma_min: float, sigma_max: float, region=None) -> list:
    """Write ``<base>.dsm`` (binary), ``<base>.pgm`` (max response) and ``<base>.csv`` (summary).

    For joint maps the spatial estimates are used. ``region`` optionally selects
    the points entering the CSV summary (a tuple of slices).
    """
    base = Path(base_path)
    if isinstance(smap, JointScaleMap):
        smap = ScaleMap(smap.s_hat, smap.magnitude, np.full(smap.s_hat.shape, 0.5), smap.flags, smap.count,
                        np.zeros(smap.shape, dtype=bool), smap.s_levels)
    paths = [base.with_suffix(".dsm"), base.with_suffix(".pgm"), base.with_suffix(".csv")]
    paths[0].write_bytes(encode_scale_map(smap))
    best = max_response_map(smap).s_hat
    img = best if best.ndim == 2 else best.reshape(1, -1) if best.ndim == 1 else best.reshape(-1, best.shape[-1])
    _write_pgm_u8(scale_map_image(img, sigma_min, sigma_max), paths[1])
    stats = scale_map_summary(best if region is None else best[region])
    with open(paths[2], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(stats))
        wr.writerow([repr(v) for v in stats.values()])
    return paths


def remove_quietly(paths):
    for p in paths:
        try:
            os.remove(p)
        except OSError:
            pass
