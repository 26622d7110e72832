"""Payload and configuration value types shared by every simulator module.

All types are immutable: array fields are copied on construction and marked
read-only, so instances can be shared freely across concurrent scenario runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROTOCOL_IDS = (
    "LOCAL",
    "CENTRAL",
    "UIEG",
    "EIUG",
    "CIAG",
    "ESUC",
    "UIDG",
    "DIUG",
    "DSUC",
    "UIDCG",
    "DCSUC",
)
SINGLE_ES_PROTOCOLS = ("UIEG", "EIUG", "CIAG", "ESUC")
MULTI_ES_PROTOCOLS = ("UIDG", "DIUG", "DSUC", "UIDCG", "DCSUC")

SEED_KINDS = ("task_seed", "content_seed", "sub_seed")
PAYLOAD_KINDS = ("image", "seed", "sub_seed", "sketch", "sketch_tile", "text")
TRANSPORTS = ("analog", "digital_lossless")


def _frozen_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContentGrid:
    """H x W real-valued image, nominal range [0, 1], peak value 1.0."""

    height: int
    width: int
    values: np.ndarray
    bits_per_pixel: int = 8

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.bits_per_pixel < 1:
            raise ValueError("bits_per_pixel must be positive")
        arr = _frozen_array(self.values, 2)
        if arr.shape != (self.height, self.width):
            raise ValueError(
                f"values shape {arr.shape} does not match {self.height}x{self.width}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def payload_bits(self) -> int:
        return self.height * self.width * self.bits_per_pixel


@dataclass(frozen=True)
class LatentSeed:
    """Latent feature vector: a task seed, content seed, or indexed sub-seed.

    Sub-seeds carry ``sub_range = (lo, hi)``, the index interval of the parent
    vector they cover; their values array holds exactly that slice.
    """

    values: np.ndarray
    kind: str = "task_seed"
    sub_range: tuple[int, int] | None = None
    bits_per_feature: int = 32

    def __post_init__(self):
        if self.kind not in SEED_KINDS:
            raise ValueError(f"unknown seed kind {self.kind!r}")
        if self.bits_per_feature < 1:
            raise ValueError("bits_per_feature must be positive")
        arr = _frozen_array(self.values, 1)
        if arr.size < 1:
            raise ValueError("seed must hold at least one feature")
        object.__setattr__(self, "values", arr)
        if (self.sub_range is not None) != (self.kind == "sub_seed"):
            raise ValueError("sub_range is required for sub_seed and only then")
        if self.sub_range is not None:
            lo, hi = self.sub_range
            if not (0 <= lo < hi):
                raise ValueError(f"invalid sub_range {self.sub_range}")
            if hi - lo != arr.size:
                raise ValueError("sub_range length must match values length")
            object.__setattr__(self, "sub_range", (int(lo), int(hi)))

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @property
    def payload_bits(self) -> int:
        if self.sub_range is not None:
            lo, hi = self.sub_range
            return (hi - lo) * self.bits_per_feature
        return self.dim * self.bits_per_feature


@dataclass(frozen=True)
class SketchGrid:
    """Low-resolution draft of the output; (H/k) x (W/k) for a full sketch.

    ``tile_range`` marks a horizontal band ``(row_lo, row_hi)`` of the full
    sketch when the sketch was produced cooperatively.
    """

    values: np.ndarray
    pool_factor: int
    tile_range: tuple[int, int] | None = None
    bits_per_pixel: int = 8

    def __post_init__(self):
        if self.pool_factor < 1:
            raise ValueError("pool_factor must be positive")
        if self.bits_per_pixel < 1:
            raise ValueError("bits_per_pixel must be positive")
        arr = _frozen_array(self.values, 2)
        object.__setattr__(self, "values", arr)
        if self.tile_range is not None:
            lo, hi = self.tile_range
            if not (0 <= lo < hi):
                raise ValueError(f"invalid tile_range {self.tile_range}")
            if hi - lo != arr.shape[0]:
                raise ValueError("tile_range height must match values")
            object.__setattr__(self, "tile_range", (int(lo), int(hi)))

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def payload_bits(self) -> int:
        return self.height * self.width * self.bits_per_pixel


@dataclass(frozen=True)
class TextPrompt:
    """User text with its embedding; transmitted losslessly in every protocol."""

    text: str
    embedding: np.ndarray
    payload_bits: int = 1000

    def __post_init__(self):
        if self.payload_bits < 0:
            raise ValueError("payload_bits must be non-negative")
        object.__setattr__(self, "embedding", _frozen_array(self.embedding, 1))


@dataclass(frozen=True)
class GenRequest:
    """One generation request submitted by a user."""

    request_id: str
    input_image: ContentGrid
    prompt: TextPrompt
    protocol_id: str
    arrival_time: float = 0.0

    def __post_init__(self):
        if self.protocol_id not in PROTOCOL_IDS:
            raise ValueError(f"unknown protocol {self.protocol_id!r}")
        if self.arrival_time < 0:
            raise ValueError("arrival_time must be non-negative")


@dataclass(frozen=True)
class PayloadSpec:
    """Sizing and transport of one transmitted payload.

    Digital payloads are delivered bit-exact; analog payloads are a vector of
    ``symbol_count`` real symbols subject to channel noise.
    """

    payload_kind: str
    bits: int
    symbol_count: int = 0
    transport: str = "analog"

    def __post_init__(self):
        if self.payload_kind not in PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {self.payload_kind!r}")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.bits < 0 or self.symbol_count < 0:
            raise ValueError("bits and symbol_count must be non-negative")


def payload_bits(item) -> int:
    """Deterministic bit size of a payload object."""
    if isinstance(item, (ContentGrid, LatentSeed, SketchGrid, TextPrompt)):
        return item.payload_bits
    raise TypeError(f"cannot size payloads of type {type(item).__name__}")


# ---------------------------------------------------------------------------
# File export / import


def write_pgm(grid: ContentGrid | SketchGrid, path, binary: bool = False) -> None:
    """Export a grid as a portable graymap (P5 when binary, else P2).

    Values are clamped to [0, 1] and scaled to 0..255; this export is lossy by
    design (use dump_grid/dump_sketch for exact round trips).
    """
    vals = np.clip(grid.values, 0.0, 1.0)
    pixels = np.rint(vals * 255.0).astype(np.uint8)
    h, w = pixels.shape
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
    else:
        lines = ["P2", f"{w} {h}", "255"]
        for row in pixels:
            lines.append(" ".join(str(int(v)) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pgm(path) -> np.ndarray:
    """Read a P2/P5 graymap back to a float array in [0, 1]."""
    raw = Path(path).read_bytes()
    magic = raw[:2].decode("ascii")
    if magic == "P2":
        tokens = raw.decode("ascii").split()
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        data = np.array([int(t) for t in tokens[4 : 4 + w * h]], dtype=np.float64)
    elif magic == "P5":
        header = []
        pos = 0
        while len(header) < 4:
            end = raw.index(b"\n", pos)
            header.extend(raw[pos:end].split())
            pos = end + 1
        w, h, maxval = int(header[1]), int(header[2]), int(header[3])
        data = np.frombuffer(raw[pos : pos + w * h], dtype=np.uint8).astype(np.float64)
    else:
        raise ValueError(f"not a PGM file: magic {magic!r}")
    return (data / maxval).reshape(h, w)


def _format_float(v: float) -> str:
    # repr() emits the shortest string that round-trips the double exactly
    return repr(float(v))


def dump_seed(seed: LatentSeed, path) -> None:
    """Plain-text vector dump; round-trips values bit-exactly."""
    lines = [f"kind {seed.kind}", f"bits_per_feature {seed.bits_per_feature}"]
    if seed.sub_range is not None:
        lines.append(f"sub_range {seed.sub_range[0]} {seed.sub_range[1]}")
    lines.append(f"dim {seed.dim}")
    lines.extend(_format_float(v) for v in seed.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_seed(path) -> LatentSeed:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    meta = {}
    idx = 0
    while idx < len(lines) and lines[idx].split()[0] in ("kind", "bits_per_feature", "sub_range", "dim"):
        parts = lines[idx].split()
        meta[parts[0]] = parts[1:]
        idx += 1
    dim = int(meta["dim"][0])
    values = np.array([float(v) for v in lines[idx : idx + dim]], dtype=np.float64)
    sub_range = None
    if "sub_range" in meta:
        sub_range = (int(meta["sub_range"][0]), int(meta["sub_range"][1]))
    return LatentSeed(
        values=values,
        kind=meta["kind"][0],
        sub_range=sub_range,
        bits_per_feature=int(meta["bits_per_feature"][0]),
    )


def _dump_matrix(lines: list[str], values: np.ndarray) -> None:
    for row in values:
        lines.append(" ".join(_format_float(v) for v in row))


def _load_matrix(lines: list[str], height: int) -> np.ndarray:
    rows = [[float(v) for v in line.split()] for line in lines[:height]]
    return np.array(rows, dtype=np.float64)


def dump_grid(grid: ContentGrid, path) -> None:
    """Exact text serialization of a ContentGrid."""
    lines = [
        f"height {grid.height}",
        f"width {grid.width}",
        f"bits_per_pixel {grid.bits_per_pixel}",
    ]
    _dump_matrix(lines, grid.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_grid(path) -> ContentGrid:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    height = int(lines[0].split()[1])
    width = int(lines[1].split()[1])
    bpp = int(lines[2].split()[1])
    values = _load_matrix(lines[3:], height)
    return ContentGrid(height=height, width=width, values=values, bits_per_pixel=bpp)


def dump_sketch(sketch: SketchGrid, path) -> None:
    """Exact text serialization of a SketchGrid."""
    lines = [
        f"height {sketch.height}",
        f"width {sketch.width}",
        f"pool_factor {sketch.pool_factor}",
        f"bits_per_pixel {sketch.bits_per_pixel}",
        "tile_range none"
        if sketch.tile_range is None
        else f"tile_range {sketch.tile_range[0]} {sketch.tile_range[1]}",
    ]
    _dump_matrix(lines, sketch.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_sketch(path) -> SketchGrid:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    height = int(lines[0].split()[1])
    pool_factor = int(lines[2].split()[1])
    bpp = int(lines[3].split()[1])
    tile_parts = lines[4].split()[1:]
    tile_range = None if tile_parts[0] == "none" else (int(tile_parts[0]), int(tile_parts[1]))
    values = _load_matrix(lines[5:], height)
    return SketchGrid(
        values=values, pool_factor=pool_factor, tile_range=tile_range, bits_per_pixel=bpp
    )
