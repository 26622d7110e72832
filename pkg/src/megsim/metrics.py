"""Communication-overhead accounting, distortion metrics, and trial
aggregation.

``expected_overhead`` is a closed-form account of every workflow's traffic,
independent of the executor; the test suite cross-checks it against the bit
totals observed in executed transcripts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .content import MULTI_ES_PROTOCOLS, PROTOCOL_IDS, ContentGrid


@dataclass(frozen=True)
class OverheadSizes:
    """Payload sizes (bits) and server count used by the accounting."""

    image_bits: int
    seed_bits: int
    text_bits: int
    sketch_bits: int
    es_count: int = 1
    broadcast_uplink: bool = True

    def __post_init__(self):
        for name in ("image_bits", "seed_bits", "text_bits", "sketch_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.es_count < 1:
            raise ValueError("es_count must be >= 1")


@dataclass(frozen=True)
class BreakdownEntry:
    direction: str  # uplink | downlink
    payload_kind: str
    count: int
    bits: int  # total over `count` payloads


@dataclass(frozen=True)
class OverheadRecord:
    protocol_id: str
    uplink_bits: int
    downlink_bits: int
    breakdown: tuple[BreakdownEntry, ...]

    @property
    def aggregate_bits(self) -> int:
        return self.uplink_bits + self.downlink_bits

    def __post_init__(self):
        up = sum(e.bits for e in self.breakdown if e.direction == "uplink")
        down = sum(e.bits for e in self.breakdown if e.direction == "downlink")
        if (up, down) != (self.uplink_bits, self.downlink_bits):
            raise ValueError("breakdown does not sum to the recorded totals")


def _record(protocol_id: str, entries: list[tuple[str, str, int, int]]) -> OverheadRecord:
    breakdown = tuple(BreakdownEntry(*e) for e in entries if e[3] > 0 or e[2] > 0)
    up = sum(e.bits for e in breakdown if e.direction == "uplink")
    down = sum(e.bits for e in breakdown if e.direction == "downlink")
    return OverheadRecord(protocol_id, up, down, breakdown)


def expected_overhead(protocol_id: str, sizes: OverheadSizes) -> OverheadRecord:
    """Closed-form per-protocol traffic account.

    Uplink text rides along in every non-local workflow. Broadcast uplinks
    (seed and text fan-out in UIDG/UIDCG) are counted once unless
    ``broadcast_uplink`` is off; per-server unicasts are counted per server.
    """
    if protocol_id not in PROTOCOL_IDS:
        raise ValueError(f"unknown protocol {protocol_id!r}")
    if protocol_id in MULTI_ES_PROTOCOLS and sizes.es_count < 2:
        raise ValueError(f"{protocol_id} requires es_count >= 2")
    s = sizes.es_count
    img, seed, text, sk = (
        sizes.image_bits, sizes.seed_bits, sizes.text_bits, sizes.sketch_bits,
    )
    fan = 1 if sizes.broadcast_uplink else s

    if protocol_id == "LOCAL":
        return _record(protocol_id, [])
    if protocol_id == "CENTRAL":
        return _record(protocol_id, [
            ("uplink", "image", 1, img), ("uplink", "text", 1, text),
            ("downlink", "image", 1, img),
        ])
    if protocol_id == "UIEG":
        return _record(protocol_id, [
            ("uplink", "seed", 1, seed), ("uplink", "text", 1, text),
            ("downlink", "image", 1, img),
        ])
    if protocol_id == "EIUG":
        return _record(protocol_id, [
            ("uplink", "image", 1, img), ("uplink", "text", 1, text),
            ("downlink", "seed", 1, seed),
        ])
    if protocol_id == "CIAG":
        return _record(protocol_id, [
            ("uplink", "seed", 1, seed), ("uplink", "text", 1, text),
            ("downlink", "seed", 1, seed),
        ])
    if protocol_id == "ESUC":
        return _record(protocol_id, [
            ("uplink", "image", 1, img), ("uplink", "text", 1, text),
            ("downlink", "sketch", 1, sk),
        ])
    if protocol_id == "UIDG":
        return _record(protocol_id, [
            ("uplink", "seed", fan, seed * fan), ("uplink", "text", fan, text * fan),
            ("downlink", "image", s, img * s),
        ])
    if protocol_id == "DIUG":
        return _record(protocol_id, [
            ("uplink", "image", s, img * s), ("uplink", "text", s, text * s),
            ("downlink", "seed", s, seed * s),
        ])
    if protocol_id == "DSUC":
        return _record(protocol_id, [
            ("uplink", "image", s, img * s), ("uplink", "text", s, text * s),
            ("downlink", "sketch", s, sk * s),
        ])
    if protocol_id == "UIDCG":
        # sub-seed unicasts total exactly one seed; partial contents are image-sized
        return _record(protocol_id, [
            ("uplink", "sub_seed", s, seed), ("uplink", "text", fan, text * fan),
            ("downlink", "image", s, img * s),
        ])
    if protocol_id == "DCSUC":
        return _record(protocol_id, [
            ("uplink", "image", s, img * s), ("uplink", "text", s, text * s),
            ("downlink", "sketch_tile", s, sk),
        ])
    raise AssertionError("unreachable")


def reduction_factor(baseline: OverheadRecord, candidate: OverheadRecord) -> float:
    """How many times less traffic the candidate moves than the baseline."""
    if candidate.aggregate_bits <= 0:
        raise ValueError(
            f"cannot compute a reduction factor against {candidate.protocol_id} "
            "with zero aggregate traffic"
        )
    return baseline.aggregate_bits / candidate.aggregate_bits


@dataclass(frozen=True)
class QualityRecord:
    """Per-pixel distortion versus the noise-free reference."""

    mse: float
    psnr_db: float  # +inf when mse == 0 (peak value is 1.0)


def quality(output: ContentGrid, reference: ContentGrid) -> QualityRecord:
    if (output.height, output.width) != (reference.height, reference.width):
        raise ValueError(
            f"dimension mismatch: {output.height}x{output.width} vs "
            f"{reference.height}x{reference.width}"
        )
    diff = output.values - reference.values
    mse = float(np.mean(diff * diff))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return QualityRecord(mse=mse, psnr_db=psnr)


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    min: float
    max: float
    count: int


def aggregate_trials(records, attr: str | None = None) -> Summary:
    """Sample statistics over trials; order-independent down to the bit.

    ``records`` may be plain numbers or objects carrying ``attr``.
    """
    if attr is not None:
        values = [float(getattr(r, attr)) for r in records]
    else:
        values = [float(r) for r in records]
    if not values:
        raise ValueError("cannot aggregate an empty record list")
    ordered = sorted(values)
    n = len(ordered)
    mean = sum(ordered) / n
    variance = sum((v - mean) ** 2 for v in ordered) / n
    return Summary(mean=mean, std=math.sqrt(variance),
                   min=ordered[0], max=ordered[-1], count=n)
