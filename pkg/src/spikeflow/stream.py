"""Spike stream container, bit-exact binary codec, and per-pixel timing queries.

A spike stream is the raw output of an integrate-and-fire camera: N binary
frames of size H x W read out at a fixed period. Frame indices are 0-based;
spike ordinals (the z-th spike at a pixel) are 1-based.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpikeStream",
    "StreamWindow",
    "SpkFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "ZeroDimensionError",
    "SpikeQueryError",
    "InsufficientSpikesError",
    "NoLeftSpikeError",
    "NoRightSpikeError",
    "encode",
    "decode",
    "write_spk",
    "read_spk",
]

SPK_MAGIC = b"SPKS"
SPK_VERSION = 1
# little-endian: magic, version u32, H u32, W u32, N u64, period f64
_HEADER = struct.Struct("<4sIIIQd")


class SpkFormatError(ValueError):
    """Malformed .spk data."""


class BadMagicError(SpkFormatError):
    """Source does not start with the SPKS magic bytes."""


class TruncatedPayloadError(SpkFormatError):
    """Payload ends before all H*W*N bits are present."""


class ZeroDimensionError(SpkFormatError):
    """Header declares a zero-sized stream."""


class SpikeQueryError(LookupError):
    """A per-pixel spike query could not be satisfied."""


class InsufficientSpikesError(SpikeQueryError):
    """Fewer spikes at the pixel than the requested ordinal."""


class NoLeftSpikeError(SpikeQueryError):
    """No spike strictly before the query frame."""


class NoRightSpikeError(SpikeQueryError):
    """No spike at or after the query frame."""


class SpikeStream:
    """Immutable H x W x N binary spike stream with readout period (seconds).

    ``frames`` is stored dense as uint8 with shape (N, H, W); the packed wire
    representation (frame-major, row-major, LSB-first) is produced on demand.
    """

    __slots__ = ("_frames", "_period")

    def __init__(self, frames: np.ndarray, period: float):
        frames = np.asarray(frames)
        if frames.ndim != 3:
            raise ValueError(f"frames must be (N, H, W), got shape {frames.shape}")
        if any(s < 1 for s in frames.shape):
            raise ValueError(f"all dimensions must be >= 1, got {frames.shape}")
        if not float(period) > 0.0:
            raise ValueError(f"period must be positive, got {period}")
        bits = frames.astype(np.uint8)
        if not np.array_equal(bits, frames.astype(bool).astype(np.uint8)):
            raise ValueError("frames must be binary (0/1)")
        bits.setflags(write=False)
        self._frames = bits
        self._period = float(period)

    @property
    def frames(self) -> np.ndarray:
        """Read-only (N, H, W) uint8 occupancy, 1 = spike fired."""
        return self._frames

    @property
    def length(self) -> int:
        return self._frames.shape[0]

    @property
    def height(self) -> int:
        return self._frames.shape[1]

    @property
    def width(self) -> int:
        return self._frames.shape[2]

    @property
    def period(self) -> float:
        return self._period

    @property
    def packed_bits(self) -> bytes:
        """Payload bytes: bit i = frame-major flat index i, LSB-first."""
        flat = self._frames.reshape(-1)
        return np.packbits(flat, bitorder="little").tobytes()

    @classmethod
    def from_packed(cls, height: int, width: int, length: int, period: float,
                    payload: bytes) -> "SpikeStream":
        nbits = height * width * length
        raw = np.frombuffer(payload, dtype=np.uint8)
        bits = np.unpackbits(raw, count=nbits, bitorder="little")
        return cls(bits.reshape(length, height, width), period)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeStream):
            return NotImplemented
        return (self._period == other._period
                and self._frames.shape == other._frames.shape
                and np.array_equal(self._frames, other._frames))

    def __repr__(self) -> str:
        n, h, w = self._frames.shape
        return f"SpikeStream({h}x{w}x{n}, period={self._period:g})"

    def _check_pixel(self, y: int, x: int) -> None:
        if not (0 <= y < self.height and 0 <= x < self.width):
            raise IndexError(f"pixel ({y}, {x}) out of bounds for {self.height}x{self.width}")

    def spike_frames(self, y: int, x: int) -> np.ndarray:
        """Sorted frame indices of all spikes at pixel (y, x)."""
        self._check_pixel(y, x)
        return np.flatnonzero(self._frames[:, y, x])

    def spike_timestamp(self, y: int, x: int, z: int) -> int:
        """Frame index of the z-th spike (1-based ordinal) at pixel (y, x)."""
        if z < 1:
            raise ValueError(f"ordinal must be >= 1, got {z}")
        times = self.spike_frames(y, x)
        if z > times.size:
            raise InsufficientSpikesError(
                f"insufficient spikes: pixel ({y}, {x}) has {times.size}, need {z}")
        return int(times[z - 1])

    def bracketing_spikes(self, y: int, x: int, tau: int) -> tuple[int, int]:
        """Ordinals (M, N): last spike strictly before tau, first at/after tau."""
        times = self.spike_frames(y, x)
        m = int(np.searchsorted(times, tau, side="left"))  # spikes with T < tau
        if m == 0:
            raise NoLeftSpikeError(f"no-left-spike: pixel ({y}, {x}) before frame {tau}")
        if m == times.size:
            raise NoRightSpikeError(f"no-right-spike: pixel ({y}, {x}) at/after frame {tau}")
        return m, m + 1

    def count_in_window(self, y: int, x: int, tau: int, half: int) -> tuple[int, int]:
        """Spike count in [tau-half, tau+half] clipped to the stream, and the
        effective (clipped) window length in frames."""
        self._check_pixel(y, x)
        if half < 0:
            raise ValueError(f"half must be >= 0, got {half}")
        lo = max(0, tau - half)
        hi = min(self.length - 1, tau + half)
        if hi < lo:
            return 0, 0
        count = int(self._frames[lo:hi + 1, y, x].sum())
        return count, hi - lo + 1


@dataclass(frozen=True)
class StreamWindow:
    """A centered sub-range of a parent stream, clipped to valid frames."""

    parent: SpikeStream
    center: int
    half_length: int

    def __post_init__(self):
        if self.half_length < 0:
            raise ValueError(f"half_length must be >= 0, got {self.half_length}")
        if not (0 <= self.center < self.parent.length):
            raise ValueError(
                f"center {self.center} outside stream of length {self.parent.length}")

    @property
    def lo(self) -> int:
        return max(0, self.center - self.half_length)

    @property
    def hi(self) -> int:
        return min(self.parent.length - 1, self.center + self.half_length)

    @property
    def length(self) -> int:
        return self.hi - self.lo + 1

    @property
    def is_clipped(self) -> bool:
        return self.length != 2 * self.half_length + 1

    def frames(self) -> np.ndarray:
        """Dense (length, H, W) uint8 view of the window."""
        return self.parent.frames[self.lo:self.hi + 1]

    def pixel_sequences(self) -> np.ndarray:
        """Window as channel-major (1, H*W, length) float64: one temporal
        sequence per pixel, pixels in row-major order."""
        dense = self.frames().astype(np.float64)
        n, h, w = dense.shape
        return np.ascontiguousarray(dense.reshape(n, h * w).T)[None]


def encode(stream: SpikeStream, sink) -> int:
    """Write the .spk representation of ``stream`` to a binary sink.

    Returns the total number of bytes written.
    """
    header = _HEADER.pack(SPK_MAGIC, SPK_VERSION, stream.height, stream.width,
                          stream.length, stream.period)
    payload = stream.packed_bits
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def decode(source) -> SpikeStream:
    """Read one stream from a binary source holding .spk data."""
    header = source.read(_HEADER.size)
    if len(header) < 4 or header[:4] != SPK_MAGIC:
        raise BadMagicError("bad magic: not a .spk stream")
    if len(header) < _HEADER.size:
        raise TruncatedPayloadError("truncated header")
    _, version, height, width, length, period = _HEADER.unpack(header)
    if version != SPK_VERSION:
        raise SpkFormatError(f"unsupported version {version}")
    if height == 0 or width == 0 or length == 0:
        raise ZeroDimensionError(
            f"zero dimension in header: H={height} W={width} N={length}")
    if not period > 0.0:
        raise SpkFormatError(f"non-positive period {period}")
    nbytes = (height * width * length + 7) // 8
    payload = source.read(nbytes)
    if len(payload) < nbytes:
        raise TruncatedPayloadError(
            f"truncated payload: expected {nbytes} bytes, got {len(payload)}")
    return SpikeStream.from_packed(height, width, length, period, payload)


def write_spk(stream: SpikeStream, path) -> int:
    with open(path, "wb") as f:
        return encode(stream, f)


def read_spk(path) -> SpikeStream:
    with open(path, "rb") as f:
        return decode(f)


def roundtrip_bytes(stream: SpikeStream) -> bytes:
    """Encode to an in-memory buffer (handy for tests and hashing)."""
    buf = io.BytesIO()
    encode(stream, buf)
    return buf.getvalue()
