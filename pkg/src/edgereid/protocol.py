"""Binary feature messages and TCP framing.

FeatureMessage layout, all integers little-endian::

    offset size field
    0      4    magic b"PRID"
    4      1    version (1)
    5      4    device_id            u32
    9      8    capture_timestamp    u64, ms since Unix epoch
    17     4    person_id            i32
    21     2    camera_id            u16
    23     2    sequence_id          u16
    25     4    frame_index          u32
    29     8    config_digest
    37     2    class_count          u16
    39     ...  per class:
                  present        u8 (0 or 1)
                  area_fraction  f32
                  channel_count  u8
                  per channel: bin_count u16, then bin_count x f32

The fixed header is 39 bytes. Values travel as float32, so a FeatureVector
survives the wire only up to float32 rounding; :func:`to_wire_precision`
applies that rounding ahead of time.

Transport frame::

    u32 length (of everything after it) | u8 message type | payload
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from .dataset_io import IdentityAnnotation
from .errors import (
    BadMagic,
    DataError,
    FieldOverflow,
    LengthMismatch,
    MalformedMessage,
    Truncated,
    UnsupportedVersion,
)
from .features import FeatureVector

MAGIC = b"PRID"
VERSION = 1

HEADER = struct.Struct("<4sBIQiHHI8sH")
CLASS_HEAD = struct.Struct("<BfB")
U16 = struct.Struct("<H")
U32 = struct.Struct("<I")

MSG_SUBMIT = 0x01
MSG_QUERY = 0x02
MSG_RESERVED = 0x7F  # mask transmission, not implemented

MAX_FRAME = 16 * 1024 * 1024

_U16_MAX = 0xFFFF
_U8_MAX = 0xFF


@dataclass(frozen=True)
class CaptureMeta:
    device_id: int
    capture_timestamp: int
    annotation: IdentityAnnotation


@dataclass(frozen=True)
class FeatureMessage:
    meta: CaptureMeta
    features: FeatureVector

    @property
    def device_id(self) -> int:
        return self.meta.device_id

    @property
    def capture_timestamp(self) -> int:
        return self.meta.capture_timestamp

    @property
    def annotation(self) -> IdentityAnnotation:
        return self.meta.annotation


def to_wire_precision(fv: FeatureVector) -> FeatureVector:
    """Round every value to float32, as the wire format does."""
    return FeatureVector(
        fv.config_digest,
        fv.present,
        fv.area.astype(np.float32).astype(np.float64),
        fv.histograms.astype(np.float32).astype(np.float64),
    )


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise FieldOverflow(f"{name}={value} does not fit [{lo}, {hi}]")


def encode_feature_message(fv: FeatureVector, meta: CaptureMeta) -> bytes:
    a = meta.annotation
    _check_range("device_id", meta.device_id, 0, 0xFFFFFFFF)
    _check_range("capture_timestamp", meta.capture_timestamp, 0, 2**64 - 1)
    _check_range("person_id", a.person_id, -(2**31), 2**31 - 1)
    _check_range("camera_id", a.camera_id, 0, _U16_MAX)
    _check_range("sequence_id", a.sequence_id, 0, _U16_MAX)
    _check_range("frame_index", a.frame_index, 0, 0xFFFFFFFF)
    _check_range("class_count", fv.class_count, 1, _U16_MAX)
    _check_range("channel_count", fv.channel_count, 1, _U8_MAX)
    _check_range("bin_count", fv.bins, 1, _U16_MAX)
    if not (np.all(np.isfinite(fv.area)) and np.all(np.isfinite(fv.histograms))):
        raise DataError("feature values must be finite")

    parts = [
        HEADER.pack(
            MAGIC,
            VERSION,
            meta.device_id,
            meta.capture_timestamp,
            a.person_id,
            a.camera_id,
            a.sequence_id,
            a.frame_index,
            fv.config_digest,
            fv.class_count,
        )
    ]
    bins_head = U16.pack(fv.bins)
    hist32 = fv.histograms.astype("<f4")
    for i in range(fv.class_count):
        parts.append(CLASS_HEAD.pack(int(fv.present[i]), fv.area[i], fv.channel_count))
        for ch in range(fv.channel_count):
            parts.append(bins_head)
            parts.append(hist32[i, ch].tobytes())
    return b"".join(parts)


def encode_message(msg: FeatureMessage) -> bytes:
    return encode_feature_message(msg.features, msg.meta)


def encoded_size(class_count: int, channel_count: int, bins: int) -> int:
    per_channel = U16.size + 4 * bins
    return HEADER.size + class_count * (CLASS_HEAD.size + channel_count * per_channel)


def decode_feature_message(data: bytes) -> FeatureMessage:
    data = bytes(data)
    if len(data) < len(MAGIC):
        if MAGIC.startswith(data):
            raise Truncated(f"message truncated at {len(data)} bytes")
        raise BadMagic(f"bad magic {data!r}")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < 5:
        raise Truncated("message truncated before version byte")
    if data[4] != VERSION:
        raise UnsupportedVersion(f"unsupported message version {data[4]}")
    if len(data) < HEADER.size:
        raise Truncated(f"header needs {HEADER.size} bytes, got {len(data)}")
    (_, _, device_id, ts, pid, cam, seq, frame, digest, class_count) = HEADER.unpack_from(data)
    if class_count == 0:
        raise MalformedMessage("message carries no classes")

    off = HEADER.size
    present, area, hists = [], [], []
    shape = None
    for i in range(class_count):
        if len(data) < off + CLASS_HEAD.size:
            raise Truncated(f"truncated in class {i} header")
        flag, frac, n_ch = CLASS_HEAD.unpack_from(data, off)
        off += CLASS_HEAD.size
        if flag not in (0, 1):
            raise MalformedMessage(f"class {i}: present flag {flag}")
        channels = []
        for ch in range(n_ch):
            if len(data) < off + U16.size:
                raise Truncated(f"truncated in class {i} channel {ch}")
            (n_bins,) = U16.unpack_from(data, off)
            off += U16.size
            end = off + 4 * n_bins
            if len(data) < end:
                raise Truncated(f"truncated in class {i} channel {ch} bins")
            channels.append(np.frombuffer(data, dtype="<f4", count=n_bins, offset=off))
            off = end
        this_shape = (n_ch, channels[0].size if channels else 0)
        if shape is None:
            shape = this_shape
        if this_shape != shape or any(c.size != shape[1] for c in channels):
            raise MalformedMessage(f"class {i}: ragged channel or bin counts")
        present.append(bool(flag))
        area.append(frac)
        hists.append(np.stack(channels) if channels else np.zeros((0, 0), "<f4"))
    if off != len(data):
        raise LengthMismatch(f"{len(data) - off} trailing bytes after message")
    if shape[0] == 0 or shape[1] == 0:
        raise MalformedMessage("classes carry no channels or bins")

    try:
        annotation = IdentityAnnotation(pid, cam, seq, frame)
    except DataError as exc:
        raise MalformedMessage(f"invalid annotation: {exc}") from exc
    fv = FeatureVector(
        digest,
        np.array(present, dtype=bool),
        np.array(area, dtype=np.float32).astype(np.float64),
        np.stack(hists).astype(np.float64),
    )
    return FeatureMessage(CaptureMeta(device_id, ts, annotation), fv)


# -- transport framing ------------------------------------------------------


def frame(msg_type: int, payload: bytes) -> bytes:
    return U32.pack(1 + len(payload)) + bytes([msg_type]) + payload


def frame_json(payload: bytes) -> bytes:
    """Responses: u32 length followed by UTF-8 JSON, no type byte."""
    return U32.pack(len(payload)) + payload


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf.extend(chunk)
    return bytes(buf)


def recv_length_prefixed(sock: socket.socket, limit: int = MAX_FRAME) -> bytes:
    (length,) = U32.unpack(recv_exact(sock, U32.size))
    if length > limit:
        raise MalformedMessage(f"frame of {length} bytes exceeds limit {limit}")
    return recv_exact(sock, length)
