"""Client side of the framed binary protocol for serving model forward/VJP
calls from an external process.

Frame layout: magic b"GMW1", msg_type u8, payload_len u32 little-endian,
payload bytes. Tensor payload: ndim u8, each dim u32le, then row-major f32le
data. One outstanding request per channel; every request gets exactly one
response or one ERROR frame.
"""

from __future__ import annotations

import socket
import struct
import subprocess
from dataclasses import dataclass

import numpy as np

from .diffmodel import FeatureVector, LatentVector, ModelSpec
from .imagecore import Image

MAGIC = b"GMW1"
PROTOCOL_VERSION = 1

MSG_HELLO = 0x01
MSG_FORWARD_REQ = 0x02
MSG_FORWARD_RESP = 0x03
MSG_VJP_REQ = 0x04
MSG_VJP_RESP = 0x05
MSG_ERROR = 0x06
MSG_SHUTDOWN = 0x07

_KNOWN_TYPES = frozenset(
    [MSG_HELLO, MSG_FORWARD_REQ, MSG_FORWARD_RESP, MSG_VJP_REQ, MSG_VJP_RESP, MSG_ERROR, MSG_SHUTDOWN]
)


class WireError(Exception):
    pass


class RemoteModelError(WireError):
    """An ERROR frame from the server."""


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return MAGIC + struct.pack("<BI", msg_type, len(payload)) + payload


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.size == 0:
        raise WireError("zero-length tensor")
    if arr.ndim > 255:
        raise WireError("too many dimensions")
    header = struct.pack("<B", arr.ndim) + b"".join(
        struct.pack("<I", d) for d in arr.shape
    )
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(payload: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor starting at offset; returns (array, next offset)."""
    if len(payload) < offset + 1:
        raise WireError("truncated tensor header")
    ndim = payload[offset]
    offset += 1
    if len(payload) < offset + 4 * ndim:
        raise WireError("truncated tensor dims")
    dims = struct.unpack_from(f"<{ndim}I", payload, offset)
    offset += 4 * ndim
    count = int(np.prod(dims)) if ndim else 0
    if count == 0:
        raise WireError("zero-length tensor")
    nbytes = count * 4
    if len(payload) < offset + nbytes:
        raise WireError("truncated tensor data")
    arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(dims)
    return arr.astype(np.float64), offset + nbytes


class _Transport:
    def read_exact(self, n: int) -> bytes:
        raise NotImplementedError

    def write(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class StdioTransport(_Transport):
    """Talks to a subprocess over its stdin/stdout."""

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def read_exact(self, n: int) -> bytes:
        data = self.proc.stdout.read(n)
        if data is None or len(data) < n:
            raise WireError("channel closed by server")
        return data

    def write(self, data: bytes) -> None:
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def close(self) -> None:
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.wait(timeout=10)


class TcpTransport(_Transport):
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            chunk = self.sock.recv(remaining)
            if not chunk:
                raise WireError("channel closed by server")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def write(self, data: bytes) -> None:
        self.sock.sendall(data)

    def close(self) -> None:
        self.sock.close()


class RawTransport(_Transport):
    """Wraps a pair of binary file objects (used by in-process test servers)."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    def read_exact(self, n: int) -> bytes:
        data = self.reader.read(n)
        if data is None or len(data) < n:
            raise WireError("channel closed by server")
        return data

    def write(self, data: bytes) -> None:
        self.writer.write(data)
        self.writer.flush()


def read_frame(transport: _Transport) -> tuple[int, bytes]:
    header = transport.read_exact(9)
    if header[:4] != MAGIC:
        raise WireError(f"bad magic {header[:4]!r}")
    msg_type, length = struct.unpack("<BI", header[4:])
    if msg_type not in _KNOWN_TYPES:
        raise WireError(f"unknown message type 0x{msg_type:02x}")
    payload = transport.read_exact(length) if length else b""
    return msg_type, payload


class WireChannel:
    """One connection to a model server; strictly request/response."""

    def __init__(self, transport: _Transport):
        self.transport = transport
        self.spec: ModelSpec | None = None

    @classmethod
    def open_stdio(cls, argv: list[str]) -> "WireChannel":
        return cls(StdioTransport(argv))

    @classmethod
    def open_tcp(cls, host: str, port: int, timeout: float = 10.0) -> "WireChannel":
        return cls(TcpTransport(host, port, timeout))

    def handshake(self) -> ModelSpec:
        payload = b'{"version": %d}' % PROTOCOL_VERSION
        self.transport.write(encode_frame(MSG_HELLO, payload))
        msg_type, resp = read_frame(self.transport)
        if msg_type == MSG_ERROR:
            raise RemoteModelError(resp.decode("utf-8", "replace"))
        if msg_type != MSG_HELLO:
            raise WireError(f"expected HELLO reply, got 0x{msg_type:02x}")
        import json

        doc = json.loads(resp.decode("utf-8"))
        version = doc.pop("version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            raise WireError(f"protocol version mismatch: server {version}, client {PROTOCOL_VERSION}")
        self.spec = ModelSpec(
            role=doc["role"],
            input_shape=tuple(doc["input_shape"]),
            output_shape=tuple(doc["output_shape"]),
            seed=int(doc.get("seed", 0)),
            hidden_dim=int(doc.get("hidden_dim", 32)),
        )
        return self.spec

    def _roundtrip(self, req_type: int, resp_type: int, payload: bytes) -> bytes:
        self.transport.write(encode_frame(req_type, payload))
        msg_type, resp = read_frame(self.transport)
        if msg_type == MSG_ERROR:
            raise RemoteModelError(resp.decode("utf-8", "replace"))
        if msg_type != resp_type:
            raise WireError(f"expected 0x{resp_type:02x} reply, got 0x{msg_type:02x}")
        return resp

    def remote_forward(self, x: np.ndarray) -> np.ndarray:
        resp = self._roundtrip(MSG_FORWARD_REQ, MSG_FORWARD_RESP, encode_tensor(x))
        arr, _ = decode_tensor(resp)
        return arr

    def remote_vjp(self, primal: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        payload = encode_tensor(primal) + encode_tensor(cotangent)
        resp = self._roundtrip(MSG_VJP_REQ, MSG_VJP_RESP, payload)
        arr, _ = decode_tensor(resp)
        return arr

    def shutdown(self) -> None:
        try:
            self.transport.write(encode_frame(MSG_SHUTDOWN, b""))
        finally:
            self.transport.close()


class RemoteModel:
    """Adapts a WireChannel to the in-process model surface so the engine can
    chain losses through a served model unchanged."""

    def __init__(self, channel: WireChannel):
        if channel.spec is None:
            channel.handshake()
        self.channel = channel
        self.spec = channel.spec

    def generator_forward(self, z: LatentVector) -> Image:
        if self.spec.role != "generator":
            raise WireError("not a generator")
        out = self.channel.remote_forward(z.values)
        return Image(out.reshape(self.spec.output_shape))

    def generator_vjp(self, z: LatentVector, cotangent: np.ndarray) -> np.ndarray:
        return self.channel.remote_vjp(z.values, np.asarray(cotangent))

    def extractor_forward(self, img: Image) -> FeatureVector:
        if self.spec.role == "generator":
            raise WireError("not an extractor")
        out = self.channel.remote_forward(img.pixels)
        return FeatureVector(out.reshape(-1), role=self.spec.role)

    def extractor_vjp(self, img: Image, cotangent: np.ndarray) -> np.ndarray:
        out = self.channel.remote_vjp(img.pixels, np.asarray(cotangent))
        return out.reshape(self.spec.input_shape)
