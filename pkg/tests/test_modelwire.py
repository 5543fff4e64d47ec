import socket
import struct
import threading
from pathlib import Path

import numpy as np
import pytest

from facedeid.diffmodel import LatentVector, ModelSpec, make_toy_model
from facedeid.modelwire import (
    MAGIC,
    MSG_FORWARD_REQ,
    MSG_HELLO,
    RawTransport,
    RemoteModel,
    RemoteModelError,
    WireChannel,
    WireError,
    decode_tensor,
    encode_frame,
    encode_tensor,
    read_frame,
)

from wire_server_util import serve_connection

GEN_SPEC = ModelSpec("generator", (6,), (4, 4, 1), seed=77)
FIXTURE = Path(__file__).parent / "data" / "golden_exchange.bin"


def open_test_channel(model, support_vjp=True):
    client_sock, server_sock = socket.socketpair()
    server_reader = server_sock.makefile("rb")
    server_writer = server_sock.makefile("wb")
    thread = threading.Thread(
        target=serve_connection,
        args=(model, server_reader, server_writer),
        kwargs={"support_vjp": support_vjp},
        daemon=True,
    )
    thread.start()
    channel = WireChannel(RawTransport(client_sock.makefile("rb"), client_sock.makefile("wb")))
    return channel, thread


class TestFraming:
    def test_frame_layout(self):
        frame = encode_frame(MSG_HELLO, b"abc")
        assert frame[:4] == MAGIC
        assert frame[4] == MSG_HELLO
        assert struct.unpack("<I", frame[5:9])[0] == 3
        assert frame[9:] == b"abc"

    def test_tensor_roundtrip(self):
        arr = np.arange(24, dtype=float).reshape(2, 3, 4) / 7.0
        out, offset = decode_tensor(encode_tensor(arr))
        assert out.shape == (2, 3, 4)
        assert np.allclose(out, arr, atol=1e-6)  # f32 round trip

    def test_two_tensors_concatenated(self):
        a = np.ones((2, 2))
        b = np.zeros(5) + 0.5
        payload = encode_tensor(a) + encode_tensor(b)
        first, offset = decode_tensor(payload)
        second, end = decode_tensor(payload, offset)
        assert first.shape == (2, 2) and second.shape == (5,)
        assert end == len(payload)

    def test_zero_length_tensor_rejected(self):
        with pytest.raises(WireError):
            encode_tensor(np.zeros((0, 3)))
        with pytest.raises(WireError):
            decode_tensor(struct.pack("<BI", 1, 0))

    def test_truncated_tensor(self):
        payload = encode_tensor(np.ones(4))[:-2]
        with pytest.raises(WireError):
            decode_tensor(payload)


class TestHandshake:
    def test_spec_echo(self):
        channel, _ = open_test_channel(make_toy_model(GEN_SPEC))
        spec = channel.handshake()
        assert spec == GEN_SPEC
        channel.shutdown()

    def test_bad_magic_raises(self):
        import io

        transport = RawTransport(io.BytesIO(b"XXXX" + b"\x00" * 5), io.BytesIO())
        with pytest.raises(WireError, match="magic"):
            read_frame(transport)

    def test_version_mismatch(self):
        channel, _ = open_test_channel(make_toy_model(GEN_SPEC))
        channel.transport.write(encode_frame(MSG_HELLO, b'{"version": 2}'))
        import facedeid.modelwire as mw

        msg_type, payload = mw.read_frame(channel.transport)
        assert msg_type == mw.MSG_ERROR
        assert b"version" in payload

    def test_unknown_message_type(self):
        import io

        frame = MAGIC + struct.pack("<BI", 0x55, 0)
        transport = RawTransport(io.BytesIO(frame), io.BytesIO())
        with pytest.raises(WireError, match="unknown message type"):
            read_frame(transport)


class TestRemoteCalls:
    def test_forward_dual_path(self):
        model = make_toy_model(GEN_SPEC)
        channel, _ = open_test_channel(model)
        remote = RemoteModel(channel)
        rng = np.random.default_rng(5)
        for _ in range(10):
            z = rng.standard_normal(6)
            local = model.forward_flat(z)
            over_wire = channel.remote_forward(z)
            assert np.max(np.abs(local - over_wire)) <= 1e-6
        channel.shutdown()

    def test_remote_model_adapter(self):
        model = make_toy_model(GEN_SPEC)
        channel, _ = open_test_channel(model)
        remote = RemoteModel(channel)
        z = LatentVector(np.linspace(-1, 1, 6))
        img_local = model.generator_forward(z)
        img_remote = remote.generator_forward(z)
        assert np.max(np.abs(img_local.pixels - img_remote.pixels)) <= 1e-6
        channel.shutdown()

    def test_vjp_dual_path(self):
        model = make_toy_model(GEN_SPEC)
        channel, _ = open_test_channel(model)
        RemoteModel(channel)
        rng = np.random.default_rng(6)
        z = rng.standard_normal(6)
        cot = rng.standard_normal(16)
        local = model.vjp_flat(z, cot)
        over_wire = channel.remote_vjp(z, cot)
        assert np.max(np.abs(local - over_wire)) <= 1e-6
        channel.shutdown()

    def test_zero_cotangent_zero_gradient(self):
        model = make_toy_model(GEN_SPEC)
        channel, _ = open_test_channel(model)
        RemoteModel(channel)
        out = channel.remote_vjp(np.ones(6), np.zeros(16))
        assert np.array_equal(out, np.zeros(6))
        channel.shutdown()

    def test_wrong_dims_error_names_expected(self):
        channel, _ = open_test_channel(make_toy_model(GEN_SPEC))
        channel.handshake()
        with pytest.raises(RemoteModelError, match="expected input of 6"):
            channel.remote_forward(np.ones(5))
        channel.shutdown()

    def test_vjp_unsupported(self):
        channel, _ = open_test_channel(make_toy_model(GEN_SPEC), support_vjp=False)
        channel.handshake()
        with pytest.raises(RemoteModelError, match="vjp unsupported"):
            channel.remote_vjp(np.ones(6), np.zeros(16))
        channel.shutdown()


class TestGoldenBytes:
    def build_exchange(self):
        """Client-request and server-response byte streams for one
        HELLO + FORWARD exchange against the seed-77 toy generator."""
        model = make_toy_model(GEN_SPEC)
        z = np.linspace(-1.0, 1.0, 6)
        requests = (
            encode_frame(MSG_HELLO, b'{"version": 1}')
            + encode_frame(MSG_FORWARD_REQ, encode_tensor(z))
        )
        import json

        spec = json.loads(model.spec.to_json())
        spec["version"] = 1
        responses = (
            encode_frame(MSG_HELLO, json.dumps(spec).encode())
            + encode_frame(0x03, encode_tensor(model.forward_flat(z.astype("<f4").astype(float))))
        )
        return requests + b"\x00SPLIT\x00" + responses

    def test_matches_stored_fixture(self):
        assert FIXTURE.exists(), "golden fixture missing; regenerate with build_exchange()"
        assert self.build_exchange() == FIXTURE.read_bytes()
