"""Minimal in-process protocol server used to exercise the client; the
shipped reference plugin lives in refplugin/ and is covered by the
conformance tests."""

import json

import numpy as np

from facedeid.diffmodel import ToyModel
from facedeid.modelwire import (
    MSG_ERROR,
    MSG_FORWARD_REQ,
    MSG_FORWARD_RESP,
    MSG_HELLO,
    MSG_SHUTDOWN,
    MSG_VJP_REQ,
    MSG_VJP_RESP,
    PROTOCOL_VERSION,
    RawTransport,
    WireError,
    decode_tensor,
    encode_frame,
    encode_tensor,
    read_frame,
)


def serve_connection(model: ToyModel, reader, writer, support_vjp=True):
    transport = RawTransport(reader, writer)

    def reply(msg_type, payload):
        transport.write(encode_frame(msg_type, payload))

    def error(message):
        reply(MSG_ERROR, message.encode("utf-8"))

    while True:
        try:
            msg_type, payload = read_frame(transport)
        except WireError:
            return
        if msg_type == MSG_SHUTDOWN:
            return
        if msg_type == MSG_HELLO:
            doc = json.loads(payload.decode("utf-8"))
            if doc.get("version") != PROTOCOL_VERSION:
                error(f"unsupported protocol version {doc.get('version')}")
                continue
            spec = json.loads(model.spec.to_json())
            spec["version"] = PROTOCOL_VERSION
            reply(MSG_HELLO, json.dumps(spec).encode("utf-8"))
        elif msg_type == MSG_FORWARD_REQ:
            try:
                x, _ = decode_tensor(payload)
                expected = int(np.prod(model.spec.input_shape))
                if x.size != expected:
                    error(f"expected input of {expected} values, got {x.size}")
                    continue
                reply(MSG_FORWARD_RESP, encode_tensor(model.forward_flat(x)))
            except WireError as e:
                error(str(e))
        elif msg_type == MSG_VJP_REQ:
            if not support_vjp:
                error("vjp unsupported")
                continue
            try:
                primal, offset = decode_tensor(payload)
                cot, _ = decode_tensor(payload, offset)
                reply(MSG_VJP_RESP, encode_tensor(model.vjp_flat(primal, cot)))
            except WireError as e:
                error(str(e))
        else:
            error(f"unexpected message type 0x{msg_type:02x}")
