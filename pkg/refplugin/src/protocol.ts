/**
 * Framed binary protocol shared with the primary engine's client.
 *
 * Frame: magic "GMW1", msg_type u8, payload_len u32le, payload bytes.
 * Tensor payload: ndim u8, each dim u32le, then row-major f32le data.
 */

export const MAGIC = Buffer.from("GMW1", "ascii");
export const PROTOCOL_VERSION = 1;

export const MSG_HELLO = 0x01;
export const MSG_FORWARD_REQ = 0x02;
export const MSG_FORWARD_RESP = 0x03;
export const MSG_VJP_REQ = 0x04;
export const MSG_VJP_RESP = 0x05;
export const MSG_ERROR = 0x06;
export const MSG_SHUTDOWN = 0x07;

export const MSG_NAMES: Record<number, string> = {
  [MSG_HELLO]: "HELLO",
  [MSG_FORWARD_REQ]: "FORWARD_REQ",
  [MSG_FORWARD_RESP]: "FORWARD_RESP",
  [MSG_VJP_REQ]: "VJP_REQ",
  [MSG_VJP_RESP]: "VJP_RESP",
  [MSG_ERROR]: "ERROR",
  [MSG_SHUTDOWN]: "SHUTDOWN",
};

export class WireFormatError extends Error {}

export interface Frame {
  msgType: number;
  payload: Buffer;
}

export function encodeFrame(msgType: number, payload: Buffer): Buffer {
  const header = Buffer.alloc(5);
  header.writeUInt8(msgType, 0);
  header.writeUInt32LE(payload.length, 1);
  return Buffer.concat([MAGIC, header, payload]);
}

export function encodeTensor(data: ArrayLike<number>, dims?: number[]): Buffer {
  const shape = dims ?? [data.length];
  if (data.length === 0) throw new WireFormatError("zero-length tensor");
  const header = Buffer.alloc(1 + 4 * shape.length);
  header.writeUInt8(shape.length, 0);
  shape.forEach((d, i) => header.writeUInt32LE(d, 1 + 4 * i));
  const body = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) body.writeFloatLE(data[i], 4 * i);
  return Buffer.concat([header, body]);
}

export function decodeTensor(
  payload: Buffer,
  offset = 0,
): { data: Float64Array; dims: number[]; next: number } {
  if (payload.length < offset + 1) throw new WireFormatError("truncated tensor header");
  const ndim = payload.readUInt8(offset);
  offset += 1;
  if (payload.length < offset + 4 * ndim) throw new WireFormatError("truncated tensor dims");
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) dims.push(payload.readUInt32LE(offset + 4 * i));
  offset += 4 * ndim;
  const count = ndim === 0 ? 0 : dims.reduce((a, b) => a * b, 1);
  if (count === 0) throw new WireFormatError("zero-length tensor");
  if (payload.length < offset + 4 * count) throw new WireFormatError("truncated tensor data");
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) data[i] = payload.readFloatLE(offset + 4 * i);
  return { data, dims, next: offset + 4 * count };
}

/** Incremental frame parser over an arbitrary chunked byte stream. */
export class FrameParser {
  private buffer: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length < 9) break;
      if (!this.buffer.subarray(0, 4).equals(MAGIC)) {
        throw new WireFormatError(
          `bad magic ${this.buffer.subarray(0, 4).toString("hex")}`,
        );
      }
      const msgType = this.buffer.readUInt8(4);
      const length = this.buffer.readUInt32LE(5);
      if (this.buffer.length < 9 + length) break;
      frames.push({ msgType, payload: this.buffer.subarray(9, 9 + length) });
      this.buffer = this.buffer.subarray(9 + length);
    }
    return frames;
  }
}
