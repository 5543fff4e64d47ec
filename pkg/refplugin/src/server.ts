/**
 * Reference model server: answers handshake/forward/vjp frames for a
 * deterministic toy model over stdio or TCP, logging each frame type to
 * stderr. This is also the documented adapter point for real pretrained
 * generators/extractors: replace ToyModel with any object exposing the same
 * forward/vjp surface and the protocol side is unchanged.
 */

import * as net from "node:net";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";
import { ModelSpec, Role, ToyModel, specToJson } from "./model.js";
import {
  FrameParser,
  MSG_ERROR,
  MSG_FORWARD_REQ,
  MSG_FORWARD_RESP,
  MSG_HELLO,
  MSG_NAMES,
  MSG_SHUTDOWN,
  MSG_VJP_REQ,
  MSG_VJP_RESP,
  PROTOCOL_VERSION,
  WireFormatError,
  decodeTensor,
  encodeFrame,
  encodeTensor,
  type Frame,
} from "./protocol.js";

export interface ServerConfig {
  transport: "stdio" | "tcp";
  port: number;
  role: Role;
  seed: number;
  latentDim: number;
  imageSize: number;
  hiddenDim: number;
}

export function parseCli(argv: string[]): ServerConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      transport: { type: "string", default: "stdio" },
      port: { type: "string", default: "7071" },
      role: { type: "string", default: "generator" },
      seed: { type: "string", default: "0" },
      "latent-dim": { type: "string", default: "16" },
      "image-size": { type: "string", default: "16" },
      "hidden-dim": { type: "string", default: "32" },
    },
  });
  const transport = values.transport as string;
  if (transport !== "stdio" && transport !== "tcp") {
    throw new Error(`unknown transport ${transport}`);
  }
  const role = values.role as string;
  if (role !== "generator" && role !== "perceptual" && role !== "identity") {
    throw new Error(`unknown role ${role}`);
  }
  return {
    transport,
    port: Number(values.port),
    role,
    seed: Number(values.seed),
    latentDim: Number(values["latent-dim"]),
    imageSize: Number(values["image-size"]),
    hiddenDim: Number(values["hidden-dim"]),
  };
}

export function specFromConfig(conf: ServerConfig): ModelSpec {
  const image = [conf.imageSize, conf.imageSize, 1];
  const flat = [conf.latentDim];
  return {
    role: conf.role,
    input_shape: conf.role === "generator" ? flat : image,
    output_shape: conf.role === "generator" ? image : flat,
    seed: conf.seed,
    hidden_dim: conf.hiddenDim,
  };
}

export type FrameSink = (bytes: Buffer) => void;

/** Handles one frame; returns false once the session should end cleanly. */
export function handleFrame(model: ToyModel, frame: Frame, send: FrameSink): boolean {
  const name = MSG_NAMES[frame.msgType] ?? `0x${frame.msgType.toString(16)}`;
  process.stderr.write(`refplugin: frame ${name}\n`);
  const error = (message: string) =>
    send(encodeFrame(MSG_ERROR, Buffer.from(message, "utf-8")));

  switch (frame.msgType) {
    case MSG_SHUTDOWN:
      return false;
    case MSG_HELLO: {
      let version: unknown;
      try {
        version = JSON.parse(frame.payload.toString("utf-8")).version;
      } catch {
        error("malformed hello payload");
        return true;
      }
      if (version !== PROTOCOL_VERSION) {
        error(`unsupported protocol version ${version}`);
        return true;
      }
      const doc = { ...JSON.parse(specToJson(model.spec)), version: PROTOCOL_VERSION };
      send(encodeFrame(MSG_HELLO, Buffer.from(JSON.stringify(doc), "utf-8")));
      return true;
    }
    case MSG_FORWARD_REQ:
      try {
        const { data } = decodeTensor(frame.payload);
        send(encodeFrame(MSG_FORWARD_RESP, encodeTensor(model.forward(data))));
      } catch (e) {
        error((e as Error).message);
      }
      return true;
    case MSG_VJP_REQ:
      try {
        const primal = decodeTensor(frame.payload);
        const cot = decodeTensor(frame.payload, primal.next);
        send(encodeFrame(MSG_VJP_RESP, encodeTensor(model.vjp(primal.data, cot.data))));
      } catch (e) {
        error((e as Error).message);
      }
      return true;
    default:
      error(`unexpected message type 0x${frame.msgType.toString(16).padStart(2, "0")}`);
      return true;
  }
}

function serveStream(
  model: ToyModel,
  input: NodeJS.ReadableStream,
  send: FrameSink,
  done: (code: number) => void,
): void {
  const parser = new FrameParser();
  let finished = false;
  input.on("data", (chunk: Buffer) => {
    let frames: Frame[];
    try {
      frames = parser.push(chunk);
    } catch (e) {
      // corrupt stream: no frame boundary to recover at
      send(encodeFrame(MSG_ERROR, Buffer.from((e as Error).message, "utf-8")));
      finished = true;
      done(1);
      return;
    }
    for (const frame of frames) {
      if (!handleFrame(model, frame, send)) {
        finished = true;
        done(0);
        return;
      }
    }
  });
  input.on("end", () => {
    if (!finished) done(1); // peer vanished without SHUTDOWN
  });
  input.on("error", () => {
    if (!finished) done(1);
  });
}

export function main(argv: string[]): void {
  const conf = parseCli(argv);
  const model = new ToyModel(specFromConfig(conf));
  if (conf.transport === "stdio") {
    process.stderr.write(
      `refplugin: serving ${conf.role} seed=${conf.seed} on stdio\n`,
    );
    serveStream(model, process.stdin, (b) => process.stdout.write(b), (code) =>
      process.exit(code),
    );
  } else {
    const server = net.createServer((socket) => {
      process.stderr.write(`refplugin: connection from ${socket.remoteAddress}\n`);
      serveStream(model, socket, (b) => socket.write(b), (code) => {
        socket.end(() => {
          server.close();
          process.exit(code);
        });
      });
    });
    server.listen(conf.port, () => {
      process.stderr.write(
        `refplugin: serving ${conf.role} seed=${conf.seed} on tcp port ${conf.port}\n`,
      );
    });
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2));
}
