/**
 * Length-prefixed binary protocol between match server and agent client.
 *
 * Wire format: u32 big-endian payload length, then the payload, whose
 * first byte is the message type. All integers are big-endian and
 * unsigned; sendTsUs is the only 64-bit field and is kept as a bigint
 * so values survive the full u64 range. Payloads longer than 65536
 * bytes are rejected from the length prefix alone.
 *
 * decode() is incremental: it returns null while the buffer holds no
 * complete frame and never consumes partial input. StreamDecoder wraps
 * that pattern for socket readers.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_FRAME_BYTES = 65536;
export const MAX_NAME_BYTES = 64;

export const ROLE_SANDBOX = 0;
export const ROLE_PLAYER = 1;

const MSG_HELLO = 0x01;
const MSG_HELLO_ACK = 0x02;
const MSG_ROUND_START = 0x03;
const MSG_FRAME = 0x04;
const MSG_ACTION = 0x05;
const MSG_ROUND_END = 0x06;
const MSG_MATCH_END = 0x07;

export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

export class EncodeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EncodeError";
  }
}

export interface Hello {
  kind: "hello";
  name: string;
  role: number;
  version: number;
}

export interface HelloAck {
  kind: "helloAck";
  accepted: number;
  framePeriodUs: number;
}

export interface RoundStart {
  kind: "roundStart";
  roundId: number;
  frames: number;
  hpTotal: number;
}

export interface Frame {
  kind: "frame";
  roundId: number;
  frameId: number;
  hpSelf: number;
  hpOpp: number;
  sendTsUs: bigint;
}

export interface Action {
  kind: "action";
  frameId: number;
  actionCode: number;
  reportedProcessingUs: number;
}

export interface RoundEnd {
  kind: "roundEnd";
  roundId: number;
  hpSelf: number;
  hpOpp: number;
  elapsedFrames: number;
  framesProcessed: number;
  framesSkipped: number;
}

export interface MatchEnd {
  kind: "matchEnd";
  rounds: number;
}

export type Message =
  | Hello
  | HelloAck
  | RoundStart
  | Frame
  | Action
  | RoundEnd
  | MatchEnd;

function checkU8(value: number, field: string): number {
  if (!Number.isInteger(value) || value < 0 || value > 0xff) {
    throw new EncodeError(`${field}=${value} does not fit in u8`);
  }
  return value;
}

function checkU32(value: number, field: string): number {
  if (!Number.isInteger(value) || value < 0 || value > 0xffffffff) {
    throw new EncodeError(`${field}=${value} does not fit in u32`);
  }
  return value;
}

function checkU64(value: bigint, field: string): bigint {
  if (value < 0n || value > 0xffffffffffffffffn) {
    throw new EncodeError(`${field}=${value} does not fit in u64`);
  }
  return value;
}

class Writer {
  private parts: Buffer[] = [];

  u8(value: number): this {
    this.parts.push(Buffer.from([value]));
    return this;
  }

  u32(value: number): this {
    const b = Buffer.alloc(4);
    b.writeUInt32BE(value, 0);
    this.parts.push(b);
    return this;
  }

  u64(value: bigint): this {
    const b = Buffer.alloc(8);
    b.writeBigUInt64BE(value, 0);
    this.parts.push(b);
    return this;
  }

  raw(data: Buffer): this {
    this.parts.push(data);
    return this;
  }

  finish(): Buffer {
    const body = Buffer.concat(this.parts);
    const header = Buffer.alloc(4);
    header.writeUInt32BE(body.length, 0);
    return Buffer.concat([header, body]);
  }
}

function packBody(msg: Message): Buffer {
  const w = new Writer();
  switch (msg.kind) {
    case "hello": {
      const raw = Buffer.from(msg.name, "utf-8");
      if (raw.length > MAX_NAME_BYTES) {
        throw new EncodeError(
          `name is ${raw.length} bytes, limit ${MAX_NAME_BYTES}`,
        );
      }
      return w
        .u8(MSG_HELLO)
        .u8(raw.length)
        .raw(raw)
        .u8(checkU8(msg.role, "role"))
        .u8(checkU8(msg.version, "version"))
        .finish();
    }
    case "helloAck":
      return w
        .u8(MSG_HELLO_ACK)
        .u8(checkU8(msg.accepted, "accepted"))
        .u32(checkU32(msg.framePeriodUs, "framePeriodUs"))
        .finish();
    case "roundStart":
      return w
        .u8(MSG_ROUND_START)
        .u32(checkU32(msg.roundId, "roundId"))
        .u32(checkU32(msg.frames, "frames"))
        .u32(checkU32(msg.hpTotal, "hpTotal"))
        .finish();
    case "frame":
      return w
        .u8(MSG_FRAME)
        .u32(checkU32(msg.roundId, "roundId"))
        .u32(checkU32(msg.frameId, "frameId"))
        .u32(checkU32(msg.hpSelf, "hpSelf"))
        .u32(checkU32(msg.hpOpp, "hpOpp"))
        .u64(checkU64(msg.sendTsUs, "sendTsUs"))
        .finish();
    case "action":
      return w
        .u8(MSG_ACTION)
        .u32(checkU32(msg.frameId, "frameId"))
        .u8(checkU8(msg.actionCode, "actionCode"))
        .u32(checkU32(msg.reportedProcessingUs, "reportedProcessingUs"))
        .finish();
    case "roundEnd":
      return w
        .u8(MSG_ROUND_END)
        .u32(checkU32(msg.roundId, "roundId"))
        .u32(checkU32(msg.hpSelf, "hpSelf"))
        .u32(checkU32(msg.hpOpp, "hpOpp"))
        .u32(checkU32(msg.elapsedFrames, "elapsedFrames"))
        .u32(checkU32(msg.framesProcessed, "framesProcessed"))
        .u32(checkU32(msg.framesSkipped, "framesSkipped"))
        .finish();
    case "matchEnd":
      return w.u8(MSG_MATCH_END).u32(checkU32(msg.rounds, "rounds")).finish();
  }
}

export function encode(msg: Message): Buffer {
  return packBody(msg);
}

const utf8 = new TextDecoder("utf-8", { fatal: true });

function parseHello(payload: Buffer): Hello {
  if (payload.length < 1) {
    throw new ProtocolError("HELLO payload truncated");
  }
  const n = payload[0]!;
  if (n > MAX_NAME_BYTES) {
    throw new ProtocolError(`HELLO name length ${n} exceeds ${MAX_NAME_BYTES}`);
  }
  if (payload.length !== 1 + n + 2) {
    throw new ProtocolError(
      `HELLO payload is ${payload.length} bytes, expected ${1 + n + 2}`,
    );
  }
  let name: string;
  try {
    name = utf8.decode(payload.subarray(1, 1 + n));
  } catch {
    throw new ProtocolError("HELLO name is not valid UTF-8");
  }
  return { kind: "hello", name, role: payload[1 + n]!, version: payload[2 + n]! };
}

function expectLength(payload: Buffer, want: number, what: string): void {
  if (payload.length !== want) {
    throw new ProtocolError(
      `${what} payload is ${payload.length} bytes, expected ${want}`,
    );
  }
}

function parseBody(body: Buffer): Message {
  const type = body[0]!;
  const p = body.subarray(1);
  switch (type) {
    case MSG_HELLO:
      return parseHello(p);
    case MSG_HELLO_ACK:
      expectLength(p, 5, "HelloAck");
      return { kind: "helloAck", accepted: p[0]!, framePeriodUs: p.readUInt32BE(1) };
    case MSG_ROUND_START:
      expectLength(p, 12, "RoundStart");
      return {
        kind: "roundStart",
        roundId: p.readUInt32BE(0),
        frames: p.readUInt32BE(4),
        hpTotal: p.readUInt32BE(8),
      };
    case MSG_FRAME:
      expectLength(p, 24, "Frame");
      return {
        kind: "frame",
        roundId: p.readUInt32BE(0),
        frameId: p.readUInt32BE(4),
        hpSelf: p.readUInt32BE(8),
        hpOpp: p.readUInt32BE(12),
        sendTsUs: p.readBigUInt64BE(16),
      };
    case MSG_ACTION:
      expectLength(p, 9, "Action");
      return {
        kind: "action",
        frameId: p.readUInt32BE(0),
        actionCode: p[4]!,
        reportedProcessingUs: p.readUInt32BE(5),
      };
    case MSG_ROUND_END:
      expectLength(p, 24, "RoundEnd");
      return {
        kind: "roundEnd",
        roundId: p.readUInt32BE(0),
        hpSelf: p.readUInt32BE(4),
        hpOpp: p.readUInt32BE(8),
        elapsedFrames: p.readUInt32BE(12),
        framesProcessed: p.readUInt32BE(16),
        framesSkipped: p.readUInt32BE(20),
      };
    case MSG_MATCH_END:
      expectLength(p, 4, "MatchEnd");
      return { kind: "matchEnd", rounds: p.readUInt32BE(0) };
    default:
      throw new ProtocolError(
        `unknown message type 0x${type.toString(16).padStart(2, "0").toUpperCase()}`,
      );
  }
}

/**
 * Decode one message from the start of `data`. Returns the message and
 * the bytes consumed, or null when the buffer does not yet hold a
 * complete frame. Throws ProtocolError on a hostile length prefix, an
 * unknown type byte, or a payload whose size does not match its type.
 */
export function decode(data: Buffer): [Message, number] | null {
  if (data.length < 4) {
    return null;
  }
  const length = data.readUInt32BE(0);
  if (length > MAX_FRAME_BYTES) {
    throw new ProtocolError(`frame length ${length} exceeds cap ${MAX_FRAME_BYTES}`);
  }
  if (length < 1) {
    throw new ProtocolError("frame has no type byte");
  }
  if (data.length < 4 + length) {
    return null;
  }
  return [parseBody(data.subarray(4, 4 + length)), 4 + length];
}

/** Accumulates socket bytes and yields complete messages in order. */
export class StreamDecoder {
  private buf: Buffer = Buffer.alloc(0);

  feed(data: Buffer): Message[] {
    this.buf = this.buf.length === 0 ? Buffer.from(data) : Buffer.concat([this.buf, data]);
    const out: Message[] = [];
    for (;;) {
      const got = decode(this.buf);
      if (got === null) {
        return out;
      }
      const [msg, consumed] = got;
      this.buf = this.buf.subarray(consumed);
      out.push(msg);
    }
  }

  pendingBytes(): number {
    return this.buf.length;
  }
}
