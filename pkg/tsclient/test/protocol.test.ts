import { describe, expect, it } from "vitest";

import {
  EncodeError,
  MAX_FRAME_BYTES,
  Message,
  ProtocolError,
  StreamDecoder,
  decode,
  encode,
} from "../src/protocol.js";

// byte sequences cross-checked against the native codec
const GOLDEN_ACTION = "0000000a05000000010000000000";
const GOLDEN_MATCH_END = "000000050700000003";
const GOLDEN_FRAME = "0000001904000000020000000700000190000001870000010000003039";
const GOLDEN_HELLO = "0000000801047473c3a90101";
const GOLDEN_ROUND_START = "0000000d030000000300000e1000000190";
const GOLDEN_ROUND_END =
  "000000190600000003000000b800000000000001e0000001e000000000";
const GOLDEN_HELLO_ACK = "0000000602010000411b";

function hex(buf: Buffer): string {
  return buf.toString("hex");
}

// deterministic PRNG so failures reproduce
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomMessage(rand: () => number): Message {
  const u32 = () => Math.floor(rand() * 4294967296);
  const u8 = () => Math.floor(rand() * 256);
  const u64 = () => (BigInt(u32()) << 32n) | BigInt(u32());
  switch (Math.floor(rand() * 7)) {
    case 0: {
      const chars = "abcXYZ019_.-é☃";
      let name = "";
      const n = Math.floor(rand() * 20);
      for (let i = 0; i < n; i++) {
        name += chars[Math.floor(rand() * chars.length)];
      }
      return { kind: "hello", name, role: Math.floor(rand() * 2), version: u8() };
    }
    case 1:
      return { kind: "helloAck", accepted: Math.floor(rand() * 2), framePeriodUs: u32() };
    case 2:
      return { kind: "roundStart", roundId: u32(), frames: u32(), hpTotal: u32() };
    case 3:
      return {
        kind: "frame",
        roundId: u32(),
        frameId: u32(),
        hpSelf: u32(),
        hpOpp: u32(),
        sendTsUs: u64(),
      };
    case 4:
      return { kind: "action", frameId: u32(), actionCode: u8(), reportedProcessingUs: u32() };
    case 5:
      return {
        kind: "roundEnd",
        roundId: u32(),
        hpSelf: u32(),
        hpOpp: u32(),
        elapsedFrames: u32(),
        framesProcessed: u32(),
        framesSkipped: u32(),
      };
    default:
      return { kind: "matchEnd", rounds: u32() };
  }
}

describe("golden vectors", () => {
  it("encodes the canonical messages byte for byte", () => {
    expect(hex(encode({ kind: "action", frameId: 1, actionCode: 0, reportedProcessingUs: 0 })))
      .toBe(GOLDEN_ACTION);
    expect(hex(encode({ kind: "matchEnd", rounds: 3 }))).toBe(GOLDEN_MATCH_END);
    expect(
      hex(
        encode({
          kind: "frame",
          roundId: 2,
          frameId: 7,
          hpSelf: 400,
          hpOpp: 391,
          sendTsUs: (1n << 40n) + 12345n,
        }),
      ),
    ).toBe(GOLDEN_FRAME);
    expect(hex(encode({ kind: "hello", name: "tsé", role: 1, version: 1 }))).toBe(GOLDEN_HELLO);
    expect(hex(encode({ kind: "roundStart", roundId: 3, frames: 3600, hpTotal: 400 })))
      .toBe(GOLDEN_ROUND_START);
    expect(
      hex(
        encode({
          kind: "roundEnd",
          roundId: 3,
          hpSelf: 184,
          hpOpp: 0,
          elapsedFrames: 480,
          framesProcessed: 480,
          framesSkipped: 0,
        }),
      ),
    ).toBe(GOLDEN_ROUND_END);
    expect(hex(encode({ kind: "helloAck", accepted: 1, framePeriodUs: 16667 })))
      .toBe(GOLDEN_HELLO_ACK);
  });

  it("decodes the canonical messages and reports consumed bytes", () => {
    const [action, consumedA] = decode(Buffer.from(GOLDEN_ACTION, "hex"))!;
    expect(action).toEqual({
      kind: "action",
      frameId: 1,
      actionCode: 0,
      reportedProcessingUs: 0,
    });
    expect(consumedA).toBe(14);
    const [end, consumedE] = decode(Buffer.from(GOLDEN_MATCH_END, "hex"))!;
    expect(end).toEqual({ kind: "matchEnd", rounds: 3 });
    expect(consumedE).toBe(9);
  });
});

describe("round trips", () => {
  it("survives 1000 random messages", () => {
    const rand = mulberry32(0xc0dec);
    for (let i = 0; i < 1000; i++) {
      const msg = randomMessage(rand);
      const wire = encode(msg);
      const got = decode(wire);
      expect(got).not.toBeNull();
      const [decoded, consumed] = got!;
      expect(decoded).toEqual(msg);
      expect(consumed).toBe(wire.length);
    }
  });

  it("consumes only its own frame when trailing bytes follow", () => {
    const rand = mulberry32(42);
    for (let i = 0; i < 100; i++) {
      const msg = randomMessage(rand);
      const wire = encode(msg);
      const padded = Buffer.concat([wire, Buffer.from([0xde, 0xad])]);
      const [decoded, consumed] = decode(padded)!;
      expect(decoded).toEqual(msg);
      expect(consumed).toBe(wire.length);
    }
  });

  it("returns null on every strict prefix", () => {
    const wire = encode({
      kind: "frame",
      roundId: 1,
      frameId: 2,
      hpSelf: 3,
      hpOpp: 4,
      sendTsUs: 5n,
    });
    for (let cut = 0; cut < wire.length; cut++) {
      expect(decode(wire.subarray(0, cut))).toBeNull();
    }
  });
});

describe("stream decoder", () => {
  it("yields complete messages fed one byte at a time", () => {
    const rand = mulberry32(31415);
    const msgs: Message[] = [];
    for (let i = 0; i < 60; i++) {
      msgs.push(randomMessage(rand));
    }
    const wire = Buffer.concat(msgs.map(encode));
    const dec = new StreamDecoder();
    const out: Message[] = [];
    for (const byte of wire) {
      out.push(...dec.feed(Buffer.from([byte])));
    }
    expect(out).toEqual(msgs);
    expect(dec.pendingBytes()).toBe(0);
  });

  it("handles arbitrary chunk boundaries", () => {
    const rand = mulberry32(999);
    const msgs: Message[] = [];
    for (let i = 0; i < 200; i++) {
      msgs.push(randomMessage(rand));
    }
    const wire = Buffer.concat(msgs.map(encode));
    const dec = new StreamDecoder();
    const out: Message[] = [];
    let offset = 0;
    while (offset < wire.length) {
      const step = 1 + Math.floor(rand() * 50);
      out.push(...dec.feed(wire.subarray(offset, offset + step)));
      offset += step;
    }
    expect(out).toEqual(msgs);
    expect(dec.pendingBytes()).toBe(0);
  });
});

describe("decode errors", () => {
  it("rejects an unknown message type", () => {
    expect(() => decode(Buffer.from("00000002ff00", "hex"))).toThrow(ProtocolError);
    expect(() => decode(Buffer.from("00000002ff00", "hex"))).toThrow(/unknown message type/);
  });

  it("rejects a hostile length prefix without buffering", () => {
    const header = Buffer.alloc(4);
    header.writeUInt32BE(MAX_FRAME_BYTES + 1, 0);
    expect(() => decode(header)).toThrow(/exceeds cap/);
  });

  it("rejects a zero-length frame", () => {
    expect(() => decode(Buffer.from("00000000", "hex"))).toThrow(/no type byte/);
  });

  it("rejects a payload whose size does not match its type", () => {
    const body = Buffer.from([0x05, 0, 0]);
    const header = Buffer.alloc(4);
    header.writeUInt32BE(body.length, 0);
    expect(() => decode(Buffer.concat([header, body]))).toThrow(/Action payload/);
  });

  it("rejects a dishonest HELLO name length", () => {
    // claims five name bytes but carries two
    const body = Buffer.concat([Buffer.from([0x01, 5]), Buffer.from("ab"), Buffer.from([0, 1])]);
    const header = Buffer.alloc(4);
    header.writeUInt32BE(body.length, 0);
    expect(() => decode(Buffer.concat([header, body]))).toThrow(/HELLO payload/);
  });

  it("rejects a HELLO name that is not UTF-8", () => {
    const body = Buffer.concat([Buffer.from([0x01, 1, 0xff]), Buffer.from([0, 1])]);
    const header = Buffer.alloc(4);
    header.writeUInt32BE(body.length, 0);
    expect(() => decode(Buffer.concat([header, body]))).toThrow(/not valid UTF-8/);
  });
});

describe("encode errors", () => {
  it("rejects out-of-range fields", () => {
    expect(() =>
      encode({ kind: "action", frameId: 2 ** 32, actionCode: 0, reportedProcessingUs: 0 }),
    ).toThrow(EncodeError);
    expect(() =>
      encode({ kind: "action", frameId: 1, actionCode: 256, reportedProcessingUs: 0 }),
    ).toThrow(/u8/);
    expect(() =>
      encode({
        kind: "frame",
        roundId: 0,
        frameId: 0,
        hpSelf: 0,
        hpOpp: 0,
        sendTsUs: 1n << 64n,
      }),
    ).toThrow(/u64/);
    expect(() => encode({ kind: "matchEnd", rounds: -1 })).toThrow(EncodeError);
  });

  it("rejects a name longer than 64 bytes", () => {
    expect(() =>
      encode({ kind: "hello", name: "x".repeat(65), role: 0, version: 1 }),
    ).toThrow(/limit 64/);
    // 22 snowmen are 66 UTF-8 bytes
    expect(() =>
      encode({ kind: "hello", name: "☃".repeat(22), role: 0, version: 1 }),
    ).toThrow(EncodeError);
  });
});
