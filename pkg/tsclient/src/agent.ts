/**
 * Agent client for the frameguard match server.
 *
 * Mirrors the native client's two behaviours. Sandbox mode answers
 * every frame as fast as it can and reports zero processing time, so
 * the server's round-trip measurement is pure stack overhead.
 * Fixed-load mode occupies itself for processingUs + delayUs +
 * extraTransportUs per frame and reports processingUs + delayUs; the
 * extra-transport slice is deliberately unreported, which makes it
 * read as genuine transport cost on the server side.
 *
 * The client is single-threaded by construction: the occupancy spin
 * blocks the event loop, arriving frames queue in the socket buffer,
 * and when the client frees up it acts on the newest pending frame and
 * drops older ones, exactly like a real agent that fell behind.
 */

import * as net from "node:net";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import {
  Action,
  Frame,
  HelloAck,
  Message,
  ProtocolError,
  ROLE_PLAYER,
  ROLE_SANDBOX,
  StreamDecoder,
  encode,
} from "./protocol.js";

export const DEFAULT_PORT = 31415;
export const DEFAULT_GUARD_US = 2000;

export class HandshakeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "HandshakeError";
  }
}

export type Mode = "sandbox" | "fixedload";

export interface VariantSpec {
  label: string;
  processingUs: number;
  extraTransportUs: number;
  delayUs: number;
}

export function nowUs(): number {
  return Number(process.hrtime.bigint() / 1000n);
}

const sleepCell = new Int32Array(new SharedArrayBuffer(4));

/**
 * Block until the monotonic clock reaches deadlineUs; returns the time.
 * Sleeps coarsely (Atomics.wait) until guardUs before the deadline,
 * then spins. A deadline already in the past returns immediately.
 */
export function spinUntil(deadlineUs: number, guardUs = DEFAULT_GUARD_US): number {
  for (;;) {
    const remainingMs = (deadlineUs - guardUs - nowUs()) / 1000;
    if (remainingMs <= 0) {
      break;
    }
    Atomics.wait(sleepCell, 0, 0, remainingMs);
  }
  let now = nowUs();
  while (now < deadlineUs) {
    now = nowUs();
  }
  return now;
}

export function occupancyUs(mode: Mode, spec: VariantSpec): number {
  if (mode === "sandbox") {
    return spec.extraTransportUs;
  }
  return spec.processingUs + spec.extraTransportUs + spec.delayUs;
}

export function reportedUs(mode: Mode, spec: VariantSpec): number {
  if (mode === "sandbox") {
    return 0;
  }
  return spec.processingUs + spec.delayUs;
}

/** Newest pending frame wins; everything older is dropped unanswered. */
export function pickNewest(pending: Frame[]): Frame | undefined {
  const frame = pending[pending.length - 1];
  pending.length = 0;
  return frame;
}

interface ClientOptions {
  host: string;
  port: number;
  mode: Mode;
  spec: VariantSpec;
  guardUs?: number;
  connectTimeoutMs?: number;
}

export class AgentClient {
  readonly host: string;
  readonly port: number;
  readonly mode: Mode;
  readonly spec: VariantSpec;
  readonly guardUs: number;
  readonly connectTimeoutMs: number;
  roundsSeen = 0;

  private pending: Frame[] = [];
  private done = false;
  private failure: Error | null = null;
  private wake: (() => void) | null = null;
  private decoder = new StreamDecoder();

  constructor(opts: ClientOptions) {
    this.host = opts.host;
    this.port = opts.port;
    this.mode = opts.mode;
    this.spec = opts.spec;
    this.guardUs = opts.guardUs ?? DEFAULT_GUARD_US;
    this.connectTimeoutMs = opts.connectTimeoutMs ?? 10_000;
    if (
      this.mode === "sandbox" &&
      (this.spec.processingUs !== 0 || this.spec.delayUs !== 0)
    ) {
      throw new Error(
        "sandbox mode must not burn processing or delay; it reports zero " +
          "and the report must stay honest",
      );
    }
    for (const key of ["processingUs", "extraTransportUs", "delayUs"] as const) {
      if (this.spec[key] < 0 || !Number.isInteger(this.spec[key])) {
        throw new Error(`${key}=${this.spec[key]} outside [0, ...]`);
      }
    }
  }

  private handle(msg: Message): void {
    switch (msg.kind) {
      case "frame":
        this.pending.push(msg);
        break;
      case "roundStart":
        this.roundsSeen += 1;
        this.pending.length = 0;
        break;
      case "roundEnd":
        this.pending.length = 0;
        break;
      case "matchEnd":
        this.pending.length = 0;
        this.done = true;
        break;
      default:
        // anything else from the server is ignorable chatter here
        break;
    }
  }

  private fail(err: Error): void {
    if (this.failure === null) {
      this.failure = err;
    }
    this.done = true;
    this.wake?.();
  }

  private waitForActivity(): Promise<void> {
    return new Promise((resolve) => {
      this.wake = () => {
        this.wake = null;
        resolve();
      };
    });
  }

  private connect(): Promise<net.Socket> {
    return new Promise((resolve, reject) => {
      const sock = net.connect({ host: this.host, port: this.port });
      sock.setNoDelay(true);
      const timer = setTimeout(() => {
        sock.destroy();
        reject(new Error(`connect timed out after ${this.connectTimeoutMs} ms`));
      }, this.connectTimeoutMs);
      sock.once("connect", () => {
        clearTimeout(timer);
        resolve(sock);
      });
      sock.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  private handshake(sock: net.Socket): Promise<void> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        reject(new HandshakeError("timed out waiting for HELLO_ACK"));
      }, this.connectTimeoutMs);
      const onData = (chunk: Buffer) => {
        let msgs: Message[];
        try {
          msgs = this.decoder.feed(chunk);
        } catch (err) {
          clearTimeout(timer);
          sock.off("data", onData);
          reject(err);
          return;
        }
        if (msgs.length === 0) {
          return;
        }
        clearTimeout(timer);
        sock.off("data", onData);
        const ack = msgs[0]!;
        if (ack.kind !== "helloAck") {
          reject(new HandshakeError(`expected HELLO_ACK, got ${ack.kind}`));
          return;
        }
        if (!(ack as HelloAck).accepted) {
          reject(new HandshakeError("server refused the handshake"));
          return;
        }
        for (const msg of msgs.slice(1)) {
          this.handle(msg);
        }
        resolve();
      };
      sock.on("data", onData);
      sock.once("close", () => {
        clearTimeout(timer);
        reject(new HandshakeError("server closed the connection during handshake"));
      });
      const role = this.mode === "sandbox" ? ROLE_SANDBOX : ROLE_PLAYER;
      sock.write(
        encode({
          kind: "hello",
          name: this.spec.label,
          role,
          version: 1,
        }),
      );
    });
  }

  /** Play the match; resolves to the number of rounds seen. */
  async run(): Promise<number> {
    const sock = await this.connect();
    try {
      await this.handshake(sock);
      sock.removeAllListeners("close");
      sock.on("data", (chunk: Buffer) => {
        let msgs: Message[];
        try {
          msgs = this.decoder.feed(chunk);
        } catch (err) {
          this.fail(err as Error);
          return;
        }
        for (const msg of msgs) {
          this.handle(msg);
        }
        this.wake?.();
      });
      sock.on("close", () => {
        if (!this.done) {
          this.fail(new Error("server closed the connection"));
        } else {
          this.wake?.();
        }
      });
      sock.on("error", (err) => {
        this.fail(err);
      });

      const busy = occupancyUs(this.mode, this.spec);
      const reported = reportedUs(this.mode, this.spec);
      while (!this.done) {
        if (this.pending.length === 0) {
          await this.waitForActivity();
          continue;
        }
        const frame = pickNewest(this.pending)!;
        if (busy > 0) {
          spinUntil(nowUs() + busy, this.guardUs);
        }
        const action: Action = {
          kind: "action",
          frameId: frame.frameId,
          actionCode: 0,
          reportedProcessingUs: reported,
        };
        sock.write(encode(action));
        // let buffered socket data flow in before the next decision
        await new Promise<void>((resolve) => setImmediate(resolve));
      }
      if (this.failure !== null) {
        throw this.failure;
      }
      return this.roundsSeen;
    } finally {
      sock.destroy();
    }
  }
}

function envPort(): number {
  const raw = process.env["FRAMEGUARD_PORT"];
  if (raw === undefined) {
    return DEFAULT_PORT;
  }
  const port = Number(raw);
  if (!Number.isInteger(port)) {
    throw new Error(`FRAMEGUARD_PORT=${raw} is not a port number`);
  }
  return port;
}

interface CliArgs {
  host: string;
  port: number | null;
  mode: Mode;
  processingUs: number;
  extraTransportUs: number;
  delayUs: number;
  label: string | null;
  guardUs: number;
}

export function parseCliArgs(argv: string[]): CliArgs {
  const { values } = parseArgs({
    args: argv,
    options: {
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string" },
      mode: { type: "string", default: "sandbox" },
      "processing-us": { type: "string", default: "0" },
      "extra-transport-us": { type: "string", default: "0" },
      "delay-us": { type: "string", default: "0" },
      label: { type: "string" },
      "guard-us": { type: "string", default: String(DEFAULT_GUARD_US) },
    },
  });
  const int = (name: string, raw: string): number => {
    const value = Number(raw);
    if (!Number.isInteger(value)) {
      throw new Error(`--${name}=${raw} is not an integer`);
    }
    return value;
  };
  const mode = values.mode!;
  if (mode !== "sandbox" && mode !== "fixedload") {
    throw new Error(`--mode=${mode} not one of sandbox, fixedload`);
  }
  return {
    host: values.host!,
    port: values.port === undefined ? null : int("port", values.port),
    mode,
    processingUs: int("processing-us", values["processing-us"]!),
    extraTransportUs: int("extra-transport-us", values["extra-transport-us"]!),
    delayUs: int("delay-us", values["delay-us"]!),
    label: values.label ?? null,
    guardUs: int("guard-us", values["guard-us"]!),
  };
}

export async function main(argv: string[]): Promise<number> {
  let args: CliArgs;
  try {
    args = parseCliArgs(argv);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
  if (args.mode === "sandbox" && (args.processingUs !== 0 || args.delayUs !== 0)) {
    process.stderr.write(
      "error: --processing-us and --delay-us require --mode fixedload\n",
    );
    return 2;
  }
  try {
    const spec: VariantSpec = {
      label: args.label ?? args.mode,
      processingUs: args.processingUs,
      extraTransportUs: args.extraTransportUs,
      delayUs: args.delayUs,
    };
    const client = new AgentClient({
      host: args.host,
      port: args.port ?? envPort(),
      mode: args.mode,
      spec,
      guardUs: args.guardUs,
    });
    const rounds = await client.run();
    process.stdout.write(`match over after ${rounds} rounds\n`);
    return 0;
  } catch (err) {
    if (err instanceof HandshakeError) {
      process.stderr.write(`handshake failed: ${err.message}\n`);
      return 2;
    }
    if (err instanceof ProtocolError || err instanceof Error) {
      process.stderr.write(`agent error: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (isMain) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
