import * as net from 'node:net';
import * as readline from 'node:readline';
import { Readable, Writable } from 'node:stream';
import {
  Detection,
  encodeFrame,
  parseRequestLine,
} from './protocol';
import { RgbImage, decodePngBase64 } from './png';
import { TfjsDetector } from './detector';

export type ServerMode = 'echo' | 'detector';

export interface ServerConfig {
  mode: ServerMode;
  /** Path to a saved model directory; detector mode only. */
  model?: string;
  /** Detections scoring below this are dropped before replying. */
  threshold: number;
  /** Execution hint, currently informational (cpu only). */
  device?: string;
  /** Reply list for echo mode, before threshold filtering. */
  fixture?: Detection[];
}

export const DEFAULT_THRESHOLD = 0.25;

export const DEFAULT_FIXTURE: Detection[] = [
  { box: [8, 8, 24, 24], objectness: 0.9, class_id: 0 },
];

export function validateConfig(cfg: ServerConfig): void {
  if (cfg.mode !== 'echo' && cfg.mode !== 'detector') {
    throw new Error(`unknown mode: ${String(cfg.mode)}`);
  }
  if (cfg.mode === 'echo' && cfg.model != null) {
    throw new Error('echo mode takes no model');
  }
  if (cfg.mode === 'detector' && !cfg.model) {
    throw new Error('detector mode requires --model');
  }
  if (!(cfg.threshold >= 0 && cfg.threshold <= 1)) {
    throw new Error(`threshold must be in [0, 1]: ${cfg.threshold}`);
  }
}

/** One detect implementation per mode; echo never looks at the pixels. */
export interface Responder {
  detect(image: RgbImage): Promise<Detection[]>;
}

class EchoResponder implements Responder {
  constructor(private readonly fixture: Detection[]) {}

  async detect(_image: RgbImage): Promise<Detection[]> {
    return this.fixture;
  }
}

export async function buildResponder(cfg: ServerConfig): Promise<Responder> {
  validateConfig(cfg);
  if (cfg.mode === 'echo') {
    return new EchoResponder(cfg.fixture ?? DEFAULT_FIXTURE);
  }
  return TfjsDetector.load(cfg.model as string);
}

/**
 * Stateless request handler shared by the stdio and TCP front ends.
 * Every input line produces exactly one reply frame; malformed lines get
 * an error frame with the request id when one can be recovered, id 0
 * otherwise, and never tear down the session.
 */
export class OracleSession {
  constructor(
    private readonly responder: Responder,
    private readonly threshold: number,
  ) {}

  async handleLine(line: string): Promise<string> {
    const parsed = parseRequestLine(line);
    if (!parsed.ok) {
      return encodeFrame({ id: parsed.id, error: parsed.error });
    }
    const { id, image_png_b64 } = parsed.request;

    let image: RgbImage;
    try {
      image = decodePngBase64(image_png_b64);
    } catch (err) {
      return encodeFrame({ id, error: `bad image payload: ${String(err)}` });
    }

    try {
      const detections = await this.responder.detect(image);
      const kept = detections.filter((d) => d.objectness >= this.threshold);
      return encodeFrame({ id, detections: kept });
    } catch (err) {
      return encodeFrame({ id, error: `detector failure: ${String(err)}` });
    }
  }
}

/**
 * Pump one NDJSON stream through a session. Replies are serialized in
 * request order even though handling is async.
 */
export function serveStream(
  input: Readable,
  output: Writable,
  session: OracleSession,
): Promise<void> {
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  let chain: Promise<void> = Promise.resolve();
  rl.on('line', (line) => {
    if (line.trim() === '') return;
    chain = chain.then(async () => {
      const reply = await session.handleLine(line);
      if (output.writable) output.write(reply);
    });
  });
  return new Promise((resolve) => {
    rl.on('close', () => {
      void chain.then(resolve);
    });
  });
}

export interface RunningServer {
  port?: number;
  close(): Promise<void>;
  done: Promise<void>;
}

/** Serve on stdin/stdout until EOF. */
export async function serveStdio(cfg: ServerConfig): Promise<void> {
  const responder = await buildResponder(cfg);
  const session = new OracleSession(responder, cfg.threshold);
  await serveStream(process.stdin, process.stdout, session);
}

/**
 * Serve on a TCP port, one serial session per connection, connections
 * accepted concurrently. Port 0 binds an ephemeral port; the chosen port
 * is reported on the returned handle.
 */
export async function serveTcp(
  cfg: ServerConfig,
  port: number,
): Promise<RunningServer> {
  const responder = await buildResponder(cfg);
  const server = net.createServer((socket) => {
    const session = new OracleSession(responder, cfg.threshold);
    socket.on('error', () => socket.destroy());
    void serveStream(socket, socket, session);
  });

  await new Promise<void>((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, '127.0.0.1', resolve);
  });
  const bound = (server.address() as net.AddressInfo).port;

  let resolveDone: () => void;
  const done = new Promise<void>((r) => {
    resolveDone = r;
  });
  server.on('close', () => resolveDone());

  return {
    port: bound,
    close: () =>
      new Promise<void>((resolve) => {
        server.close(() => resolve());
      }),
    done,
  };
}
