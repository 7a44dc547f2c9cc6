import { ChildProcess, spawn } from 'node:child_process';
import * as net from 'node:net';
import * as path from 'node:path';
import { RgbImage } from '../src/png';

export const DIST_MAIN = path.join(__dirname, '..', 'dist', 'main.js');

/** Small deterministic PRNG so test payloads are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomRgb(rand: () => number, width: number, height: number): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.floor(rand() * 256);
  }
  return { width, height, data };
}

export interface SpawnedServer {
  proc: ChildProcess;
  port: number;
  stderr: () => string;
}

/** Start dist/main.js on an ephemeral TCP port and wait for the PORT line. */
export function spawnTcpServer(...extraArgs: string[]): Promise<SpawnedServer> {
  const proc = spawn('node', [DIST_MAIN, '--tcp', '0', ...extraArgs], {
    stdio: ['ignore', 'pipe', 'pipe'],
  });
  let errBuf = '';
  proc.stderr!.on('data', (chunk) => {
    errBuf += String(chunk);
  });
  return new Promise((resolve, reject) => {
    let outBuf = '';
    const onData = (chunk: Buffer) => {
      outBuf += String(chunk);
      const m = outBuf.match(/PORT (\d+)/);
      if (m) {
        proc.stdout!.off('data', onData);
        resolve({ proc, port: Number(m[1]), stderr: () => errBuf });
      }
    };
    proc.stdout!.on('data', onData);
    proc.on('error', reject);
    proc.on('exit', (code) => {
      reject(new Error(`server exited early (code ${code}): ${errBuf}`));
    });
    setTimeout(() => reject(new Error(`no PORT line; stderr: ${errBuf}`)), 15000);
  });
}

/** Line-oriented client: one pending reply resolver per line sent. */
export class NdjsonClient {
  private buffer = '';
  private waiters: Array<(line: string) => void> = [];
  private socket: net.Socket;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.on('data', (chunk) => {
      this.buffer += String(chunk);
      let idx: number;
      while ((idx = this.buffer.indexOf('\n')) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        const waiter = this.waiters.shift();
        if (waiter) waiter(line);
      }
    });
  }

  static connect(port: number): Promise<NdjsonClient> {
    const socket = net.createConnection({ port, host: '127.0.0.1' });
    return new Promise((resolve, reject) => {
      socket.once('connect', () => resolve(new NdjsonClient(socket)));
      socket.once('error', reject);
    });
  }

  /** Send one raw line and await exactly one reply line. */
  roundTrip(line: string, timeoutMs = 10000): Promise<string> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error(`no reply within ${timeoutMs}ms`)),
        timeoutMs,
      );
      this.waiters.push((reply) => {
        clearTimeout(timer);
        resolve(reply);
      });
      this.socket.write(line + '\n');
    });
  }

  get alive(): boolean {
    return !this.socket.destroyed;
  }

  close(): void {
    this.socket.destroy();
  }
}

/** Run a command to completion, capturing output. */
export function runCommand(
  cmd: string,
  args: string[],
): Promise<{ code: number; stdout: string; stderr: string }> {
  return new Promise((resolve, reject) => {
    const proc = spawn(cmd, args, { stdio: ['ignore', 'pipe', 'pipe'] });
    let stdout = '';
    let stderr = '';
    proc.stdout.on('data', (c) => (stdout += String(c)));
    proc.stderr.on('data', (c) => (stderr += String(c)));
    proc.on('error', reject);
    proc.on('close', (code) => resolve({ code: code ?? -1, stdout, stderr }));
  });
}
