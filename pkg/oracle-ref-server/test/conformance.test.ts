import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { encodePngBase64 } from '../src/png';
import { errorFrameSchema, responseSchema } from '../src/protocol';
import { DEFAULT_FIXTURE } from '../src/server';
import {
  DIST_MAIN,
  NdjsonClient,
  SpawnedServer,
  mulberry32,
  randomRgb,
  runCommand,
  spawnTcpServer,
} from './helpers';

let server: SpawnedServer;

beforeAll(async () => {
  server = await spawnTcpServer('--mode', 'echo');
});

afterAll(() => {
  server.proc.kill();
});

describe('wire conformance', () => {
  it(
    'answers 1000 randomized round trips with matching ids and valid frames',
    async () => {
      const client = await NdjsonClient.connect(server.port);
      const rand = mulberry32(20240817);
      for (let i = 0; i < 1000; i++) {
        if (i % 50 === 25) {
          // sprinkle malformed frames through the stream; each must get an
          // error frame without costing the connection
          const junk = rand() < 0.5 ? '%%% not json %%%' : '{"id": 3.25}';
          const errReply = JSON.parse(await client.roundTrip(junk));
          expect(errorFrameSchema.safeParse(errReply).success).toBe(true);
        }
        const id = Math.floor(rand() * 2 ** 31);
        const side = 1 + Math.floor(rand() * 24);
        const img = randomRgb(rand, side, side);
        const reply = JSON.parse(
          await client.roundTrip(
            JSON.stringify({ id, image_png_b64: encodePngBase64(img) }),
          ),
        );
        const parsed = responseSchema.safeParse(reply);
        expect(parsed.success).toBe(true);
        expect(reply.id).toBe(id);
        expect(reply.detections).toEqual(DEFAULT_FIXTURE);
      }
      expect(client.alive).toBe(true);
      client.close();
    },
    120000,
  );

  it('survives a burst of malformed frames and still serves', async () => {
    const client = await NdjsonClient.connect(server.port);
    const junkLines = [
      'not json at all',
      '[1, 2, 3]',
      '"just a string"',
      '{"id": -5, "image_png_b64": "AA"}',
      '{"image_png_b64": "AA"}',
      '{"id": 4, "image_png_b64": "!!!notbase64!!!"}',
      '{"id": 5, "image_png_b64": "' + Buffer.from('png?').toString('base64') + '"}',
    ];
    for (const junk of junkLines) {
      const reply = JSON.parse(await client.roundTrip(junk));
      expect(errorFrameSchema.safeParse(reply).success).toBe(true);
    }
    const img = randomRgb(mulberry32(5), 8, 8);
    const reply = JSON.parse(
      await client.roundTrip(
        JSON.stringify({ id: 77, image_png_b64: encodePngBase64(img) }),
      ),
    );
    expect(reply.id).toBe(77);
    expect(reply.detections).toEqual(DEFAULT_FIXTURE);
    expect(client.alive).toBe(true);
    client.close();
  });

  it('matches recoverable ids on error frames', async () => {
    const client = await NdjsonClient.connect(server.port);
    const reply = JSON.parse(
      await client.roundTrip('{"id": 123, "image_png_b64": false}'),
    );
    expect(reply.id).toBe(123);
    expect(typeof reply.error).toBe('string');
    client.close();
  });
});

describe('attack-client interop', () => {
  it(
    'passes the client round-trip check over TCP',
    async () => {
      const res = await runCommand('adcp', [
        'oracle-check',
        '--oracle',
        `tcp:127.0.0.1:${server.port}`,
      ]);
      expect(res.stderr).toBe('');
      expect(res.code).toBe(0);
      expect(res.stdout).toContain('round_trip_ok');
      expect(res.stdout).toContain('detections=1/1');
    },
    60000,
  );

  it(
    'passes the client round-trip check over a spawned stdio child',
    async () => {
      const res = await runCommand('adcp', [
        'oracle-check',
        '--oracle',
        `cmd:node ${DIST_MAIN} --mode echo --stdio`,
      ]);
      expect(res.stderr).toBe('');
      expect(res.code).toBe(0);
      expect(res.stdout).toContain('round_trip_ok');
    },
    60000,
  );
});
