import { z } from 'zod';

/**
 * Newline-delimited JSON wire protocol spoken with the attack client.
 *
 * Request:  {"id": <u64>, "image_png_b64": <base64 PNG>}
 * Response: {"id": <u64>, "detections": [{"box": [x0,y0,x1,y1],
 *            "objectness": 0..1, "class_id": <int>}]}
 * Error:    {"id": <u64>, "error": <message>}
 *
 * Exactly one reply frame per request line, ids echoed verbatim.
 */

export const detectionSchema = z
  .object({
    box: z.tuple([z.number(), z.number(), z.number(), z.number()]),
    objectness: z.number().min(0).max(1),
    class_id: z.number().int().nonnegative(),
  })
  .refine((d) => d.box[2] > d.box[0] && d.box[3] > d.box[1], {
    message: 'box must satisfy x1 > x0 and y1 > y0',
  });

export const requestSchema = z.object({
  id: z.number().int().nonnegative(),
  image_png_b64: z.string(),
});

export const responseSchema = z.object({
  id: z.number().int().nonnegative(),
  detections: z.array(detectionSchema),
});

export const errorFrameSchema = z.object({
  id: z.number().int().nonnegative(),
  error: z.string(),
});

export type Detection = z.infer<typeof detectionSchema>;
export type OracleRequest = z.infer<typeof requestSchema>;
export type OracleResponse = z.infer<typeof responseSchema>;
export type ErrorFrame = z.infer<typeof errorFrameSchema>;

export type ParsedRequest =
  | { ok: true; request: OracleRequest }
  | { ok: false; id: number; error: string };

/** Serialize one reply frame, newline terminated. */
export function encodeFrame(frame: OracleResponse | ErrorFrame): string {
  return JSON.stringify(frame) + '\n';
}

/**
 * Recover a usable id from a frame that failed validation so the error
 * reply can still be matched to its request. Falls back to 0 when the
 * frame carries nothing sensible.
 */
export function salvageId(raw: unknown): number {
  if (typeof raw === 'object' && raw !== null && 'id' in raw) {
    const id = (raw as { id: unknown }).id;
    if (typeof id === 'number' && Number.isInteger(id) && id >= 0) {
      return id;
    }
  }
  return 0;
}

/** Parse one request line; malformed input comes back as an error descriptor. */
export function parseRequestLine(line: string): ParsedRequest {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return { ok: false, id: 0, error: 'malformed request: invalid JSON' };
  }
  const parsed = requestSchema.safeParse(raw);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    const where = issue.path.length > 0 ? ` at ${issue.path.join('.')}` : '';
    return {
      ok: false,
      id: salvageId(raw),
      error: `malformed request: ${issue.message}${where}`,
    };
  }
  return { ok: true, request: parsed.data };
}
