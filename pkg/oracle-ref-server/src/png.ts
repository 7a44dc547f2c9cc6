import { PNG } from 'pngjs';

/** Decoded 8-bit RGB frame, row-major, no alpha. */
export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array;
}

/** Decode a base64 PNG payload; throws on any malformed input. */
export function decodePngBase64(b64: string): RgbImage {
  const buf = Buffer.from(b64, 'base64');
  const png = PNG.sync.read(buf); // throws on bad signature, CRC, inflate
  const n = png.width * png.height;
  const rgb = new Uint8Array(n * 3);
  for (let i = 0; i < n; i++) {
    rgb[i * 3] = png.data[i * 4];
    rgb[i * 3 + 1] = png.data[i * 4 + 1];
    rgb[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data: rgb };
}

/** Encode an RGB frame as a base64 PNG string. */
export function encodePngBase64(img: RgbImage): string {
  if (img.data.length !== img.width * img.height * 3) {
    throw new Error(
      `pixel buffer has ${img.data.length} bytes, expected ${img.width * img.height * 3}`,
    );
  }
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    png.data[i * 4] = img.data[i * 3];
    png.data[i * 4 + 1] = img.data[i * 3 + 1];
    png.data[i * 4 + 2] = img.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png).toString('base64');
}
