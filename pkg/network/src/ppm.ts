/** Binary PPM (P6) decoding for 8-bit RGB frames. */

import * as fs from 'fs';
import * as path from 'path';

export interface Image {
  h: number;
  w: number;
  data: Float32Array; // h*w*3, intensities in [0, 1]
}

export function readPpm(file: string): Image {
  const buf = fs.readFileSync(file);
  if (buf.length < 2 || buf.toString('ascii', 0, 2) !== 'P6') {
    throw new Error(`${file}: not a binary P6 image`);
  }
  const fields: number[] = [];
  let i = 2;
  while (fields.length < 3) {
    while (i < buf.length && isSpace(buf[i])) i++;
    if (i < buf.length && buf[i] === 0x23) {
      while (i < buf.length && buf[i] !== 0x0a) i++;
      continue;
    }
    let j = i;
    while (j < buf.length && !isSpace(buf[j])) j++;
    if (j === i) throw new Error(`${file}: header ended early`);
    fields.push(parseInt(buf.toString('ascii', i, j), 10));
    i = j;
  }
  i += 1; // single whitespace after maxval
  const [w, h, maxval] = fields;
  if (maxval !== 255) {
    throw new Error(`${file}: only 8-bit PPM supported, got maxval ${maxval}`);
  }
  const need = h * w * 3;
  if (buf.length - i < need) {
    throw new Error(`${file}: payload shorter than ${need} bytes`);
  }
  const data = new Float32Array(need);
  for (let k = 0; k < need; k++) {
    data[k] = buf[i + k] / 255.0;
  }
  return { h, w, data };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
}

export function writePpm(img: Image, file: string): void {
  const head = Buffer.from(`P6\n${img.w} ${img.h}\n255\n`, 'ascii');
  const body = Buffer.alloc(img.h * img.w * 3);
  for (let k = 0; k < body.length; k++) {
    body[k] = Math.max(0, Math.min(255, Math.round(img.data[k] * 255)));
  }
  fs.writeFileSync(file, Buffer.concat([head, body]));
}

export function listFrames(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.startsWith('frame_') && f.endsWith('.ppm'))
    .sort()
    .map((f) => path.join(dir, f));
}
