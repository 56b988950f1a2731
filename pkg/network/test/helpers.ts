/** Tiny synthetic training videos written straight to a temp directory. */

import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

import { writePpm } from '../src/ppm';
import { writeTensor } from '../src/tensorfile';

export interface TinyScene {
  dir: string;
  framesDir: string;
  labelsDir: string;
  m: number;
  h: number;
  w: number;
  masks: Uint8Array[]; // h*w per frame
}

export function makeTempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

/** A bright disk sliding over a dark noisy background, labels = disk mask. */
export function writeTinyScene(
  opts: { m?: number; h?: number; w?: number; radius?: number; seed?: number } = {}
): TinyScene {
  const m = opts.m ?? 6;
  const h = opts.h ?? 16;
  const w = opts.w ?? 16;
  const radius = opts.radius ?? 4;
  let state = (opts.seed ?? 1) * 48271 + 11;
  const rand = () => {
    state = (state * 1103515245 + 12345) % 2147483648;
    return state / 2147483648;
  };

  const dir = makeTempDir('tiny-scene-');
  const framesDir = path.join(dir, 'frames');
  const labelsDir = path.join(dir, 'labels');
  fs.mkdirSync(framesDir);
  fs.mkdirSync(labelsDir);

  const masks: Uint8Array[] = [];
  for (let t = 0; t < m; t++) {
    const cy = Math.floor(h / 2);
    const cx = radius + 1 + t;
    const mask = new Uint8Array(h * w);
    const rgb = new Float32Array(h * w * 3);
    for (let r = 0; r < h; r++) {
      for (let c = 0; c < w; c++) {
        const inside = (r - cy) ** 2 + (c - cx) ** 2 <= radius * radius;
        mask[r * w + c] = inside ? 1 : 0;
        const base = inside ? 0.85 : 0.25;
        for (let ch = 0; ch < 3; ch++) {
          rgb[(r * w + c) * 3 + ch] = Math.min(1, Math.max(0, base + 0.08 * (rand() - 0.5)));
        }
      }
    }
    masks.push(mask);
    writePpm({ h, w, data: rgb }, path.join(framesDir, `frame_${String(t).padStart(4, '0')}.ppm`));
    const soft = new Float32Array(mask.length);
    mask.forEach((v, i) => (soft[i] = v));
    writeTensor({ dims: [h, w], data: soft }, path.join(labelsDir, `x_${String(t).padStart(4, '0')}.stgt`));
  }
  return { dir, framesDir, labelsDir, m, h, w, masks };
}
