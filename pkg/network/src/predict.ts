/** Emit per-frame predictions as s_%04d.stgt planes in [0, 1]. */

import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { SegModel, padToMultiple } from './model';
import { listFrames, readPpm } from './ppm';
import { writeTensor } from './tensorfile';

export async function predictToDir(
  framesDir: string,
  model: SegModel,
  outDir: string,
  levels: number
): Promise<number> {
  const framePaths = listFrames(framesDir);
  if (framePaths.length === 0) {
    throw new Error(`no frame_*.ppm files under ${framesDir}`);
  }
  fs.mkdirSync(outDir, { recursive: true });

  let written = 0;
  for (let i = 0; i < framePaths.length; i++) {
    const img = readPpm(framePaths[i]);
    const [ph, pw] = padToMultiple(img.h, img.w, levels);
    const plane = tf.tidy(() => {
      let x = tf.tensor4d(img.data, [1, img.h, img.w, 3]);
      if (ph !== img.h || pw !== img.w) {
        x = tf.mirrorPad(
          x,
          [[0, 0], [0, ph - img.h], [0, pw - img.w], [0, 0]],
          'symmetric'
        ) as tf.Tensor4D;
      }
      const pred = model.forward(x);
      const crop = tf.slice(pred, [0, 0, 0, 0], [1, img.h, img.w, 1]);
      return tf.clipByValue(crop, 0, 1);
    });
    const data = new Float32Array(await plane.data());
    plane.dispose();
    writeTensor(
      { dims: [img.h, img.w], data },
      path.join(outDir, `s_${String(i).padStart(4, '0')}.stgt`)
    );
    written++;
  }
  return written;
}
