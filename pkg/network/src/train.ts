/**
 * Per-video training on the graph's pseudo-labels, never pretrained.
 * Frames come as frame_%04d.ppm, labels as x_%04d.stgt planes in [0, 1]
 * aligned by index.
 */

import * as tf from '@tensorflow/tfjs';

import { combinedLoss, packTargets } from './losses';
import {
  DEFAULT_MODEL,
  ModelConfig,
  SegModel,
  assertFreshInit,
  buildModel,
  padToMultiple,
  weightChecksum,
} from './model';
import { Image, listFrames, readPpm } from './ppm';
import { listByPattern, readTensor } from './tensorfile';

export interface TrainConfig {
  ceWeight: number;
  diceWeight: number;
  epochs: number;
  learningRate: number;
  batchSize: number;
  seed: number;
  model: ModelConfig;
  quiet: boolean;
}

export function defaultTrainConfig(seed = 0): TrainConfig {
  return {
    ceWeight: 0.5,
    diceWeight: 0.5,
    epochs: 10,
    learningRate: 2e-3,
    batchSize: 4,
    seed,
    model: { ...DEFAULT_MODEL, seed },
    quiet: false,
  };
}

export interface Corpus {
  m: number;
  h: number;
  w: number;
  frames: Float32Array[]; // h*w*3 each
  labels: Float32Array[]; // h*w each, min-max normalized to [0, 1]
}

export function loadCorpus(framesDir: string, labelsDir: string): Corpus {
  const framePaths = listFrames(framesDir);
  const labelPaths = listByPattern(labelsDir, 'x_');
  if (framePaths.length === 0) {
    throw new Error(`no frame_*.ppm files under ${framesDir}`);
  }
  if (framePaths.length !== labelPaths.length) {
    throw new Error(
      `misaligned corpus: ${framePaths.length} frames vs ${labelPaths.length} labels`
    );
  }
  const frames: Image[] = framePaths.map(readPpm);
  const { h, w } = frames[0];
  const labels: Float32Array[] = [];
  labelPaths.forEach((p, i) => {
    if (frames[i].h !== h || frames[i].w !== w) {
      throw new Error(`misaligned corpus: frame ${i} is ${frames[i].h}x${frames[i].w}`);
    }
    const t = readTensor(p);
    if (t.dims.length !== 2 || t.dims[0] !== h || t.dims[1] !== w) {
      throw new Error(`misaligned corpus: label ${p} has dims ${t.dims}, frame is ${h}x${w}`);
    }
    labels.push(t.data);
  });

  // min-max normalize the pseudo-labels over the whole video
  let lo = Infinity;
  let hi = -Infinity;
  for (const l of labels) {
    for (const v of l) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  const span = hi - lo;
  const norm = labels.map((l) => {
    const out = new Float32Array(l.length);
    for (let i = 0; i < l.length; i++) {
      out[i] = span > 0 ? (l[i] - lo) / span : 0.5;
    }
    return out;
  });

  return { m: framePaths.length, h, w, frames: frames.map((f) => f.data), labels: norm };
}

function mirrorPadBatch(x: tf.Tensor4D, ph: number, pw: number): tf.Tensor4D {
  const [, h, w] = x.shape;
  if (h === ph && w === pw) return x;
  return tf.tidy(
    () => tf.mirrorPad(x, [[0, 0], [0, ph - h], [0, pw - w], [0, 0]], 'symmetric') as tf.Tensor4D
  );
}

export function corpusTensors(corpus: Corpus, levels: number): { x: tf.Tensor4D; y: tf.Tensor4D } {
  const { m, h, w } = corpus;
  const [ph, pw] = padToMultiple(h, w, levels);
  return tf.tidy(() => {
    const flat = new Float32Array(m * h * w * 3);
    corpus.frames.forEach((f, i) => flat.set(f, i * h * w * 3));
    const soft = new Float32Array(m * h * w);
    corpus.labels.forEach((l, i) => soft.set(l, i * h * w));
    const x = mirrorPadBatch(tf.tensor4d(flat, [m, h, w, 3]), ph, pw);
    const softT = mirrorPadBatch(tf.tensor4d(soft, [m, h, w, 1]), ph, pw);
    const y = packTargets(softT);
    return { x, y };
  });
}

export interface TrainResult {
  model: SegModel;
  epochLosses: number[];
  initialChecksum: number;
}

export async function trainPerVideo(
  framesDir: string,
  labelsDir: string,
  config: TrainConfig
): Promise<TrainResult> {
  const corpus = loadCorpus(framesDir, labelsDir);
  const [ph, pw] = padToMultiple(corpus.h, corpus.w, config.model.levels);
  const model = buildModel(ph, pw, config.model);
  assertFreshInit(model);
  const initialChecksum = weightChecksum(model);

  const { x, y } = corpusTensors(corpus, config.model.levels);
  const optimizer = tf.train.adam(config.learningRate);
  const m = corpus.m;
  const epochLosses: number[] = [];
  for (let epoch = 0; epoch < config.epochs; epoch++) {
    let total = 0;
    let batches = 0;
    for (let start = 0; start < m; start += config.batchSize) {
      const size = Math.min(config.batchSize, m - start);
      const loss = tf.tidy(() => {
        const xb = tf.slice(x, [start, 0, 0, 0], [size, -1, -1, -1]);
        const yb = tf.slice(y, [start, 0, 0, 0], [size, -1, -1, -1]);
        const value = optimizer.minimize(
          () =>
            combinedLoss(
              model.forward(xb),
              yb,
              config.ceWeight,
              config.diceWeight
            ) as tf.Scalar,
          true,
          model.variables
        )!;
        return value.dataSync()[0];
      });
      total += loss * size;
      batches += size;
    }
    epochLosses.push(total / batches);
  }
  optimizer.dispose();
  x.dispose();
  y.dispose();

  if (!epochLosses.every(Number.isFinite)) {
    throw new Error(`non-finite training loss: ${epochLosses}`);
  }
  if (!config.quiet) {
    const head = epochLosses.slice(0, 5).map((v) => v.toFixed(4)).join(' ');
    const last = epochLosses[epochLosses.length - 1].toFixed(4);
    console.log(`trained ${config.epochs} epochs; first losses ${head} ... final ${last}`);
  }
  return { model, epochLosses, initialChecksum };
}
