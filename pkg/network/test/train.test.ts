import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';
import { beforeAll, describe, expect, it } from 'vitest';

import { initBackend, run } from '../src/main';
import { assertFreshInit, buildModel, padToMultiple, weightChecksum } from '../src/model';
import { predictToDir } from '../src/predict';
import { defaultTrainConfig, loadCorpus, trainPerVideo } from '../src/train';
import { readTensor, writeTensor } from '../src/tensorfile';
import { makeTempDir, writeTinyScene } from './helpers';

beforeAll(async () => {
  await initBackend();
});

function tinyConfig(seed = 3) {
  const config = defaultTrainConfig(seed);
  config.model = { levels: 2, baseWidth: 8, seed };
  config.epochs = 6;
  config.quiet = true;
  return config;
}

describe('model construction', () => {
  it('same seed gives identical checksums, different seeds differ', () => {
    const a = buildModel(16, 16, { levels: 2, baseWidth: 8, seed: 5 });
    const b = buildModel(16, 16, { levels: 2, baseWidth: 8, seed: 5 });
    const c = buildModel(16, 16, { levels: 2, baseWidth: 8, seed: 6 });
    expect(weightChecksum(a)).toBe(weightChecksum(b));
    expect(weightChecksum(a)).not.toBe(weightChecksum(c));
    expect(() => assertFreshInit(a)).not.toThrow();
    a.dispose();
    b.dispose();
    c.dispose();
  });

  it('forward produces probabilities of the input shape', () => {
    const model = buildModel(16, 16, { levels: 3, baseWidth: 8, seed: 1 });
    const x = tf.randomUniform([2, 16, 16, 3], 0, 1, 'float32', 4) as tf.Tensor4D;
    const y = model.forward(x);
    expect(y.shape).toEqual([2, 16, 16, 1]);
    const vals = y.dataSync();
    expect(Math.min(...vals)).toBeGreaterThanOrEqual(0);
    expect(Math.max(...vals)).toBeLessThanOrEqual(1);
    model.dispose();
  });

  it('pads odd sizes to the pooling unit', () => {
    expect(padToMultiple(17, 12, 3)).toEqual([20, 12]);
    expect(padToMultiple(16, 16, 2)).toEqual([16, 16]);
  });
});

describe('corpus loading', () => {
  it('rejects mismatched frame and label counts', () => {
    const scene = writeTinyScene({ m: 4 });
    fs.rmSync(path.join(scene.labelsDir, 'x_0003.stgt'));
    expect(() => loadCorpus(scene.framesDir, scene.labelsDir)).toThrow(/misaligned/);
  });

  it('rejects labels with the wrong shape', () => {
    const scene = writeTinyScene({ m: 3 });
    writeTensor(
      { dims: [4, 4], data: new Float32Array(16) },
      path.join(scene.labelsDir, 'x_0001.stgt')
    );
    expect(() => loadCorpus(scene.framesDir, scene.labelsDir)).toThrow(/misaligned/);
  });

  it('min-max normalizes pseudo-labels over the video', () => {
    const scene = writeTinyScene({ m: 3 });
    const corpus = loadCorpus(scene.framesDir, scene.labelsDir);
    let lo = Infinity;
    let hi = -Infinity;
    for (const l of corpus.labels) {
      for (const v of l) {
        lo = Math.min(lo, v);
        hi = Math.max(hi, v);
      }
    }
    expect(lo).toBe(0);
    expect(hi).toBe(1);
  });
});

describe('training', () => {
  it('loss decreases over the first 5 epochs on varied scenes', async () => {
    for (const seed of [1, 2, 3]) {
      const scene = writeTinyScene({ seed, radius: 3 + seed });
      const { model, epochLosses } = await trainPerVideo(
        scene.framesDir,
        scene.labelsDir,
        tinyConfig(seed)
      );
      for (let e = 1; e < 5; e++) {
        expect(epochLosses[e]).toBeLessThan(epochLosses[e - 1]);
      }
      model.dispose();
    }
  });

  it('near-constant labels drive predictions toward the constant', async () => {
    const scene = writeTinyScene({ m: 3 });
    // overwrite labels: a single lit pixel, everything else zero
    for (let t = 0; t < 3; t++) {
      const soft = new Float32Array(scene.h * scene.w);
      soft[0] = 1.0;
      writeTensor(
        { dims: [scene.h, scene.w], data: soft },
        path.join(scene.labelsDir, `x_${String(t).padStart(4, '0')}.stgt`)
      );
    }
    const config = tinyConfig(9);
    config.epochs = 12;
    const { model, epochLosses } = await trainPerVideo(scene.framesDir, scene.labelsDir, config);
    expect(epochLosses[epochLosses.length - 1]).toBeLessThan(epochLosses[0]);
    const out = makeTempDir('pred-');
    await predictToDir(scene.framesDir, model, out, config.model.levels);
    const pred = readTensor(path.join(out, 's_0000.stgt'));
    const mean = pred.data.reduce((a, b) => a + b, 0) / pred.data.length;
    expect(mean).toBeLessThan(0.2);
    model.dispose();
  });

  it('is deterministic under a fixed seed', async () => {
    const scene = writeTinyScene({ seed: 4 });
    const lossesA = (await trainPerVideo(scene.framesDir, scene.labelsDir, tinyConfig(7))).epochLosses;
    const lossesB = (await trainPerVideo(scene.framesDir, scene.labelsDir, tinyConfig(7))).epochLosses;
    expect(lossesA).toEqual(lossesB);
  });
});

describe('prediction files', () => {
  it('honors the output contract: shape, range, count', async () => {
    const scene = writeTinyScene({ seed: 5 });
    const config = tinyConfig(5);
    const { model } = await trainPerVideo(scene.framesDir, scene.labelsDir, config);
    const out = makeTempDir('pred-');
    const count = await predictToDir(scene.framesDir, model, out, config.model.levels);
    expect(count).toBe(scene.m);
    for (let i = 0; i < scene.m; i++) {
      const t = readTensor(path.join(out, `s_${String(i).padStart(4, '0')}.stgt`));
      expect(t.dims).toEqual([scene.h, scene.w]);
      for (const v of t.data) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
      }
    }
    model.dispose();
  });

  it('fits its own training labels well', async () => {
    const scene = writeTinyScene({ seed: 6, m: 6 });
    const config = tinyConfig(6);
    config.epochs = 25;
    config.model = { levels: 3, baseWidth: 12, seed: 6 };
    const { model } = await trainPerVideo(scene.framesDir, scene.labelsDir, config);
    const out = makeTempDir('pred-');
    await predictToDir(scene.framesDir, model, out, config.model.levels);
    let inter = 0;
    let union = 0;
    for (let i = 0; i < scene.m; i++) {
      const t = readTensor(path.join(out, `s_${String(i).padStart(4, '0')}.stgt`));
      for (let k = 0; k < t.data.length; k++) {
        const p = t.data[k] >= 0.5 ? 1 : 0;
        const g = scene.masks[i][k];
        inter += p & g;
        union += p | g;
      }
    }
    expect(inter / union).toBeGreaterThanOrEqual(0.8);
    model.dispose();
  });
});

describe('command line', () => {
  it('exits 2 on missing directories', async () => {
    expect(await run(['--frames', '/no/such', '--labels', '/no/such', '--out', '/tmp/o'])).toBe(2);
    expect(await run(['--labels', '/tmp', '--out', '/tmp/o'])).toBe(2);
  });

  it('fails on malformed tensor files', async () => {
    const scene = writeTinyScene({ m: 3 });
    fs.writeFileSync(path.join(scene.labelsDir, 'x_0001.stgt'), 'garbage');
    const out = makeTempDir('out-');
    await expect(
      run([
        '--frames', scene.framesDir, '--labels', scene.labelsDir, '--out', out,
        '--epochs', '1', '--quiet', '--levels', '2', '--width', '8',
      ])
    ).rejects.toThrow();
  });

  it('happy path writes one prediction per frame and exits 0', async () => {
    const scene = writeTinyScene({ m: 4, seed: 8 });
    const out = makeTempDir('out-');
    const code = await run([
      '--frames', scene.framesDir, '--labels', scene.labelsDir, '--out', out,
      '--epochs', '2', '--seed', '1', '--quiet', '--levels', '2', '--width', '8',
    ]);
    expect(code).toBe(0);
    const files = fs.readdirSync(out).filter((f) => f.endsWith('.stgt')).sort();
    expect(files).toEqual(['s_0000.stgt', 's_0001.stgt', 's_0002.stgt', 's_0003.stgt']);
  });
});
