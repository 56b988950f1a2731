/**
 * CLI honoring the graph side's invocation protocol:
 *   node dist/main.js --frames DIR --labels DIR --out DIR \
 *       [--epochs N] [--lr F] [--seed N] [--width N] [--levels N] [--quiet]
 * Trains from scratch on the pseudo-labels in --labels, then writes one
 * s_%04d.stgt prediction per frame into --out. Exits 0 on success.
 */

import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';
import * as wasm from '@tensorflow/tfjs-backend-wasm';

import { predictToDir } from './predict';
import { defaultTrainConfig, trainPerVideo } from './train';

/** Prefer the wasm kernels (an order of magnitude faster than plain JS);
 * single-threaded so runs are reproducible. Falls back to the JS backend. */
export async function initBackend(): Promise<string> {
  try {
    wasm.setWasmPaths(
      path.join(__dirname, '..', 'node_modules', '@tensorflow', 'tfjs-backend-wasm', 'dist') +
        path.sep
    );
    wasm.setThreadsCount(1);
    if (await tf.setBackend('wasm')) {
      return tf.getBackend();
    }
  } catch {
    // fall through to the JS backend
  }
  await tf.setBackend('cpu');
  return tf.getBackend();
}

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const tok = argv[i];
    if (!tok.startsWith('--')) {
      throw new Error(`unexpected argument ${tok}`);
    }
    if (tok === '--quiet') {
      out.set('quiet', '1');
      continue;
    }
    if (i + 1 >= argv.length) {
      throw new Error(`${tok} needs a value`);
    }
    out.set(tok.slice(2), argv[++i]);
  }
  return out;
}

export async function run(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  for (const key of ['frames', 'labels', 'out']) {
    const val = args.get(key);
    if (!val) {
      console.error(`error: --${key} is required`);
      return 2;
    }
    if (key !== 'out' && !fs.existsSync(val)) {
      console.error(`error: --${key}: no such directory: ${val}`);
      return 2;
    }
  }

  const backend = await initBackend();
  const seed = parseInt(args.get('seed') ?? '0', 10);
  const config = defaultTrainConfig(seed);
  if (args.has('epochs')) config.epochs = parseInt(args.get('epochs')!, 10);
  if (args.has('lr')) config.learningRate = parseFloat(args.get('lr')!);
  if (args.has('width')) config.model.baseWidth = parseInt(args.get('width')!, 10);
  if (args.has('levels')) config.model.levels = parseInt(args.get('levels')!, 10);
  if (args.has('quiet')) config.quiet = true;

  const t0 = Date.now();
  const { model } = await trainPerVideo(args.get('frames')!, args.get('labels')!, config);
  const count = await predictToDir(args.get('frames')!, model, args.get('out')!, config.model.levels);
  if (!config.quiet) {
    console.log(
      `wrote ${count} predictions to ${args.get('out')} in ${((Date.now() - t0) / 1000).toFixed(1)}s ` +
        `(backend=${backend} epochs=${config.epochs} lr=${config.learningRate} seed=${seed} ` +
        `width=${config.model.baseWidth} levels=${config.model.levels})`
    );
  }
  model.dispose();
  return 0;
}

if (require.main === module) {
  run(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    });
}
