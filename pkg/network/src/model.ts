/**
 * Encoder-decoder segmentation net with residual blocks and skip
 * connections, sized for per-video training at desk scale.
 *
 * Convolutions are expressed as im2col + matMul and the down/upsampling as
 * space-to-depth / depth-to-space reshuffles, because the fast wasm backend
 * ships gradient kernels only for those primitives (its dedicated conv
 * kernels are inference-only). Weights are always freshly initialized from
 * the given seed; nothing is ever loaded from disk.
 */

import * as tf from '@tensorflow/tfjs';

export interface ModelConfig {
  levels: number; // spatial scales (1 block per scale on each path)
  baseWidth: number; // channels at full resolution
  seed: number;
}

export const DEFAULT_MODEL: Omit<ModelConfig, 'seed'> = { levels: 3, baseWidth: 12 };

export interface SegModel {
  config: ModelConfig;
  h: number;
  w: number;
  variables: tf.Variable[];
  forward(x: tf.Tensor4D): tf.Tensor4D;
  dispose(): void;
}

/** Deterministic He-normal parameter tensors from a seed stream. */
class ParamFactory {
  readonly variables: tf.Variable[] = [];
  private counter: number;
  constructor(seed: number) {
    this.counter = seed * 7919;
  }
  kernel(rows: number, cols: number, fanIn: number): tf.Variable {
    const std = Math.sqrt(2.0 / fanIn);
    const v = tf.variable(
      tf.randomNormal([rows, cols], 0, std, 'float32', this.counter++),
      true
    );
    this.variables.push(v);
    return v;
  }
  bias(size: number): tf.Variable {
    const v = tf.variable(tf.zeros([size]), true);
    this.variables.push(v);
    return v;
  }
}

function im2col3x3(x: tf.Tensor4D): tf.Tensor2D {
  const [b, h, w, c] = x.shape;
  const padded = tf.pad(x, [[0, 0], [1, 1], [1, 1], [0, 0]]);
  const parts: tf.Tensor4D[] = [];
  for (let dr = 0; dr < 3; dr++) {
    for (let dc = 0; dc < 3; dc++) {
      parts.push(tf.slice(padded, [0, dr, dc, 0], [b, h, w, c]));
    }
  }
  return tf.concat(parts, 3).reshape([b * h * w, 9 * c]) as tf.Tensor2D;
}

interface Conv {
  apply(x: tf.Tensor4D): tf.Tensor4D;
}

function conv3x3(params: ParamFactory, cin: number, cout: number): Conv {
  const W = params.kernel(9 * cin, cout, 9 * cin);
  const b = params.bias(cout);
  return {
    apply(x: tf.Tensor4D): tf.Tensor4D {
      const [batch, h, w] = x.shape;
      const cols = im2col3x3(x);
      return tf.add(tf.matMul(cols, W), b).reshape([batch, h, w, cout]) as tf.Tensor4D;
    },
  };
}

function conv1x1(params: ParamFactory, cin: number, cout: number): Conv {
  const W = params.kernel(cin, cout, cin);
  const b = params.bias(cout);
  return {
    apply(x: tf.Tensor4D): tf.Tensor4D {
      const [batch, h, w, c] = x.shape;
      const flat = x.reshape([batch * h * w, c]);
      return tf.add(tf.matMul(flat, W), b).reshape([batch, h, w, cout]) as tf.Tensor4D;
    },
  };
}

interface ResBlock {
  apply(x: tf.Tensor4D): tf.Tensor4D;
}

function residualBlock(params: ParamFactory, cin: number, cout: number): ResBlock {
  const c1 = conv3x3(params, cin, cout);
  const c2 = conv3x3(params, cout, cout);
  const proj = cin === cout ? null : conv1x1(params, cin, cout);
  return {
    apply(x: tf.Tensor4D): tf.Tensor4D {
      const y = c2.apply(tf.relu(c1.apply(x)));
      const shortcut = proj ? proj.apply(x) : x;
      return tf.relu(tf.add(y, shortcut)) as tf.Tensor4D;
    },
  };
}

function spaceToDepth(x: tf.Tensor4D): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  return x
    .reshape([b, h / 2, 2, w / 2, 2, c])
    .transpose([0, 1, 3, 2, 4, 5])
    .reshape([b, h / 2, w / 2, 4 * c]) as tf.Tensor4D;
}

function depthToSpace(x: tf.Tensor4D): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  return x
    .reshape([b, h, w, 2, 2, c / 4])
    .transpose([0, 1, 3, 2, 4, 5])
    .reshape([b, 2 * h, 2 * w, c / 4]) as tf.Tensor4D;
}

export function buildModel(h: number, w: number, config: ModelConfig): SegModel {
  const unit = 2 ** (config.levels - 1);
  if (h % unit !== 0 || w % unit !== 0) {
    throw new Error(`input ${h}x${w} not divisible by ${unit}; pad first`);
  }
  const params = new ParamFactory(config.seed);
  const widths: number[] = [];
  for (let i = 0; i < config.levels; i++) {
    widths.push(config.baseWidth * 2 ** i);
  }

  const stem = conv3x3(params, 3, widths[0]);
  const encoders: ResBlock[] = [residualBlock(params, widths[0], widths[0])];
  const downs: Conv[] = [];
  for (let i = 1; i < config.levels; i++) {
    downs.push(conv1x1(params, 4 * widths[i - 1], widths[i]));
    encoders.push(residualBlock(params, widths[i], widths[i]));
  }
  const ups: Conv[] = [];
  const decoders: ResBlock[] = [];
  for (let i = config.levels - 2; i >= 0; i--) {
    ups.push(conv1x1(params, widths[i + 1], 4 * widths[i]));
    decoders.push(residualBlock(params, 2 * widths[i], widths[i]));
  }
  const head = conv1x1(params, widths[0], 1);

  function forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      let cur = tf.relu(stem.apply(x)) as tf.Tensor4D;
      const skips: tf.Tensor4D[] = [];
      for (let i = 0; i < config.levels; i++) {
        if (i > 0) {
          cur = downs[i - 1].apply(spaceToDepth(cur));
        }
        cur = encoders[i].apply(cur);
        if (i < config.levels - 1) {
          skips.push(cur);
        }
      }
      for (let j = 0; j < decoders.length; j++) {
        cur = depthToSpace(ups[j].apply(cur));
        const skip = skips[skips.length - 1 - j];
        cur = decoders[j].apply(tf.concat([cur, skip], 3) as tf.Tensor4D);
      }
      return tf.sigmoid(head.apply(cur)) as tf.Tensor4D;
    });
  }

  return {
    config,
    h,
    w,
    variables: params.variables,
    forward,
    dispose() {
      params.variables.forEach((v) => v.dispose());
    },
  };
}

/** Order-sensitive digest of all parameters; equal seeds give equal sums. */
export function weightChecksum(model: SegModel): number {
  return tf.tidy(() => {
    let total = 0;
    for (const v of model.variables) {
      total += tf.sum(tf.abs(v)).dataSync()[0] + v.size * 1e-9;
    }
    return total;
  });
}

/** Proof of fresh initialization: rebuilding from the seed matches exactly. */
export function assertFreshInit(model: SegModel): void {
  const reference = buildModel(model.h, model.w, model.config);
  const a = weightChecksum(model);
  const b = weightChecksum(reference);
  reference.dispose();
  if (a !== b) {
    throw new Error(`model weights differ from a fresh seed-${model.config.seed} init`);
  }
}

export function padToMultiple(h: number, w: number, levels: number): [number, number] {
  const unit = 2 ** (levels - 1);
  return [Math.ceil(h / unit) * unit, Math.ceil(w / unit) * unit];
}
