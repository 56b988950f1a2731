/**
 * Training loss: a weighted average of pixelwise binary cross-entropy on
 * binarized targets and soft Dice on the raw soft targets. Default weights
 * are 0.5/0.5, making the loss the arithmetic mean of the two components.
 */

import * as tf from '@tensorflow/tfjs';

export const DEFAULT_CE_WEIGHT = 0.5;
export const DEFAULT_DICE_WEIGHT = 0.5;
export const BINARIZE_THRESHOLD = 0.5;
export const DICE_SMOOTH = 1.0;
const EPS = 1e-7;

/** Mean binary cross-entropy of probabilities against hard 0/1 targets. */
export function crossEntropy(pred: tf.Tensor, hardTarget: tf.Tensor): tf.Tensor {
  return tf.tidy(() => {
    const p = tf.clipByValue(pred, EPS, 1 - EPS);
    const t = hardTarget;
    const ce = tf.neg(
      tf.add(tf.mul(t, tf.log(p)), tf.mul(tf.sub(1, t), tf.log(tf.sub(1, p))))
    );
    return tf.mean(ce);
  });
}

/** Soft Dice loss per image (smoothing 1.0), averaged over the batch. */
export function softDice(pred: tf.Tensor, softTarget: tf.Tensor): tf.Tensor {
  return tf.tidy(() => {
    const axes = [1, 2, 3];
    const inter = tf.sum(tf.mul(pred, softTarget), axes);
    const total = tf.add(tf.sum(pred, axes), tf.sum(softTarget, axes));
    const dice = tf.div(tf.add(tf.mul(inter, 2), DICE_SMOOTH), tf.add(total, DICE_SMOOTH));
    return tf.mean(tf.sub(1, dice));
  });
}

export function binarize(soft: tf.Tensor, threshold = BINARIZE_THRESHOLD): tf.Tensor {
  return tf.tidy(() => tf.cast(tf.greaterEqual(soft, threshold), 'float32'));
}

/**
 * Combined loss. The target tensor carries two channels: channel 0 holds the
 * soft pseudo-labels, channel 1 the pre-binarized version used by the
 * cross-entropy term.
 */
export function combinedLoss(
  pred: tf.Tensor,
  packedTarget: tf.Tensor,
  ceWeight = DEFAULT_CE_WEIGHT,
  diceWeight = DEFAULT_DICE_WEIGHT
): tf.Tensor {
  return tf.tidy(() => {
    const soft = tf.slice(packedTarget, [0, 0, 0, 0], [-1, -1, -1, 1]);
    const hard = tf.slice(packedTarget, [0, 0, 0, 1], [-1, -1, -1, 1]);
    const ce = crossEntropy(pred, hard);
    const dl = softDice(pred, soft);
    return tf.add(tf.mul(ce, ceWeight), tf.mul(dl, diceWeight));
  });
}

/** Pack soft labels into the two-channel target expected by combinedLoss. */
export function packTargets(soft: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(
    () => tf.concat([soft, binarize(soft) as tf.Tensor4D], 3) as tf.Tensor4D
  );
}
