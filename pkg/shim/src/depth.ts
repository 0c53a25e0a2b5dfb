import { DecodedImage } from "./image.js";

// -----------------------------------------------------------------------
// luma-plane/v1: a deterministic monocular-depth stand-in. Combines a
// ground-plane prior (lower rows are closer, a common property of outdoor
// photography) with inverse luminance (darker pixels read as nearer). The
// output is RAW, pre-normalization: the pipeline client owns min-max
// normalization so that rule lives in exactly one place.
// -----------------------------------------------------------------------

const ROW_WEIGHT = 0.65;
const LUMA_WEIGHT = 0.35;

export function estimateDepth(image: DecodedImage): Float32Array {
  const { width, height, data } = image;
  const out = new Float32Array(width * height);
  const rowDenominator = Math.max(height - 1, 1);
  for (let y = 0; y < height; y++) {
    const rowTerm = ROW_WEIGHT * (1 - y / rowDenominator);
    for (let x = 0; x < width; x++) {
      const p = (y * width + x) * 4;
      const luma = (0.299 * data[p] + 0.587 * data[p + 1] + 0.114 * data[p + 2]) / 255;
      out[y * width + x] = rowTerm + LUMA_WEIGHT * (1 - luma);
    }
  }
  return out;
}

/** Little-endian float32 row-major payload for the /depth response. */
export function depthToBase64(values: Float32Array): string {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], i * 4);
  return buf.toString("base64");
}
