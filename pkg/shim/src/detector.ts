import { fnv1a } from "./hash.js";
import { DecodedImage, rgbToHsv } from "./image.js";

// -----------------------------------------------------------------------
// hue-region/v1: a deterministic open-vocabulary detector for synthetic
// scenes. Each label owns a hue (FNV-1a of the label modulo 360); detection
// masks pixels whose hue falls within the label's tolerance band, extracts
// 4-connected components, and scores each component by how completely and
// purely it fills its bounding box. Scenes rendered with `hueForLabel`
// (see the bundled fixture generator) are detected exactly; labels with no
// matching region return empty arrays, which is the contract for "absent".
// -----------------------------------------------------------------------

export const HUE_TOLERANCE_DEG = 18;
const MIN_SATURATION = 0.35;
const MIN_VALUE = 0.25;
const MIN_COMPONENT_PIXELS = 25;

export interface Detection {
  box: [number, number, number, number];
  score: number;
}

export function hueForLabel(label: string): number {
  return fnv1a(label.trim().toLowerCase()) % 360;
}

function hueDistance(a: number, b: number): number {
  const d = Math.abs(a - b) % 360;
  return d > 180 ? 360 - d : d;
}

export function detectLabel(
  image: DecodedImage,
  label: string,
  boxThreshold: number,
  textThreshold: number,
): Detection[] {
  const { width, height, data } = image;
  const target = hueForLabel(label);
  const mask = new Uint8Array(width * height);
  const hueErr = new Float32Array(width * height);

  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const p = (y * width + x) * 4;
      const [h, s, v] = rgbToHsv(data[p], data[p + 1], data[p + 2]);
      if (s < MIN_SATURATION || v < MIN_VALUE) continue;
      const dist = hueDistance(h, target);
      if (dist <= HUE_TOLERANCE_DEG) {
        mask[y * width + x] = 1;
        hueErr[y * width + x] = dist;
      }
    }
  }

  const seen = new Uint8Array(width * height);
  const stack = new Int32Array(width * height);
  const detections: Detection[] = [];

  for (let start = 0; start < mask.length; start++) {
    if (!mask[start] || seen[start]) continue;
    // flood fill one component
    let top = 0;
    stack[top++] = start;
    seen[start] = 1;
    let minX = width, minY = height, maxX = -1, maxY = -1;
    let count = 0;
    let errSum = 0;
    while (top > 0) {
      const idx = stack[--top];
      const x = idx % width;
      const y = (idx / width) | 0;
      count++;
      errSum += hueErr[idx];
      if (x < minX) minX = x;
      if (x > maxX) maxX = x;
      if (y < minY) minY = y;
      if (y > maxY) maxY = y;
      if (x > 0 && mask[idx - 1] && !seen[idx - 1]) { seen[idx - 1] = 1; stack[top++] = idx - 1; }
      if (x < width - 1 && mask[idx + 1] && !seen[idx + 1]) { seen[idx + 1] = 1; stack[top++] = idx + 1; }
      if (y > 0 && mask[idx - width] && !seen[idx - width]) { seen[idx - width] = 1; stack[top++] = idx - width; }
      if (y < height - 1 && mask[idx + width] && !seen[idx + width]) { seen[idx + width] = 1; stack[top++] = idx + width; }
    }
    if (count < MIN_COMPONENT_PIXELS) continue;

    const boxW = maxX - minX + 1;
    const boxH = maxY - minY + 1;
    const fill = count / (boxW * boxH);
    // purity: how close the component's hues sit to the label's hue
    const purity = 1 - errSum / count / HUE_TOLERANCE_DEG;
    if (purity < textThreshold) continue;
    const score = 0.6 * fill + 0.4 * purity;
    if (score < boxThreshold) continue;
    detections.push({
      box: [minX, minY, maxX + 1, maxY + 1],
      score: Math.min(score, 1),
    });
  }

  detections.sort((a, b) => b.score - a.score || a.box[1] - b.box[1] || a.box[0] - b.box[0]);
  return detections;
}
