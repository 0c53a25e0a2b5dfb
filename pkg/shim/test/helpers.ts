import { hueForLabel } from "../src/detector.js";
import { encodePng, hsvToRgb } from "../src/image.js";

export interface Rect {
  label: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

/** Render a synthetic scene: gray background, one saturated hue-keyed
 * rectangle per labelled object. Scenes built this way are exactly what the
 * hue-region detector is specified over. */
export function renderScene(width: number, height: number, rects: Rect[]): Buffer {
  const rgba = new Uint8Array(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = 210;
    rgba[i * 4 + 1] = 210;
    rgba[i * 4 + 2] = 210;
    rgba[i * 4 + 3] = 255;
  }
  for (const rect of rects) {
    const [r, g, b] = hsvToRgb(hueForLabel(rect.label), 0.85, 0.85);
    for (let y = rect.y1; y < rect.y2; y++) {
      for (let x = rect.x1; x < rect.x2; x++) {
        const p = (y * width + x) * 4;
        rgba[p] = r;
        rgba[p + 1] = g;
        rgba[p + 2] = b;
        rgba[p + 3] = 255;
      }
    }
  }
  return encodePng(width, height, rgba);
}

export const SCENE_RECTS: Rect[] = [
  { label: "cat", x1: 10, y1: 12, x2: 40, y2: 42 },
  { label: "dog", x1: 55, y1: 20, x2: 90, y2: 50 },
];

export const SCENE_WIDTH = 100;
export const SCENE_HEIGHT = 70;

export function renderFixtureScene(): Buffer {
  return renderScene(SCENE_WIDTH, SCENE_HEIGHT, SCENE_RECTS);
}
