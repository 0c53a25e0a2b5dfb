import { fnv1a, mulberry32 } from "./hash.js";

// -----------------------------------------------------------------------
// ngram-lexicon/v1: a deterministic sentence embedder.
//
// Real deployments put a contrastive sentence encoder behind /embed. No
// model weights are available in this environment, so this reference model
// builds sentence vectors from hashed word features plus a synonym lexicon:
// words in the same lexicon cluster share a dominant vector component, so
// "man" lands close to "person" and far from "window" while identical
// inputs always embed identically. Vectors are unit-norm, fixed dimension.
// -----------------------------------------------------------------------

export const EMBED_DIM = 64;

/** Weight of the shared cluster component relative to a word's own feature. */
const CLUSTER_WEIGHT = 2.5;

const CLUSTERS: Record<string, string[]> = {
  humanoid: ["man", "person", "woman", "lady", "gentleman", "boy", "girl", "guy", "human", "people"],
  canine: ["dog", "puppy", "canine", "hound"],
  feline: ["cat", "kitten", "feline"],
  vehicle: ["car", "vehicle", "automobile", "truck", "van"],
  eyewear: ["glasses", "sunglasses", "goggles", "spectacles", "eyeglasses"],
  seating: ["chair", "seat", "stool", "bench"],
  flat_surface: ["table", "desk", "counter"],
  on_rel: ["on", "atop", "upon", "sitting", "standing", "resting"],
  near_rel: ["near", "beside", "next", "adjacent"],
  under_rel: ["under", "beneath", "below", "underneath"],
  hold_rel: ["holding", "carrying", "grasping"],
};

const WORD_CLUSTER = new Map<string, string>();
for (const [cluster, words] of Object.entries(CLUSTERS)) {
  for (const w of words) WORD_CLUSTER.set(w, cluster);
}

const featureCache = new Map<string, Float64Array>();

function hashedFeature(seed: string): Float64Array {
  const cached = featureCache.get(seed);
  if (cached) return cached;
  const rand = mulberry32(fnv1a(seed));
  const v = new Float64Array(EMBED_DIM);
  let norm = 0;
  for (let i = 0; i < EMBED_DIM; i++) {
    // Box-Muller for roughly Gaussian components
    const u1 = Math.max(rand(), 1e-12);
    const u2 = rand();
    v[i] = Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
    norm += v[i] * v[i];
  }
  norm = Math.sqrt(norm);
  for (let i = 0; i < EMBED_DIM; i++) v[i] /= norm;
  featureCache.set(seed, v);
  return v;
}

function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9']+/)
    .filter((t) => t.length > 0);
}

export function embedText(text: string): Float64Array {
  const out = new Float64Array(EMBED_DIM);
  const tokens = tokenize(text);
  if (tokens.length === 0) {
    // degenerate input still gets a deterministic unit vector
    return hashedFeature("empty:" + text);
  }
  for (const token of tokens) {
    const word = hashedFeature("w:" + token);
    for (let i = 0; i < EMBED_DIM; i++) out[i] += word[i];
    const cluster = WORD_CLUSTER.get(token);
    if (cluster) {
      const shared = hashedFeature("c:" + cluster);
      for (let i = 0; i < EMBED_DIM; i++) out[i] += CLUSTER_WEIGHT * shared[i];
    }
  }
  let norm = 0;
  for (let i = 0; i < EMBED_DIM; i++) norm += out[i] * out[i];
  norm = Math.sqrt(norm);
  for (let i = 0; i < EMBED_DIM; i++) out[i] /= norm;
  return out;
}

export function embedBatch(texts: string[]): number[][] {
  return texts.map((t) => Array.from(embedText(t)));
}

export function cosine(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let dot = 0;
  for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
  return dot;
}
