export type Capability = "detect" | "embed" | "depth";

export interface ShimConfig {
  host: string;
  port: number;
  /** Endpoints to mount; any subset is a valid shim. */
  capabilities: Capability[];
  /** Model identifiers reported by /healthz and used in logs. */
  models: {
    detector: string;
    embedder: string;
    depth: string;
  };
  /** Accepted for parity with GPU-backed deployments; reference models are CPU-only. */
  device: string;
}

export const DEFAULT_CONFIG: ShimConfig = {
  host: "127.0.0.1",
  port: 8090,
  capabilities: ["detect", "embed", "depth"],
  models: {
    detector: "hue-region/v1",
    embedder: "ngram-lexicon/v1",
    depth: "luma-plane/v1",
  },
  device: "cpu",
};

export function configFromEnv(env: NodeJS.ProcessEnv = process.env): ShimConfig {
  const caps = (env.SHIM_CAPABILITIES ?? "detect,embed,depth")
    .split(",")
    .map((c) => c.trim())
    .filter((c): c is Capability => c === "detect" || c === "embed" || c === "depth");
  return {
    ...DEFAULT_CONFIG,
    host: env.SHIM_HOST ?? DEFAULT_CONFIG.host,
    port: env.SHIM_PORT ? Number(env.SHIM_PORT) : DEFAULT_CONFIG.port,
    capabilities: caps.length ? caps : DEFAULT_CONFIG.capabilities,
    device: env.SHIM_DEVICE ?? DEFAULT_CONFIG.device,
  };
}
