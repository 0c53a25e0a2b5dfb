import express, { Express } from "express";

import { Capability, ShimConfig, configFromEnv } from "./config.js";
import { estimateDepth, depthToBase64 } from "./depth.js";
import { detectLabel } from "./detector.js";
import { embedBatch } from "./embedder.js";
import { decodeImage } from "./image.js";
import { DepthRequestSchema, DetectRequestSchema, EmbedRequestSchema } from "./schemas.js";

export function createApp(config: ShimConfig): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  const mounted = new Set<Capability>(config.capabilities);

  app.get("/healthz", (_req, res) => {
    res.json({
      status: "ok",
      capabilities: [...mounted],
      models: config.models,
      device: config.device,
    });
  });

  if (mounted.has("detect")) {
    app.post("/detect", (req, res) => {
      const parsed = DetectRequestSchema.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({ error: parsed.error.issues[0]?.message ?? "bad request" });
        return;
      }
      const image = decodeImage(parsed.data.image_b64);
      if (!image) {
        res.status(400).json({ error: "image_b64 is not a decodable image" });
        return;
      }
      const detections = detectLabel(
        image,
        parsed.data.label,
        parsed.data.box_threshold,
        parsed.data.text_threshold,
      );
      res.json({
        boxes: detections.map((d) => d.box),
        scores: detections.map((d) => d.score),
      });
    });
  }

  if (mounted.has("embed")) {
    app.post("/embed", (req, res) => {
      const parsed = EmbedRequestSchema.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({ error: parsed.error.issues[0]?.message ?? "bad request" });
        return;
      }
      res.json({ vectors: embedBatch(parsed.data.texts) });
    });
  }

  if (mounted.has("depth")) {
    app.post("/depth", (req, res) => {
      const parsed = DepthRequestSchema.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({ error: parsed.error.issues[0]?.message ?? "bad request" });
        return;
      }
      const image = decodeImage(parsed.data.image_b64);
      if (!image) {
        res.status(400).json({ error: "image_b64 is not a decodable image" });
        return;
      }
      const values = estimateDepth(image);
      res.json({
        width: image.width,
        height: image.height,
        values_b64: depthToBase64(values),
      });
    });
  }

  return app;
}

const isMain = process.argv[1]?.endsWith("server.js") || process.argv[1]?.endsWith("server.ts");
if (isMain) {
  const config = configFromEnv();
  const app = createApp(config);
  app.listen(config.port, config.host, () => {
    console.log(
      `shim listening on http://${config.host}:${config.port} ` +
        `capabilities=${config.capabilities.join(",")} device=${config.device}`,
    );
  });
}
