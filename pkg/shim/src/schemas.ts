import { z } from "zod";

// One object name per detection request; dotted multi-label prompts are a
// protocol violation (per-label prompting gives better boxes).
export const LABEL_SEPARATORS = /[.,;|\n]/;

export const DetectRequestSchema = z
  .object({
    image_b64: z.string().min(1),
    label: z
      .string()
      .min(1)
      .refine((l) => !LABEL_SEPARATORS.test(l), { message: "exactly one object name per request" })
      .refine((l) => l.trim().length > 0, { message: "label must be non-empty" }),
    box_threshold: z.number().min(0).max(1),
    text_threshold: z.number().min(0).max(1),
  })
  .strict();

export const DepthRequestSchema = z
  .object({
    image_b64: z.string().min(1),
  })
  .strict();

export const EmbedRequestSchema = z
  .object({
    texts: z.array(z.string()).min(1).max(256),
  })
  .strict();

export const DetectResponseSchema = z
  .object({
    boxes: z.array(z.tuple([z.number(), z.number(), z.number(), z.number()])),
    scores: z.array(z.number()),
  })
  .refine((r) => r.boxes.length === r.scores.length, { message: "boxes/scores must be parallel" });

export const DepthResponseSchema = z
  .object({
    width: z.number().int().positive(),
    height: z.number().int().positive(),
    values_b64: z.string(),
  })
  .strict();

export const EmbedResponseSchema = z.object({ vectors: z.array(z.array(z.number())) }).strict();

export const HealthResponseSchema = z
  .object({
    status: z.literal("ok"),
    capabilities: z.array(z.enum(["detect", "embed", "depth"])),
    models: z.object({ detector: z.string(), embedder: z.string(), depth: z.string() }),
    device: z.string(),
  })
  .strict();
