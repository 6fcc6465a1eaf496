/** HTTP service implementing the engine's detect/segment/chat wire protocol
 * by wrapping a part-segmentation model runner and an OpenAI-compatible
 * chat API. Stateless; safe to run several replicas. */

import express, { NextFunction, Request, Response } from 'express';

import { AdapterConfig, validateConfig } from './config.js';
import { isValidRleMask } from './rle.js';
import { Detection, SegmentCandidate, stubDetect, stubSegment } from './stubModel.js';

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

interface ImagePayload {
  width: number;
  height: number;
  png_b64: string;
}

interface ChatMessage {
  role: string;
  content: string;
}

function parseImage(value: unknown): ImagePayload | null {
  if (typeof value !== 'object' || value === null) return null;
  const image = value as Record<string, unknown>;
  if (!Number.isInteger(image.width) || (image.width as number) < 1) return null;
  if (!Number.isInteger(image.height) || (image.height as number) < 1) return null;
  if (typeof image.png_b64 !== 'string' || image.png_b64.length === 0) return null;
  let decoded: Buffer;
  try {
    decoded = Buffer.from(image.png_b64, 'base64');
  } catch {
    return null;
  }
  if (decoded.length < PNG_MAGIC.length || !decoded.subarray(0, 8).equals(PNG_MAGIC)) {
    return null;
  }
  return value as unknown as ImagePayload;
}

function parseMessages(value: unknown): ChatMessage[] | null {
  if (!Array.isArray(value) || value.length === 0) return null;
  const messages: ChatMessage[] = [];
  for (const item of value) {
    if (typeof item !== 'object' || item === null) return null;
    const message = item as Record<string, unknown>;
    if (typeof message.role !== 'string' || typeof message.content !== 'string') {
      return null;
    }
    messages.push({ role: message.role, content: message.content });
  }
  return messages;
}

function isPlainObject(value: unknown): value is Record<string, unknown> {
  return typeof value === 'object' && value !== null && !Array.isArray(value);
}

async function forwardToRunner(
  config: AdapterConfig,
  path: string,
  body: Record<string, unknown>,
): Promise<Record<string, unknown>> {
  if (config.modelBackend.kind !== 'http') {
    throw new Error('no http model backend configured');
  }
  const url = config.modelBackend.url.replace(/\/$/, '') + path;
  const upstream = await fetch(url, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({
      ...body,
      model: config.segmentationModelId,
      mask_threshold: config.maskThreshold,
      device: config.device,
    }),
  });
  if (!upstream.ok) {
    throw new Error(`model runner ${path} answered ${upstream.status}`);
  }
  const doc: unknown = await upstream.json();
  if (!isPlainObject(doc)) {
    throw new Error(`model runner ${path} returned a non-object body`);
  }
  return doc;
}

export function createApp(config: AdapterConfig): express.Express {
  validateConfig(config);
  const app = express();
  app.use(express.json({ limit: '64mb' }));

  app.get('/v1/health', (_req: Request, res: Response) => {
    res.json({
      status: 'ok',
      segmentation_model: config.segmentationModelId,
      chat_model: config.chatModelId,
      model_backend: config.modelBackend.kind,
    });
  });

  app.post('/v1/detect', async (req: Request, res: Response) => {
    const body: unknown = req.body;
    if (!isPlainObject(body)) {
      res.status(400).json({ error: 'body_not_object' });
      return;
    }
    const image = parseImage(body.image);
    if (image === null) {
      res.status(400).json({ error: 'bad_image' });
      return;
    }
    const labels = body.candidate_labels;
    if (
      !Array.isArray(labels) ||
      labels.length === 0 ||
      !labels.every((label) => typeof label === 'string' && label.length > 0)
    ) {
      res.status(400).json({ error: 'bad_candidate_labels' });
      return;
    }
    try {
      let detections: Detection[];
      if (config.modelBackend.kind === 'stub') {
        detections = stubDetect(image.width, image.height, labels as string[]);
      } else {
        const doc = await forwardToRunner(config, '/v1/detect', body);
        detections = (doc.detections ?? []) as Detection[];
      }
      res.json({ detections });
    } catch (err) {
      res.status(500).json({ error: 'model_failure', detail: String(err) });
    }
  });

  app.post('/v1/segment', async (req: Request, res: Response) => {
    const body: unknown = req.body;
    if (!isPlainObject(body)) {
      res.status(400).json({ error: 'body_not_object' });
      return;
    }
    const image = parseImage(body.image);
    if (image === null) {
      res.status(400).json({ error: 'bad_image' });
      return;
    }
    if (typeof body.query !== 'string' || body.query.trim().length === 0) {
      res.status(400).json({ error: 'bad_query' });
      return;
    }
    try {
      let candidates: SegmentCandidate[];
      if (config.modelBackend.kind === 'stub') {
        candidates = stubSegment(image.width, image.height, body.query);
      } else {
        const doc = await forwardToRunner(config, '/v1/segment', body);
        candidates = (doc.candidates ?? []) as SegmentCandidate[];
      }
      for (const candidate of candidates) {
        const mask: unknown = candidate.mask;
        if (!isValidRleMask(mask)) {
          throw new Error('candidate mask run lengths do not tile width*height');
        }
      }
      res.json({ candidates });
    } catch (err) {
      res.status(500).json({ error: 'model_failure', detail: String(err) });
    }
  });

  app.post('/v1/chat', async (req: Request, res: Response) => {
    const body: unknown = req.body;
    if (!isPlainObject(body)) {
      res.status(400).json({ error: 'body_not_object' });
      return;
    }
    // Accepts both the wire shape and chat-completions-style bodies; either
    // way the upstream call is pinned to temperature 0 for reproducibility.
    const messages = parseMessages(body.messages);
    if (messages === null) {
      res.status(400).json({ error: 'bad_messages' });
      return;
    }
    const url = config.chatBaseUrl.replace(/\/$/, '') + '/chat/completions';
    let upstream: globalThis.Response;
    try {
      upstream = await fetch(url, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({
          model: config.chatModelId,
          messages,
          temperature: 0.0,
        }),
      });
    } catch (err) {
      res.status(502).json({ error: 'upstream_unreachable', detail: String(err) });
      return;
    }
    if (!upstream.ok) {
      res.status(502).json({ error: 'upstream_error', status: upstream.status });
      return;
    }
    let doc: unknown;
    try {
      doc = await upstream.json();
    } catch {
      res.status(502).json({ error: 'upstream_not_json' });
      return;
    }
    const content = extractContent(doc);
    if (content === null) {
      res.status(502).json({ error: 'upstream_missing_content' });
      return;
    }
    res.json({ content });
  });

  app.use((_req: Request, res: Response) => {
    res.status(404).json({ error: 'unknown_path' });
  });

  // body-parser failures and anything else thrown synchronously
  app.use((err: Error, _req: Request, res: Response, _next: NextFunction) => {
    res.status(400).json({ error: 'bad_request', detail: err.message });
  });

  return app;
}

function extractContent(doc: unknown): string | null {
  if (!isPlainObject(doc)) return null;
  if (typeof doc.content === 'string') return doc.content;
  const choices = doc.choices;
  if (Array.isArray(choices) && choices.length > 0 && isPlainObject(choices[0])) {
    const message = (choices[0] as Record<string, unknown>).message;
    if (isPlainObject(message) && typeof message.content === 'string') {
      return message.content;
    }
  }
  return null;
}
