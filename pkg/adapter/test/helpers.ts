import http from 'node:http';
import { AddressInfo } from 'node:net';
import express from 'express';

import { AdapterConfig, DEFAULT_SEGMENTATION_MODEL_ID } from '../src/config.js';
import { createApp } from '../src/server.js';

/** 8x8 RGB PNG used as the image payload in every request fixture. */
export const PNG_8X8_B64 =
  'iVBORw0KGgoAAAANSUhEUgAAAAgAAAAICAIAAABLbSncAAAA00lEQVR4nAHIADf/AKvNBc53g6BI+Q1GYZFoIQsADCX+MKa/OwScoT6xv2H9qiRXyWAYDIgEjOTBR8/66rQEGD/c5ehVvw3Eeq4j6GbA8RXXb2aR3kH2BOwgCHPI7ffOsujdx1mIRFEcvC8SXSxw8gJ4NimdwO+PJeDrzifhKSadH8IovAY8PG8CLatUiRgjhMwzvjC+Kj25chA+XvThpvYgAuezYz8lZNFMBuF0CIksLsYH6nGnvwNEwgLNGZI/oLRBd3oELLP603PIQTYYe2KWKaI4dV1AhrZjswAAAABJRU5ErkJggg==';

export const IMAGE_PAYLOAD = { width: 8, height: 8, png_b64: PNG_8X8_B64 };

export interface RunningServer {
  url: string;
  close(): Promise<void>;
}

function listen(server: http.Server): Promise<string> {
  return new Promise((resolve) => {
    server.listen(0, '127.0.0.1', () => {
      const { port } = server.address() as AddressInfo;
      resolve(`http://127.0.0.1:${port}`);
    });
  });
}

export async function startAdapter(
  overrides: Partial<AdapterConfig> = {},
): Promise<RunningServer> {
  const config: AdapterConfig = {
    segmentationModelId: DEFAULT_SEGMENTATION_MODEL_ID,
    chatModelId: 'gpt-4',
    chatBaseUrl: 'http://127.0.0.1:1/v1',
    device: 'cpu',
    maskThreshold: 0.5,
    modelBackend: { kind: 'stub' },
    ...overrides,
  };
  const server = http.createServer(createApp(config));
  const url = await listen(server);
  return {
    url,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}

export interface RecordingUpstream extends RunningServer {
  requests: Array<Record<string, unknown>>;
  /** Set to force a non-2xx reply from the next requests. */
  failWithStatus: { value: number | null };
}

/** Minimal OpenAI-compatible chat upstream that records request bodies. */
export async function startRecordingChatUpstream(
  reply = 'Objects: knife\nReason: recorded',
): Promise<RecordingUpstream> {
  const requests: Array<Record<string, unknown>> = [];
  const failWithStatus: { value: number | null } = { value: null };
  const app = express();
  app.use(express.json());
  app.post('/v1/chat/completions', (req, res) => {
    requests.push(req.body as Record<string, unknown>);
    if (failWithStatus.value !== null) {
      res.status(failWithStatus.value).json({ error: 'forced failure' });
      return;
    }
    res.json({ choices: [{ message: { role: 'assistant', content: reply } }] });
  });
  const server = http.createServer(app);
  const url = await listen(server);
  return {
    url,
    requests,
    failWithStatus,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}

export async function postJson(
  url: string,
  body: unknown,
): Promise<{ status: number; body: Record<string, unknown> }> {
  const resp = await fetch(url, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: typeof body === 'string' ? body : JSON.stringify(body),
  });
  return { status: resp.status, body: (await resp.json()) as Record<string, unknown> };
}
