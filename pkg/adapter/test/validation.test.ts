import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { encodeRle, isValidRleMask } from '../src/rle.js';
import { stubDetect, stubSegment } from '../src/stubModel.js';
import { IMAGE_PAYLOAD, postJson, startAdapter } from './helpers.js';
import type { RunningServer } from './helpers.js';

describe('request validation', () => {
  let adapter: RunningServer;

  beforeAll(async () => {
    adapter = await startAdapter();
  });

  afterAll(async () => {
    await adapter.close();
  });

  it('rejects an empty candidate list with 400', async () => {
    const { status } = await postJson(`${adapter.url}/v1/detect`, {
      image: IMAGE_PAYLOAD,
      candidate_labels: [],
    });
    expect(status).toBe(400);
  });

  it('rejects a non-PNG image payload with 400', async () => {
    const { status, body } = await postJson(`${adapter.url}/v1/detect`, {
      image: { width: 8, height: 8, png_b64: 'bm90IGEgcG5n' },
      candidate_labels: ['knife'],
    });
    expect(status).toBe(400);
    expect(body.error).toBe('bad_image');
  });

  it('rejects unparseable JSON with 400', async () => {
    const resp = await fetch(`${adapter.url}/v1/detect`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: '{broken',
    });
    expect(resp.status).toBe(400);
  });

  it('reports health with the configured model id', async () => {
    const resp = await fetch(`${adapter.url}/v1/health`);
    const body = (await resp.json()) as Record<string, unknown>;
    expect(resp.status).toBe(200);
    expect(body.segmentation_model).toBe(
      'swinbase_cascade_lvis_paco_pascalpart_partimagenet_in',
    );
  });
});

describe('rle codec', () => {
  it('alternates runs starting with the zero count', () => {
    const bits = [true, false, false, true];
    expect(encodeRle(bits, 2, 2)).toEqual({ width: 2, height: 2, rle: [0, 1, 2, 1] });
  });

  it('round-trips the invariant check', () => {
    const mask = encodeRle(new Array(12).fill(false), 4, 3);
    expect(mask.rle).toEqual([12]);
    expect(isValidRleMask(mask)).toBe(true);
    expect(isValidRleMask({ width: 2, height: 2, rle: [3] })).toBe(false);
    expect(isValidRleMask({ width: 2, height: 2, rle: [-1, 5] })).toBe(false);
  });
});

describe('stub model determinism', () => {
  it('detect is deterministic and label-complete', () => {
    const a = stubDetect(8, 8, ['knife', 'mug']);
    const b = stubDetect(8, 8, ['knife', 'mug']);
    expect(a).toEqual(b);
    expect(a.map((d) => d.label)).toEqual(['knife', 'mug']);
    for (const det of a) {
      expect(det.confidence).toBeGreaterThanOrEqual(0);
      expect(det.confidence).toBeLessThanOrEqual(1);
    }
  });

  it('segment masks always satisfy the RLE sum invariant', () => {
    for (const query of ['knife handle', 'mug side', 'x']) {
      for (const [w, h] of [[8, 8], [3, 5], [1, 1]] as Array<[number, number]>) {
        const [candidate] = stubSegment(w, h, query);
        expect(isValidRleMask(candidate.mask)).toBe(true);
      }
    }
  });
});
