/** Deterministic stand-in model used when no runner URL is configured.
 * Lets the engine run end-to-end offline and keeps the protocol tests
 * independent of model weights. */

import { encodeRle, RleMask } from './rle.js';

export interface Detection {
  label: string;
  confidence: number;
  bbox: [number, number, number, number];
}

export interface SegmentCandidate {
  part_label: string;
  confidence: number;
  mask: RleMask;
}

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i += 1) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function stubDetect(
  width: number,
  height: number,
  candidateLabels: string[],
): Detection[] {
  return candidateLabels.map((label) => {
    const hash = fnv1a(`${label}:${width}x${height}`);
    return {
      label,
      confidence: Math.round(((hash % 1000) / 999) * 1000) / 1000,
      bbox: [0, 0, width, height],
    };
  });
}

export function stubSegment(
  width: number,
  height: number,
  query: string,
): SegmentCandidate[] {
  const hash = fnv1a(`${query}:${width}x${height}`);
  const rectW = 1 + (hash % Math.max(1, Math.floor(width / 2)));
  const rectH = 1 + ((hash >> 8) % Math.max(1, Math.floor(height / 2)));
  const u0 = Math.floor((width - rectW) / 2);
  const v0 = Math.floor((height - rectH) / 2);
  const bits: boolean[] = new Array(width * height).fill(false);
  for (let v = v0; v < v0 + rectH; v += 1) {
    for (let u = u0; u < u0 + rectW; u += 1) {
      bits[v * width + u] = true;
    }
  }
  return [
    {
      part_label: query,
      confidence: Math.round((0.5 + (hash % 500) / 1000) * 1000) / 1000,
      mask: encodeRle(bits, width, height),
    },
  ];
}
