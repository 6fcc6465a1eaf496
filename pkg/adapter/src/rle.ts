/** Run-length mask codec shared with the engine's wire protocol:
 * row-major counts, first entry is the leading-zero run (possibly 0),
 * alternating zero/one runs afterwards. */

export interface RleMask {
  width: number;
  height: number;
  rle: number[];
}

export function encodeRle(bits: boolean[], width: number, height: number): RleMask {
  if (bits.length !== width * height) {
    throw new Error(`bit buffer length ${bits.length} != ${width}x${height}`);
  }
  const counts: number[] = [];
  let current = false; // runs start with zeros
  let run = 0;
  for (const bit of bits) {
    if (bit === current) {
      run += 1;
    } else {
      counts.push(run);
      current = bit;
      run = 1;
    }
  }
  counts.push(run);
  return { width, height, rle: counts };
}

export function rleSum(mask: RleMask): number {
  return mask.rle.reduce((total, count) => total + count, 0);
}

export function isValidRleMask(value: unknown): value is RleMask {
  if (typeof value !== 'object' || value === null) return false;
  const mask = value as Record<string, unknown>;
  if (!Number.isInteger(mask.width) || (mask.width as number) < 1) return false;
  if (!Number.isInteger(mask.height) || (mask.height as number) < 1) return false;
  if (!Array.isArray(mask.rle) || mask.rle.length === 0) return false;
  if (!mask.rle.every((c) => Number.isInteger(c) && (c as number) >= 0)) return false;
  return rleSum(mask as unknown as RleMask) ===
    (mask.width as number) * (mask.height as number);
}
