// Viridis control points (matplotlib anchors), linearly interpolated.

const VIRIDIS: [number, number, number][] = [
  [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
  [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
];

export function viridis(t: number): string {
  const x = Math.max(0, Math.min(1, t)) * (VIRIDIS.length - 1);
  const i = Math.min(Math.floor(x), VIRIDIS.length - 2);
  const f = x - i;
  const [r0, g0, b0] = VIRIDIS[i];
  const [r1, g1, b1] = VIRIDIS[i + 1];
  const r = Math.round(r0 + f * (r1 - r0));
  const g = Math.round(g0 + f * (g1 - g0));
  const b = Math.round(b0 + f * (b1 - b0));
  return `rgb(${r},${g},${b})`;
}

export interface ColorScale {
  lo: number;
  hi: number;
  color(value: number): string;
}

export function makeScale(lo: number, hi: number): ColorScale {
  const span = hi > lo ? hi - lo : 1;
  return { lo, hi, color: (v: number) => viridis((v - lo) / span) };
}
