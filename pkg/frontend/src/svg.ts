// Minimal SVG document builder: figures are assembled as plain strings.

import { ColorScale, viridis } from "./colormap.js";

export class Svg {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number, background = "white") {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}">`,
      `<rect width="${width}" height="${height}" fill="${background}"/>`,
    );
  }

  add(fragment: string): void {
    this.parts.push(fragment);
  }

  polygon(points: [number, number][], fill: string, cls = ""): void {
    const pts = points.map(([x, y]) => `${round(x)},${round(y)}`).join(" ");
    this.add(`<polygon points="${pts}" fill="${fill}" stroke="${fill}" ` +
      `stroke-width="0.4"${clsAttr(cls)}/>`);
  }

  polyline(points: [number, number][], stroke: string, width: number, cls = "",
           dashed = false): void {
    const pts = points.map(([x, y]) => `${round(x)},${round(y)}`).join(" ");
    const dash = dashed ? ' stroke-dasharray="6,4"' : "";
    this.add(`<polyline points="${pts}" fill="none" stroke="${stroke}" ` +
      `stroke-width="${width}"${dash}${clsAttr(cls)}/>`);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width: number,
       cls = "", dashed = false): void {
    const dash = dashed ? ' stroke-dasharray="6,4"' : "";
    this.add(`<line x1="${round(x1)}" y1="${round(y1)}" x2="${round(x2)}" y2="${round(y2)}" ` +
      `stroke="${stroke}" stroke-width="${width}"${dash}${clsAttr(cls)}/>`);
  }

  circle(x: number, y: number, r: number, fill: string, cls = ""): void {
    this.add(`<circle cx="${round(x)}" cy="${round(y)}" r="${r}" fill="${fill}"${clsAttr(cls)}/>`);
  }

  text(x: number, y: number, content: string, size = 12, anchor = "start"): void {
    this.add(`<text x="${round(x)}" y="${round(y)}" font-size="${size}" ` +
      `font-family="sans-serif" text-anchor="${anchor}">${escapeXml(content)}</text>`);
  }

  colorbar(x: number, y: number, w: number, h: number, scale: ColorScale,
           ticks = 5): void {
    const n = 32;
    this.add(`<g class="colorbar">`);
    for (let i = 0; i < n; i++) {
      const t = 1 - i / (n - 1);
      this.add(`<rect x="${round(x)}" y="${round(y + (i * h) / n)}" width="${w}" ` +
        `height="${round(h / n + 1)}" fill="${viridis(t)}"/>`);
    }
    this.add(`<rect x="${round(x)}" y="${round(y)}" width="${w}" height="${h}" ` +
      `fill="none" stroke="black" stroke-width="0.7"/>`);
    for (let k = 0; k < ticks; k++) {
      const frac = k / (ticks - 1);
      const value = scale.hi - frac * (scale.hi - scale.lo);
      const yy = y + frac * h;
      this.text(x + w + 4, yy + 4, formatTick(value), 10);
    }
    this.add(`</g>`);
  }

  toString(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export interface Frame {
  toX(x: number): number;
  toY(y: number): number;
  map(p: [number, number]): [number, number];
}

export function makeFrame(xLo: number, xHi: number, yLo: number, yHi: number,
                          px: number, py: number, pw: number, ph: number): Frame {
  const sx = pw / (xHi - xLo);
  const sy = ph / (yHi - yLo);
  const toX = (x: number) => px + (x - xLo) * sx;
  const toY = (y: number) => py + ph - (y - yLo) * sy;  // SVG y grows downward
  return { toX, toY, map: (p) => [toX(p[0]), toY(p[1])] };
}

function clsAttr(cls: string): string {
  return cls ? ` class="${cls}"` : "";
}

function round(v: number): string {
  return (Math.round(v * 100) / 100).toString();
}

export function formatTick(v: number): string {
  if (v === 0) return "0";
  const mag = Math.abs(v);
  if (mag >= 0.01 && mag < 1000) return v.toPrecision(3);
  return v.toExponential(1);
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
