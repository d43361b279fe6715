/**
 * Minimal SVG assembly: enough for axes, filled bands, lines and labels.
 * Vector output keeps the artifacts diffable and CI-friendly.
 */

export interface Frame {
  width: number;
  height: number;
  left: number;
  right: number;
  top: number;
  bottom: number;
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export const PALETTE = ["#4361ee", "#e07a1f", "#2d6a4f", "#b5179e",
  "#5f6caf", "#c9184a", "#41817e", "#7f5539"];

export function xPix(f: Frame, x: number): number {
  const span = f.xMax - f.xMin || 1;
  return f.left + ((x - f.xMin) / span) * (f.width - f.left - f.right);
}

export function yPix(f: Frame, y: number): number {
  const span = f.yMax - f.yMin || 1;
  return f.height - f.bottom - ((y - f.yMin) / span) * (f.height - f.top - f.bottom);
}

export function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export class Svg {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}" ` +
      `font-family="sans-serif" font-size="11">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       width = 1, dash?: string): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${r(x1)}" y1="${r(y1)}" x2="${r(x2)}" y2="${r(y2)}" ` +
      `stroke="${stroke}" stroke-width="${width}"${d}/>`);
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1.5): void {
    const pts = points.map(([x, y]) => `${r(x)},${r(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" ` +
      `stroke-width="${width}"/>`);
  }

  polygon(points: Array<[number, number]>, fill: string, opacity = 0.85): void {
    const pts = points.map(([x, y]) => `${r(x)},${r(y)}`).join(" ");
    this.parts.push(`<polygon points="${pts}" fill="${fill}" fill-opacity="${opacity}"/>`);
  }

  circle(x: number, y: number, radius: number, fill: string): void {
    this.parts.push(`<circle cx="${r(x)}" cy="${r(y)}" r="${radius}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, opts: {
    anchor?: string; fill?: string; size?: number; rotate?: boolean;
  } = {}): void {
    const anchor = opts.anchor ?? "start";
    const fill = opts.fill ?? "#222";
    const size = opts.size ?? 11;
    const transform = opts.rotate
      ? ` transform="rotate(-90 ${r(x)} ${r(y)})"` : "";
    this.parts.push(
      `<text x="${r(x)}" y="${r(y)}" text-anchor="${anchor}" ` +
      `fill="${fill}" font-size="${size}"${transform}>${esc(content)}</text>`);
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

function r(v: number): string {
  return (Math.round(v * 100) / 100).toString();
}

export function drawAxes(svg: Svg, f: Frame, xLabel: string, yLabel: string,
                         xTicks: Array<[number, string]>,
                         yTicks: Array<[number, string]>): void {
  svg.line(f.left, f.height - f.bottom, f.width - f.right, f.height - f.bottom, "#222");
  svg.line(f.left, f.top, f.left, f.height - f.bottom, "#222");
  for (const [x, label] of xTicks) {
    const px = xPix(f, x);
    svg.line(px, f.height - f.bottom, px, f.height - f.bottom + 4, "#222");
    svg.text(px, f.height - f.bottom + 16, label, { anchor: "middle" });
  }
  for (const [y, label] of yTicks) {
    const py = yPix(f, y);
    svg.line(f.left - 4, py, f.left, py, "#222");
    svg.line(f.left, py, f.width - f.right, py, "#eee");
    svg.text(f.left - 7, py + 4, label, { anchor: "end" });
  }
  svg.text((f.left + f.width - f.right) / 2, f.height - 6, xLabel,
           { anchor: "middle" });
  svg.text(14, (f.top + f.height - f.bottom) / 2, yLabel,
           { anchor: "middle", rotate: true });
}
