/**
 * Heatmap rendering helpers. Grids arrive as `values[i][j]` with `i` indexing
 * the first axis (xs) and `j` the second (ys); pixels map one-to-one onto
 * grid cells with xs left-to-right and ys bottom-to-top.
 */

export interface Heatmap {
  xs: number[];
  ys: number[];
  values: number[][];
}

/** Viridis anchor points (t, r, g, b); linearly interpolated. */
const VIRIDIS: [number, number, number, number][] = [
  [0.0, 68, 1, 84],
  [0.125, 72, 40, 120],
  [0.25, 62, 73, 137],
  [0.375, 49, 104, 142],
  [0.5, 38, 130, 142],
  [0.625, 31, 158, 137],
  [0.75, 53, 183, 121],
  [0.875, 110, 206, 88],
  [1.0, 253, 231, 37],
];

export function viridis(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  for (let k = 1; k < VIRIDIS.length; k++) {
    const [t1, r1, g1, b1] = VIRIDIS[k - 1];
    const [t2, r2, g2, b2] = VIRIDIS[k];
    if (x <= t2) {
      const w = (x - t1) / (t2 - t1);
      return [
        Math.round(r1 + w * (r2 - r1)),
        Math.round(g1 + w * (g2 - g1)),
        Math.round(b1 + w * (b2 - b1)),
      ];
    }
  }
  return [253, 231, 37];
}

/** Min/max over a rectangular grid, ignoring non-finite cells. */
export function gridRange(values: number[][]): { lo: number; hi: number } {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of values) {
    for (const v of row) {
      if (!Number.isFinite(v)) continue;
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(lo < hi)) {
    hi = lo + 1;
  }
  return { lo, hi };
}

/**
 * RGBA pixel buffer (canvas ImageData layout) for a grid. Row 0 of the image
 * is the largest y, so the plot reads like standard axes.
 */
export function gridToPixels(map: Heatmap): Uint8ClampedArray {
  const nx = map.xs.length;
  const ny = map.ys.length;
  const { lo, hi } = gridRange(map.values);
  const out = new Uint8ClampedArray(nx * ny * 4);
  for (let row = 0; row < ny; row++) {
    const j = ny - 1 - row;
    for (let col = 0; col < nx; col++) {
      const v = map.values[col][j];
      const t = Number.isFinite(v) ? (v - lo) / (hi - lo) : 0;
      const [r, g, b] = viridis(t);
      const off = (row * nx + col) * 4;
      out[off] = r;
      out[off + 1] = g;
      out[off + 2] = b;
      out[off + 3] = 255;
    }
  }
  return out;
}

/** Coordinates of the cell holding the grid's maximum value. */
export function argmaxCell(map: Heatmap): { x: number; y: number; value: number } {
  let best = -Infinity;
  let bi = 0;
  let bj = 0;
  for (let i = 0; i < map.xs.length; i++) {
    for (let j = 0; j < map.ys.length; j++) {
      const v = map.values[i][j];
      if (Number.isFinite(v) && v > best) {
        best = v;
        bi = i;
        bj = j;
      }
    }
  }
  return { x: map.xs[bi], y: map.ys[bj], value: best };
}

/** Swapping the axis pair transposes the grid. */
export function transpose(map: Heatmap): Heatmap {
  const values = map.ys.map((_, j) => map.xs.map((_, i) => map.values[i][j]));
  return { xs: map.ys, ys: map.xs, values };
}

/** Data coordinates -> pixel position inside an nx-by-ny heatmap image. */
export function dataToPixel(
  map: Heatmap,
  x: number,
  y: number,
): { col: number; row: number } {
  const nx = map.xs.length;
  const ny = map.ys.length;
  const x0 = map.xs[0];
  const x1 = map.xs[nx - 1];
  const y0 = map.ys[0];
  const y1 = map.ys[ny - 1];
  const col = ((x - x0) / (x1 - x0)) * (nx - 1);
  const row = ny - 1 - ((y - y0) / (y1 - y0)) * (ny - 1);
  return { col, row };
}
