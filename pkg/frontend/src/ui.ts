/** DOM rendering for the elicitation page. Every number shown comes straight
 * from an API payload held in the store or the fetched grids. */

import { GridView, PairView, StatusView, Winner } from "./api";
import { argmaxCell, dataToPixel, gridToPixels, Heatmap } from "./heatmap";
import { SessionStore } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(v: number): string {
  return Math.abs(v) >= 1000 || (v !== 0 && Math.abs(v) < 0.001)
    ? v.toExponential(3)
    : v.toPrecision(4);
}

/** One configuration as a labeled value card. */
export function renderCard(
  title: string,
  point: number[],
  labels: string[],
  units: string[],
  onPick: () => void,
): HTMLElement {
  const card = el("div", "card");
  card.appendChild(el("h3", undefined, title));
  const table = el("table");
  point.forEach((v, i) => {
    const row = el("tr");
    row.appendChild(el("td", "param", labels[i] ?? `x${i + 1}`));
    row.appendChild(el("td", "value", fmt(v) + (units[i] ? ` ${units[i]}` : "")));
    table.appendChild(row);
  });
  card.appendChild(table);
  const btn = el("button", "pick", `${title} works better`);
  btn.addEventListener("click", onPick);
  card.appendChild(btn);
  return card;
}

export function renderPair(
  container: HTMLElement,
  pair: PairView | null,
  advancing: boolean,
  onAnswer: (w: Winner) => void,
): void {
  container.textContent = "";
  if (!pair || advancing) {
    container.appendChild(el("p", "waiting", "loading next pair..."));
    return;
  }
  container.appendChild(
    renderCard("A", pair.first, pair.labels, pair.units, () => onAnswer("first")),
  );
  container.appendChild(
    renderCard("B", pair.second, pair.labels, pair.units, () => onAnswer("second")),
  );
}

/** The two candidates as highlighted points on the selected 2D projection. */
export function renderPairPlot(
  canvas: HTMLCanvasElement,
  pair: PairView,
  status: StatusView,
  ax1: number,
  ax2: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const toPx = (p: number[]): [number, number] => {
    const fx = (p[ax1] - status.lower[ax1]) / (status.upper[ax1] - status.lower[ax1]);
    const fy = (p[ax2] - status.lower[ax2]) / (status.upper[ax2] - status.lower[ax2]);
    return [fx * canvas.width, (1 - fy) * canvas.height];
  };
  ctx.strokeStyle = "#888";
  ctx.strokeRect(0.5, 0.5, canvas.width - 1, canvas.height - 1);
  for (const [pt, color, label] of [
    [pair.first, "#d95f02", "A"],
    [pair.second, "#7570b3", "B"],
  ] as const) {
    const [x, y] = toPx(pt);
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(x, y, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(label, x + 8, y - 8);
  }
}

export function renderFitControls(
  container: HTMLElement,
  store: SessionStore,
  onFit: () => void,
): void {
  container.textContent = "";
  const st = store.current.status;
  const count = el("span", "answer-count", `${st.answers} answers`);
  const btn = el("button", "fit", st.fit_status === "fitting" ? "fitting..." : "fit now");
  btn.disabled = !store.canFit;
  const hint = store.fitHint;
  if (hint) {
    btn.title = hint;
    container.appendChild(count);
    container.appendChild(btn);
    container.appendChild(el("span", "fit-hint", hint));
  } else {
    btn.addEventListener("click", onFit);
    container.appendChild(count);
    container.appendChild(btn);
  }
  if (st.fit_status === "failed" && st.fit_error) {
    container.appendChild(el("span", "fit-error", `fit failed: ${st.fit_error}`));
  }
}

export interface HeatmapPanels {
  density: HTMLCanvasElement;
  tau: HTMLCanvasElement;
  caption: HTMLElement;
}

/** Draw both 64x64 heatmaps plus the sample scatter overlay. */
export function renderGrids(
  panels: HeatmapPanels,
  grid: GridView,
  samples: number[][],
): { densityArgmax: { x: number; y: number } } {
  const density: Heatmap = { xs: grid.xs, ys: grid.ys, values: grid.log_density };
  const tau: Heatmap = { xs: grid.xs, ys: grid.ys, values: grid.tau };
  for (const [canvas, map] of [
    [panels.density, density],
    [panels.tau, tau],
  ] as const) {
    const nx = map.xs.length;
    const ny = map.ys.length;
    canvas.width = nx;
    canvas.height = ny;
    const ctx = canvas.getContext("2d");
    if (ctx) {
      const img = ctx.createImageData(nx, ny);
      img.data.set(gridToPixels(map));
      ctx.putImageData(img, 0, 0);
      if (canvas === panels.density) {
        ctx.fillStyle = "rgba(255,255,255,0.8)";
        for (const p of samples) {
          const { col, row } = dataToPixel(map, p[grid.ax1], p[grid.ax2]);
          ctx.fillRect(col, row, 1, 1);
        }
      }
    }
  }
  const peak = argmaxCell(density);
  panels.caption.textContent =
    `axes ${grid.labels[0]} x ${grid.labels[1]}; ` +
    `density peak near (${fmt(peak.x)}, ${fmt(peak.y)})`;
  return { densityArgmax: { x: peak.x, y: peak.y } };
}

/** Arrow keys mirror the A/B buttons. */
export function wireKeyboard(target: EventTarget, onAnswer: (w: Winner) => void): void {
  target.addEventListener("keydown", (ev) => {
    const key = (ev as KeyboardEvent).key;
    if (key === "ArrowLeft") onAnswer("first");
    else if (key === "ArrowRight") onAnswer("second");
  });
}

/** Axis-pair selectors for d-dimensional sessions. */
export function renderAxisPicker(
  container: HTMLElement,
  dim: number,
  labels: string[],
  current: [number, number],
  onChange: (ax1: number, ax2: number) => void,
): void {
  container.textContent = "";
  if (dim < 2) return;
  const selects: HTMLSelectElement[] = [];
  for (const which of [0, 1] as const) {
    const sel = el("select", `axis-${which}`);
    for (let i = 0; i < dim; i++) {
      const opt = el("option", undefined, labels[i] ?? `x${i + 1}`);
      opt.value = String(i);
      if (i === current[which]) opt.selected = true;
      sel.appendChild(opt);
    }
    selects.push(sel);
    container.appendChild(sel);
  }
  for (const sel of selects) {
    sel.addEventListener("change", () => {
      const a = Number(selects[0].value);
      const b = Number(selects[1].value);
      if (a !== b) onChange(a, b);
    });
  }
}
