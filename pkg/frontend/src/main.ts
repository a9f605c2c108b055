/** Page wiring: create or resume a session, run the answer loop, and keep the
 * insight panel in sync with the service. */

import { ApiClient, Winner } from "./api";
import { SessionStore } from "./state";
import {
  renderAxisPicker,
  renderFitControls,
  renderGrids,
  renderPair,
  renderPairPlot,
  wireKeyboard,
} from "./ui";

const API_BASE = import.meta.env.VITE_API_BASE ?? "";

async function getStore(api: ApiClient): Promise<SessionStore> {
  const saved = window.location.hash.slice(1) || localStorage.getItem("pairbelief-sid");
  if (saved) {
    try {
      const store = await SessionStore.resume(api, saved);
      localStorage.setItem("pairbelief-sid", saved);
      return store;
    } catch {
      /* stale id: fall through and create a fresh session */
    }
  }
  const created = await api.createSession({
    lower: [-6, -6],
    upper: [6, 6],
    labels: ["x1", "x2"],
    seed: Math.floor(Math.random() * 2 ** 31),
  });
  localStorage.setItem("pairbelief-sid", created.id);
  window.location.hash = created.id;
  return SessionStore.resume(api, created.id);
}

async function main(): Promise<void> {
  const api = new ApiClient(API_BASE);
  const store = await getStore(api);

  const pairBox = document.getElementById("pair")!;
  const plot = document.getElementById("pair-plot") as HTMLCanvasElement;
  const fitBox = document.getElementById("fit")!;
  const axisBox = document.getElementById("axes")!;
  const panels = {
    density: document.getElementById("density") as HTMLCanvasElement,
    tau: document.getElementById("tau") as HTMLCanvasElement,
    caption: document.getElementById("caption")!,
  };
  let axes: [number, number] = [0, 1];

  const onAnswer = (w: Winner): void => {
    void store.answer(w).catch(() => store.refreshPair());
  };

  const redraw = (): void => {
    const s = store.current;
    renderPair(pairBox, s.pair, s.advancing, onAnswer);
    if (s.pair) renderPairPlot(plot, s.pair, s.status, axes[0], axes[1]);
    renderFitControls(fitBox, store, () => {
      void store.startFit().then(pollFit);
    });
  };
  store.subscribe(redraw);

  const refreshInsight = async (): Promise<void> => {
    if (store.current.status.fit_status !== "ready") return;
    const [grid, samples] = await Promise.all([
      api.getGrids(store.current.sid, axes[0], axes[1]),
      api.getSamples(store.current.sid, 1000),
    ]);
    renderGrids(panels, grid, samples.points);
  };

  const pollFit = async (): Promise<void> => {
    for (;;) {
      const st = await store.refreshStatus();
      if (st.fit_status !== "fitting") break;
      await new Promise((r) => setTimeout(r, 2000));
    }
    await refreshInsight();
  };

  renderAxisPicker(axisBox, store.current.status.dim, store.current.status.labels,
    axes, (a, b) => {
      axes = [a, b];
      redraw();
      void refreshInsight();
    });
  wireKeyboard(window, onAnswer);
  redraw();
  if (store.current.status.fit_status === "fitting") void pollFit();
  else void refreshInsight();
}

void main();
