/**
 * Page entry: builds the session form, wires the screen, and switches to
 * the comparison view when the URL carries `?compare=idA,idB`.
 */

import { SessionApi } from "./api";
import { GuidanceApp } from "./app";
import type { AppElements } from "./app";
import { loadCompareSides, renderCompareView } from "./compare";
import type { BoardDict, RigDict } from "./types";

/** The simulated benchtop rig offered by the session form. */
const DEFAULT_RIG: RigDict = {
  left: { fu: 800, fv: 800, u0: 320, v0: 240, k1: 0.01, k2: 0.1, p1: 0, p2: 0, width: 640, height: 480 },
  right: { fu: 800, fv: 800, u0: 320, v0: 240, k1: 0.01, k2: 0.1, p1: 0, p2: 0, width: 640, height: 480 },
  relative: { rvec: [-0.003, -0.303, -0.017], tvec: [440.3, -6.2, 25.1] },
};

/** 9x6 corners at a printable 30 mm pitch — small boards starve the covariance readout. */
const DEFAULT_BOARD: BoardDict = { rows: 9, cols: 6, spacing_mm: 30 };

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function startSessionScreen(api: SessionApi): Promise<void> {
  const els: AppElements = {
    frame: byId("frame"),
    controls: byId("controls"),
    traceChart: byId("trace-chart"),
    rmsChart: byId("rms-chart"),
    triangChart: byId("triang-chart"),
    status: byId("status"),
    toast: byId("toast"),
    placementWarning: byId("placement-warning"),
  };
  const app = new GuidanceApp(api, els);

  byId<HTMLButtonElement>("create").addEventListener("click", () => {
    const mode = byId<HTMLSelectElement>("mode").value as "guided" | "freestyle";
    const seed = Number(byId<HTMLInputElement>("seed").value) || 0;
    const sigma = Number(byId<HTMLInputElement>("sigma").value) || 0.5;
    void app
      .create({ rig: DEFAULT_RIG, board: DEFAULT_BOARD, mode, seed, sigma_px: sigma })
      .then((id) => {
        byId<HTMLInputElement>("session-id").value = id;
      });
  });
  byId<HTMLButtonElement>("attach").addEventListener("click", () => {
    void app.attach(byId<HTMLInputElement>("session-id").value.trim());
  });
  byId<HTMLButtonElement>("capture").addEventListener("click", () => {
    void app.captureFromControls();
  });
  byId<HTMLButtonElement>("suggest").addEventListener("click", () => {
    void app.suggest();
  });
  byId<HTMLButtonElement>("accept").addEventListener("click", () => {
    void app.acceptSuggestion();
  });
  window.addEventListener("beforeunload", () => app.dispose());
}

async function startCompareScreen(api: SessionApi, idA: string, idB: string): Promise<void> {
  document.body.innerHTML = '<h2>strategy comparison</h2><div id="compare-root"></div>';
  const sides = await loadCompareSides(api, idA, idB);
  renderCompareView(byId("compare-root"), sides);
}

const api = new SessionApi("");
const compare = new URLSearchParams(window.location.search).get("compare");
if (compare !== null && compare.includes(",")) {
  const [idA, idB] = compare.split(",", 2);
  void startCompareScreen(api, idA, idB);
} else {
  void startSessionScreen(api);
}
