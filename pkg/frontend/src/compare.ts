/**
 * Side-by-side strategy comparison: the trace charts of two sessions on a
 * shared capture-count axis, so a guided and a freestyle run of the same
 * rig can be read against each other.
 */

import { ServiceError, SessionApi } from "./api";
import { renderLineChart } from "./chart";
import { definedPoints, telemetryFromSnapshot } from "./telemetry";
import type { SessionSnapshot } from "./types";

/** Outcome of loading one side of the comparison. */
export type CompareSide =
  | { ok: true; snapshot: SessionSnapshot }
  | { ok: false; id: string; code: string; message: string };

/** Fetch both sessions, tolerating a missing one. */
export async function loadCompareSides(
  api: SessionApi,
  idA: string,
  idB: string,
): Promise<[CompareSide, CompareSide]> {
  const load = async (id: string): Promise<CompareSide> => {
    try {
      return { ok: true, snapshot: await api.getState(id) };
    } catch (err) {
      if (err instanceof ServiceError) {
        return { ok: false, id, code: err.code, message: err.message };
      }
      throw err;
    }
  };
  return [await load(idA), await load(idB)];
}

/**
 * Render the two sides into `host`: one labelled panel per session, both
 * trace charts sharing the x-axis upper bound (the larger capture count),
 * a clear inline error for a session that could not be loaded.
 */
export function renderCompareView(
  host: HTMLElement,
  sides: [CompareSide, CompareSide],
  chartWidth = 420,
  chartHeight = 200,
): void {
  const maxCapture = Math.max(
    1,
    ...sides.map((s) => (s.ok ? s.snapshot.n_views : 0)),
  );

  host.replaceChildren();
  for (const side of sides) {
    const panel = document.createElement("section");
    panel.className = "compare-panel";
    const title = document.createElement("h3");
    panel.appendChild(title);

    if (!side.ok) {
      title.textContent = `session ${side.id}`;
      const err = document.createElement("p");
      err.className = "compare-error";
      err.textContent = `${side.code}: ${side.message}`;
      panel.appendChild(err);
      host.appendChild(panel);
      continue;
    }

    const snap = side.snapshot;
    title.textContent = `session ${snap.id} — ${snap.mode} (${snap.n_views} views)`;
    const chartHost = document.createElement("div");
    chartHost.className = "compare-chart";
    panel.appendChild(chartHost);
    const telemetry = telemetryFromSnapshot(snap);
    renderLineChart(
      chartHost,
      [{ label: "trace", points: definedPoints(telemetry.trace), color: "#2a7ae2" }],
      { width: chartWidth, height: chartHeight, maxCapture, logY: true, title: "covariance trace" },
    );
    host.appendChild(panel);
  }
}
