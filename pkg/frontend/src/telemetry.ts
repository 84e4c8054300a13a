/**
 * Telemetry: the per-capture quality series a session has accumulated.
 *
 * The model is a pure projection of the served snapshot — the series are
 * the service's numbers verbatim (same array lengths, same values, nulls
 * preserved), so nothing the chart shows can drift from the server's
 * account of the session.
 */

import type { SessionSnapshot } from "./types";

/** Chart-ready view of a session's quality history. */
export interface TelemetryModel {
  /** Covariance trace after each capture; null before it is observable. */
  trace: (number | null)[];
  /** RMS reprojection residual (px) after each capture. */
  rms: (number | null)[];
  /** Mean triangulation error (mm) after each capture. */
  triang: (number | null)[];
  /** Number of captures so far; every series has exactly this length. */
  captureCount: number;
  mode: "guided" | "freestyle";
}

/**
 * Project the served snapshot into the telemetry model.
 *
 * Throws when the snapshot violates the one-entry-per-capture contract —
 * that would mean the chart is about to lie about the session.
 */
export function telemetryFromSnapshot(snap: SessionSnapshot): TelemetryModel {
  const n = snap.n_views;
  for (const [name, series] of [
    ["trace_history", snap.trace_history],
    ["rms_history", snap.rms_history],
    ["triang_history", snap.triang_history],
  ] as const) {
    if (series.length !== n) {
      throw new Error(`${name} has ${series.length} entries for ${n} captures`);
    }
  }
  return {
    trace: snap.trace_history.slice(),
    rms: snap.rms_history.slice(),
    triang: snap.triang_history.slice(),
    captureCount: n,
    mode: snap.mode,
  };
}

/** Points of one polyline in chart space: capture index (1-based) and value. */
export interface SeriesPoint {
  capture: number;
  value: number;
}

/**
 * Drop the undefined (null) prefix/gaps of a series for drawing, keeping
 * each surviving point tagged with its 1-based capture number so the x-axis
 * still means "images captured".
 */
export function definedPoints(series: (number | null)[]): SeriesPoint[] {
  const pts: SeriesPoint[] = [];
  series.forEach((v, i) => {
    if (v !== null && Number.isFinite(v)) {
      pts.push({ capture: i + 1, value: v });
    }
  });
  return pts;
}
