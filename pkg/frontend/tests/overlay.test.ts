/**
 * Overlay fidelity: the rendered markers must sit on exactly the corner
 * pixels the service suggested — integer canvas coordinates obtained by
 * Math.round of each served component, nothing else.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { markerFromCorner, overlayFromSnapshot, renderOverlay } from "../src/overlay";
import type { SessionSnapshot } from "../src/types";
import { loadFixture } from "./helpers";

const fixture = loadFixture("guidance_loop.json");

/** First served snapshot that carries a suggestion overlay. */
function snapshotWithSuggestion(): SessionSnapshot {
  for (const r of fixture.records) {
    if (r.method !== "GET") {
      continue;
    }
    const snap = r.response as SessionSnapshot;
    if (snap.suggested !== null && snap.suggested_overlay !== null) {
      return snap;
    }
  }
  throw new Error("fixture has no snapshot with a suggestion");
}

/** The initial snapshot (no captures, no suggestion). */
function initialSnapshot(): SessionSnapshot {
  return (fixture.records[0].response as { state: SessionSnapshot }).state;
}

describe("suggestion overlay", () => {
  beforeEach(() => {
    document.body.innerHTML = "<div id='host'></div>";
  });

  it("rounds served corners to integer pixels with Math.round", () => {
    expect(markerFromCorner([10.4, 19.5])).toEqual({ x: 10, y: 20 });
    expect(markerFromCorner([10.5, 19.49])).toEqual({ x: 11, y: 19 });
    expect(markerFromCorner([320.0, 240.0])).toEqual({ x: 320, y: 240 });
  });

  it("renders one marker per suggested corner (54 for the 9x6 board)", () => {
    const snap = snapshotWithSuggestion();
    expect(snap.board.rows * snap.board.cols).toBe(54);
    const model = overlayFromSnapshot(snap);
    expect(model.markers).toHaveLength(54);
    expect(model.visible).toBe(true);

    const host = document.getElementById("host")!;
    const svg = renderOverlay(host, model);
    expect(svg.getAttribute("data-empty")).toBe("false");
    expect(svg.querySelectorAll("circle.suggestion-marker")).toHaveLength(54);
  });

  it("places every marker on exactly the rounded served coordinate", () => {
    const snap = snapshotWithSuggestion();
    const served = snap.suggested_overlay!;
    const host = document.getElementById("host")!;
    renderOverlay(host, overlayFromSnapshot(snap));

    const markers = [...host.querySelectorAll("circle.suggestion-marker")];
    expect(markers).toHaveLength(served.length);
    markers.forEach((marker, i) => {
      expect(marker.getAttribute("cx")).toBe(String(Math.round(served[i][0])));
      expect(marker.getAttribute("cy")).toBe(String(Math.round(served[i][1])));
    });
  });

  it("keeps all suggested corners inside the frame", () => {
    const snap = snapshotWithSuggestion();
    const { width, height } = snap.rig.left;
    for (const { x, y } of overlayFromSnapshot(snap).markers) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(width - 1);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(height - 1);
    }
  });

  it("hides the overlay when no suggestion exists", () => {
    const snap = initialSnapshot();
    expect(snap.suggested).toBeNull();
    const model = overlayFromSnapshot(snap);
    expect(model.markers).toHaveLength(0);
    expect(model.visible).toBeNull();

    const host = document.getElementById("host")!;
    const svg = renderOverlay(host, model);
    expect(svg.getAttribute("data-empty")).toBe("true");
    expect(svg.querySelectorAll("circle")).toHaveLength(0);
  });

  it("clears stale markers after a capture consumes the suggestion", () => {
    // a post-accept snapshot has no suggestion again
    const gets = fixture.records.filter((r) => r.method === "GET");
    const afterAccept = gets[3].response as SessionSnapshot; // first accept's refetch
    expect(afterAccept.suggested).toBeNull();
    const host = document.getElementById("host")!;
    renderOverlay(host, overlayFromSnapshot(snapshotWithSuggestion()));
    renderOverlay(host, overlayFromSnapshot(afterAccept));
    expect(host.querySelectorAll("circle.suggestion-marker")).toHaveLength(0);
  });
});
