/**
 * Suggestion overlay: the served next-pose corner pixels drawn on the
 * virtual camera frame.
 *
 * Marker placement contract: each served corner coordinate is a float
 * pixel position in the left image; the marker lands on exactly
 * `Math.round` of each component (nearest integer pixel, ties toward
 * +Infinity) and nothing else — no scaling, no offsets.  Tests audit the
 * rendered DOM against this rule.
 */

import type { SessionSnapshot } from "./types";

/** Integer pixel position of one overlay marker. */
export interface MarkerPoint {
  x: number;
  y: number;
}

/** Everything the overlay layer needs to draw. */
export interface OverlayModel {
  /** Left-camera frame rectangle (the virtual viewfinder). */
  frame: { width: number; height: number };
  /** One marker per suggested board corner, board-grid order; empty when no suggestion. */
  markers: MarkerPoint[];
  /** Whether the service judged the suggestion visible; null without one. */
  visible: boolean | null;
}

/** Round one served corner to its integer marker pixel. */
export function markerFromCorner(corner: [number, number]): MarkerPoint {
  return { x: Math.round(corner[0]), y: Math.round(corner[1]) };
}

/** Project the snapshot's suggestion (if any) into the overlay model. */
export function overlayFromSnapshot(snap: SessionSnapshot): OverlayModel {
  const frame = { width: snap.rig.left.width, height: snap.rig.left.height };
  if (snap.suggested === null || snap.suggested_overlay === null) {
    return { frame, markers: [], visible: null };
  }
  return {
    frame,
    markers: snap.suggested_overlay.map(markerFromCorner),
    visible: snap.suggested.visible,
  };
}

const SVG_NS = "http://www.w3.org/2000/svg";

/**
 * Draw the model into an SVG layer sized to the camera frame, replacing
 * previous contents.  With no suggestion the layer renders only the frame
 * rectangle and is marked `data-empty="true"`.
 */
export function renderOverlay(host: Element, model: OverlayModel): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(model.frame.width));
  svg.setAttribute("height", String(model.frame.height));
  svg.setAttribute("viewBox", `0 0 ${model.frame.width} ${model.frame.height}`);
  svg.setAttribute("class", "overlay-layer");
  svg.setAttribute("data-empty", model.markers.length === 0 ? "true" : "false");

  const frame = document.createElementNS(SVG_NS, "rect");
  frame.setAttribute("x", "0");
  frame.setAttribute("y", "0");
  frame.setAttribute("width", String(model.frame.width));
  frame.setAttribute("height", String(model.frame.height));
  frame.setAttribute("fill", "none");
  frame.setAttribute("stroke", "currentColor");
  frame.setAttribute("class", "frame-rect");
  svg.appendChild(frame);

  for (const m of model.markers) {
    const marker = document.createElementNS(SVG_NS, "circle");
    marker.setAttribute("cx", String(m.x));
    marker.setAttribute("cy", String(m.y));
    marker.setAttribute("r", "3");
    marker.setAttribute("class", "suggestion-marker");
    svg.appendChild(marker);
  }

  host.replaceChildren(svg);
  return svg;
}
