/**
 * Board placement controls: six sliders (three rotation, three translation)
 * plus drag-to-translate on the virtual frame.
 *
 * The preview projection here is an interaction aid only — it lets the
 * operator see roughly where the board would land and flags placements
 * that would leave the frame *before* the capture round-trip.  The service
 * remains the authority: it re-checks visibility and answers NOT_VISIBLE
 * when the operator captures anyway.
 */

import type { BoardDict, CameraModelDict, PoseDict } from "./types";

/** Inclusive slider ranges for the six pose components. */
export interface ControlRanges {
  /** Rotation bound (radians) applied symmetrically to each axis. */
  rotation: number;
  /** Translation bounds in mm: x/y symmetric, z as [near, far]. */
  xy: number;
  z: [number, number];
}

export const DEFAULT_RANGES: ControlRanges = {
  rotation: 0.6,
  xy: 400,
  z: [200, 1500],
};

/** Axis-angle rotation matrix (row-major 3x3). */
function rotationMatrix(rvec: [number, number, number]): number[][] {
  const [a, b, c] = rvec;
  const theta = Math.hypot(a, b, c);
  if (theta < 1e-12) {
    return [
      [1, 0, 0],
      [0, 1, 0],
      [0, 0, 1],
    ];
  }
  const [kx, ky, kz] = [a / theta, b / theta, c / theta];
  const ct = Math.cos(theta);
  const st = Math.sin(theta);
  const vt = 1 - ct;
  return [
    [ct + kx * kx * vt, kx * ky * vt - kz * st, kx * kz * vt + ky * st],
    [ky * kx * vt + kz * st, ct + ky * ky * vt, ky * kz * vt - kx * st],
    [kz * kx * vt - ky * st, kz * ky * vt + kx * st, ct + kz * kz * vt],
  ];
}

/** Board corner grid in the board frame (Z = 0), row-major like the service. */
export function boardGrid(board: BoardDict): [number, number, number][] {
  const pts: [number, number, number][] = [];
  for (let r = 0; r < board.rows; r++) {
    for (let c = 0; c < board.cols; c++) {
      pts.push([c * board.spacing_mm, r * board.spacing_mm, 0]);
    }
  }
  return pts;
}

/**
 * Forward-project board corners through the camera for the preview,
 * distortion included.  Returns null when any corner sits at or behind
 * the camera (no meaningful preview).
 */
export function previewProjection(
  model: CameraModelDict,
  pose: PoseDict,
  board: BoardDict,
): [number, number][] | null {
  const R = rotationMatrix(pose.rvec);
  const t = pose.tvec;
  const out: [number, number][] = [];
  for (const p of boardGrid(board)) {
    const X = R[0][0] * p[0] + R[0][1] * p[1] + R[0][2] * p[2] + t[0];
    const Y = R[1][0] * p[0] + R[1][1] * p[1] + R[1][2] * p[2] + t[1];
    const Z = R[2][0] * p[0] + R[2][1] * p[1] + R[2][2] * p[2] + t[2];
    if (Z <= 0) {
      return null;
    }
    const x = X / Z;
    const y = Y / Z;
    const r2 = x * x + y * y;
    const radial = 1 + model.k1 * r2 + model.k2 * r2 * r2;
    const xd = x * radial + 2 * model.p1 * x * y + model.p2 * (r2 + 2 * x * x);
    const yd = y * radial + model.p1 * (r2 + 2 * y * y) + 2 * model.p2 * x * y;
    out.push([model.fu * xd + model.u0, model.fv * yd + model.v0]);
  }
  return out;
}

/** True when every preview corner lies inside the frame. */
export function previewInFrame(corners: [number, number][] | null, model: CameraModelDict): boolean {
  if (corners === null) {
    return false;
  }
  return corners.every(
    ([u, v]) => u >= 0 && u <= model.width - 1 && v >= 0 && v <= model.height - 1,
  );
}

/** Current values of the six pose sliders as a pose. */
export interface PoseControls {
  readonly root: HTMLElement;
  /** Read the pose the controls currently describe. */
  pose(): PoseDict;
  /** Move the controls to a pose (e.g. adopt a suggestion as a start point). */
  setPose(pose: PoseDict): void;
  /** Register a listener fired after any slider or drag movement. */
  onChange(listener: () => void): void;
}

const AXES: { key: string; label: string; index: number; kind: "r" | "t" }[] = [
  { key: "rx", label: "rot x", index: 0, kind: "r" },
  { key: "ry", label: "rot y", index: 1, kind: "r" },
  { key: "rz", label: "rot z", index: 2, kind: "r" },
  { key: "tx", label: "x mm", index: 0, kind: "t" },
  { key: "ty", label: "y mm", index: 1, kind: "t" },
  { key: "tz", label: "z mm", index: 2, kind: "t" },
];

/**
 * Build the slider block and wire drag-to-translate on `dragSurface`.
 *
 * Dragging moves the board parallel to the image plane at its current
 * depth: the pointer delta in pixels maps to millimetres through the
 * pinhole inverse (du * z / fu, dv * z / fv) — the documented
 * "inverse projection at current depth".
 */
export function createPoseControls(
  container: HTMLElement,
  dragSurface: Element,
  camera: CameraModelDict,
  initial: PoseDict,
  ranges: ControlRanges = DEFAULT_RANGES,
): PoseControls {
  const rvec = [...initial.rvec] as [number, number, number];
  const tvec = [...initial.tvec] as [number, number, number];
  const listeners: (() => void)[] = [];
  const inputs = new Map<string, HTMLInputElement>();

  const root = document.createElement("div");
  root.className = "pose-controls";

  for (const axis of AXES) {
    const row = document.createElement("label");
    row.className = "pose-control-row";
    const caption = document.createElement("span");
    caption.textContent = axis.label;
    const input = document.createElement("input");
    input.type = "range";
    input.name = axis.key;
    if (axis.kind === "r") {
      input.min = String(-ranges.rotation);
      input.max = String(ranges.rotation);
      input.step = "0.005";
      input.value = String(rvec[axis.index]);
    } else if (axis.key === "tz") {
      input.min = String(ranges.z[0]);
      input.max = String(ranges.z[1]);
      input.step = "1";
      input.value = String(tvec[2]);
    } else {
      input.min = String(-ranges.xy);
      input.max = String(ranges.xy);
      input.step = "1";
      input.value = String(tvec[axis.index]);
    }
    input.addEventListener("input", () => {
      const v = Number(input.value);
      if (axis.kind === "r") {
        rvec[axis.index] = v;
      } else {
        tvec[axis.index] = v;
      }
      emit();
    });
    inputs.set(axis.key, input);
    row.append(caption, input);
    root.appendChild(row);
  }
  container.appendChild(root);

  // drag-to-translate: pointer deltas on the frame move the board in-plane
  let dragging: { x: number; y: number } | null = null;
  dragSurface.addEventListener("pointerdown", (ev) => {
    const e = ev as PointerEvent;
    dragging = { x: e.clientX, y: e.clientY };
  });
  dragSurface.addEventListener("pointermove", (ev) => {
    if (!dragging) {
      return;
    }
    const e = ev as PointerEvent;
    const du = e.clientX - dragging.x;
    const dv = e.clientY - dragging.y;
    dragging = { x: e.clientX, y: e.clientY };
    const z = tvec[2];
    tvec[0] += (du * z) / camera.fu;
    tvec[1] += (dv * z) / camera.fv;
    syncInputs();
    emit();
  });
  dragSurface.addEventListener("pointerup", () => {
    dragging = null;
  });

  function syncInputs(): void {
    inputs.get("tx")!.value = String(tvec[0]);
    inputs.get("ty")!.value = String(tvec[1]);
    inputs.get("tz")!.value = String(tvec[2]);
    inputs.get("rx")!.value = String(rvec[0]);
    inputs.get("ry")!.value = String(rvec[1]);
    inputs.get("rz")!.value = String(rvec[2]);
  }

  function emit(): void {
    for (const fn of listeners) {
      fn();
    }
  }

  return {
    root,
    pose: () => ({ rvec: [...rvec], tvec: [...tvec] }),
    setPose: (pose: PoseDict) => {
      rvec[0] = pose.rvec[0];
      rvec[1] = pose.rvec[1];
      rvec[2] = pose.rvec[2];
      tvec[0] = pose.tvec[0];
      tvec[1] = pose.tvec[1];
      tvec[2] = pose.tvec[2];
      syncInputs();
      emit();
    },
    onChange: (listener: () => void) => {
      listeners.push(listener);
    },
  };
}
