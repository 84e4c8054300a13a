/**
 * Wire types for the guidance service.
 *
 * Every interface here mirrors a JSON document served by the calibration
 * guidance API verbatim — the client never re-derives or transforms the
 * numbers inside them (plotting/scaling happens at render time only, on
 * copies).  Field names match the wire exactly.
 */

/** Axis-angle rotation plus translation, both 3-vectors (mm for tvec). */
export interface PoseDict {
  rvec: [number, number, number];
  tvec: [number, number, number];
}

/** Pinhole intrinsics with two radial and two tangential coefficients. */
export interface CameraModelDict {
  fu: number;
  fv: number;
  u0: number;
  v0: number;
  k1: number;
  k2: number;
  p1: number;
  p2: number;
  width: number;
  height: number;
}

/** Planar calibration target: rows x cols corners, spacing in mm. */
export interface BoardDict {
  rows: number;
  cols: number;
  spacing_mm: number;
}

/** Two intrinsic models plus the left-to-right transform. */
export interface RigDict {
  left: CameraModelDict;
  right: CameraModelDict;
  relative: PoseDict;
}

/** Planner knobs; forwarded untouched when creating a session. */
export interface SearchConfigDict {
  max_iterations: number;
  rel_tol: number;
  rotation_range: number;
  depth_range: [number, number];
  margin_px: number;
  seed: number;
  mode: string;
  grid_points: number;
  grid_rotation: [number, number, number];
  translation_box?: [[number, number, number], [number, number, number]];
}

/** One captured view inside a session snapshot. */
export interface ViewDict {
  left_pixels: [number, number][];
  right_pixels: [number, number][];
  /** Estimated board-to-left-camera pose; null until two views exist. */
  left_abs: PoseDict | null;
}

/** A planner suggestion: the placement plus its predicted covariance trace. */
export interface SuggestedDict {
  pose: PoseDict;
  trace: number;
  visible: boolean;
}

/**
 * Full session snapshot from `GET /sessions/{id}` — the single source of
 * truth the whole UI is projected from.
 */
export interface SessionSnapshot {
  id: string;
  mode: "guided" | "freestyle";
  seed: number;
  sigma_px: number;
  kernel: string;
  search: SearchConfigDict;
  rig: RigDict;
  board: BoardDict;
  n_views: number;
  views: ViewDict[];
  relative_estimate: PoseDict | null;
  /** One entry per capture; null while the quantity is undefined (< 2 views). */
  trace_history: (number | null)[];
  rms_history: (number | null)[];
  triang_history: (number | null)[];
  suggested: SuggestedDict | null;
  /** Predicted left-image corner pixels for the suggestion, board order. */
  suggested_overlay: [number, number][] | null;
  /** Event-log cursor for the push channel. */
  next_seq: number;
}

/** Response of `POST /sessions`. */
export interface CreateResponse {
  id: string;
  state: SessionSnapshot;
}

/** Per-capture summary returned by `POST /sessions/{id}/captures`. */
export interface CaptureSummary {
  seq: number;
  n_views: number;
  relative: PoseDict | null;
  trace: number | null;
  rms_reproj: number | null;
  triang_mean: number | null;
}

/** Response of `POST /sessions/{id}/suggest`. */
export interface SuggestResponse {
  seq: number;
  pose: PoseDict;
  trace: number;
  visible: boolean;
  overlay: [number, number][];
}

/** One entry of the append-only session event log. */
export interface SessionEvent {
  seq: number;
  type: "created" | "capture" | "suggest";
  [key: string]: unknown;
}

/** Response of `GET /sessions/{id}/events`. */
export interface EventsResponse {
  events: SessionEvent[];
  next: number;
}

/** Stable error shape served for every failed request. */
export interface ApiErrorBody {
  code: string;
  message: string;
}
