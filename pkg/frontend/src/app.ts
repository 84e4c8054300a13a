/**
 * The guidance session screen: one live session, its virtual camera frame,
 * placement controls, and telemetry.
 *
 * State discipline: the screen renders exclusively from the last
 * server-confirmed snapshot (`GET /sessions/{id}`); user input lives only
 * inside the controls until the service confirms the capture.  There is no
 * optimistic update path — every command round-trips, refetches, then
 * re-renders.
 */

import { ServiceError, SessionApi, subscribeEvents } from "./api";
import type { CreateSessionRequest } from "./api";
import { createPoseControls, previewInFrame, previewProjection } from "./controls";
import type { PoseControls } from "./controls";
import { overlayFromSnapshot, renderOverlay } from "./overlay";
import { definedPoints, telemetryFromSnapshot } from "./telemetry";
import type { TelemetryModel } from "./telemetry";
import { renderLineChart } from "./chart";
import type { PoseDict, SessionSnapshot } from "./types";

/** DOM slots the screen renders into. */
export interface AppElements {
  /** Host for the virtual-frame SVG overlay. */
  frame: HTMLElement;
  /** Host for the placement sliders. */
  controls: HTMLElement;
  /** Hosts for the three telemetry charts. */
  traceChart: HTMLElement;
  rmsChart: HTMLElement;
  triangChart: HTMLElement;
  /** One-line session status. */
  status: HTMLElement;
  /** Error toast area. */
  toast: HTMLElement;
  /** Out-of-frame warning next to the capture button. */
  placementWarning: HTMLElement;
}

/** Behaviour switches, mainly for tests. */
export interface AppOptions {
  /** Subscribe to the push channel after create/attach (default true). */
  subscribe?: boolean;
  chartWidth?: number;
  chartHeight?: number;
}

/** Drives one calibration session against the guidance service. */
export class GuidanceApp {
  private readonly api: SessionApi;
  private readonly els: AppElements;
  private readonly opts: Required<AppOptions>;
  private snapshotValue: SessionSnapshot | null = null;
  private controls: PoseControls | null = null;
  private sessionId: string | null = null;
  private stopSubscription: (() => void) | null = null;

  constructor(api: SessionApi, els: AppElements, opts: AppOptions = {}) {
    this.api = api;
    this.els = els;
    this.opts = {
      subscribe: opts.subscribe ?? true,
      chartWidth: opts.chartWidth ?? 420,
      chartHeight: opts.chartHeight ?? 180,
    };
  }

  /** The last server-confirmed snapshot (null before create/attach). */
  snapshot(): SessionSnapshot | null {
    return this.snapshotValue;
  }

  /** Telemetry projection of the current snapshot. */
  telemetry(): TelemetryModel | null {
    return this.snapshotValue === null ? null : telemetryFromSnapshot(this.snapshotValue);
  }

  /** Create a fresh session and render its initial (empty) state. */
  async create(req: CreateSessionRequest): Promise<string> {
    const res = await this.api.createSession(req);
    this.sessionId = res.id;
    this.adopt(res.state);
    this.startSubscription();
    return res.id;
  }

  /** Attach to an existing session by id. */
  async attach(id: string): Promise<void> {
    const snap = await this.api.getState(id);
    this.sessionId = id;
    this.adopt(snap);
    this.startSubscription();
  }

  /** Refetch the authoritative state and re-render. */
  async refresh(): Promise<void> {
    if (this.sessionId === null) {
      return;
    }
    this.adopt(await this.api.getState(this.sessionId));
  }

  /** Capture at an explicit pose (freestyle or scripted). */
  async captureAt(pose: PoseDict): Promise<void> {
    await this.command(() => this.api.postCapture(this.requireId(), { pose }));
  }

  /** Capture at whatever the placement controls currently say. */
  async captureFromControls(): Promise<void> {
    if (this.controls === null) {
      throw new Error("no active session");
    }
    await this.captureAt(this.controls.pose());
  }

  /** Ask the planner for the next placement (renders its overlay). */
  async suggest(): Promise<void> {
    await this.command(() => this.api.postSuggest(this.requireId()));
  }

  /**
   * Capture at exactly the served suggestion — the request body carries the
   * suggestion's pose verbatim, so guided capture cannot drift from what
   * the planner asked for.
   */
  async acceptSuggestion(): Promise<void> {
    const snap = this.snapshotValue;
    if (snap === null || snap.suggested === null) {
      throw new Error("no suggestion to accept");
    }
    const pose = snap.suggested.pose;
    await this.command(() => this.api.postCapture(this.requireId(), { pose }));
  }

  /** Stop the push subscription (page teardown). */
  dispose(): void {
    if (this.stopSubscription !== null) {
      this.stopSubscription();
      this.stopSubscription = null;
    }
  }

  // -- internals ----------------------------------------------------------

  private requireId(): string {
    if (this.sessionId === null) {
      throw new Error("no active session");
    }
    return this.sessionId;
  }

  /** Run a mutating command, then re-render from the refetched state. */
  private async command(send: () => Promise<unknown>): Promise<void> {
    try {
      await send();
    } catch (err) {
      if (err instanceof ServiceError) {
        this.showToast(`${err.code}: ${err.message}`);
        return;
      }
      throw err;
    }
    this.clearToast();
    await this.refresh();
  }

  private startSubscription(): void {
    this.dispose();
    if (!this.opts.subscribe || this.sessionId === null || this.snapshotValue === null) {
      return;
    }
    this.stopSubscription = subscribeEvents(
      this.api,
      this.sessionId,
      this.snapshotValue.next_seq,
      () => {
        void this.refresh();
      },
    );
  }

  private adopt(snap: SessionSnapshot): void {
    this.snapshotValue = snap;
    if (this.controls === null) {
      const start: PoseDict = {
        rvec: [0, 0, 0],
        tvec: [
          -((snap.board.cols - 1) * snap.board.spacing_mm) / 2,
          -((snap.board.rows - 1) * snap.board.spacing_mm) / 2,
          600,
        ],
      };
      this.els.controls.replaceChildren();
      this.controls = createPoseControls(this.els.controls, this.els.frame, snap.rig.left, start);
      this.controls.onChange(() => this.renderPlacementWarning());
    }
    this.render();
  }

  private render(): void {
    const snap = this.snapshotValue;
    if (snap === null) {
      return;
    }
    renderOverlay(this.els.frame, overlayFromSnapshot(snap));
    this.renderPlacementWarning();

    const telemetry = telemetryFromSnapshot(snap);
    const w = this.opts.chartWidth;
    const h = this.opts.chartHeight;
    renderLineChart(
      this.els.traceChart,
      [{ label: "trace", points: definedPoints(telemetry.trace), color: "#2a7ae2" }],
      { width: w, height: h, logY: true, title: "covariance trace" },
    );
    renderLineChart(
      this.els.rmsChart,
      [{ label: "rms", points: definedPoints(telemetry.rms), color: "#d2691e" }],
      { width: w, height: h, title: "reprojection rms (px)" },
    );
    renderLineChart(
      this.els.triangChart,
      [{ label: "triang", points: definedPoints(telemetry.triang), color: "#2e8b57" }],
      { width: w, height: h, title: "triangulation error (mm)" },
    );

    const est = snap.relative_estimate;
    const estText =
      est === null
        ? "relative estimate: (needs 2 views)"
        : `relative estimate: rvec [${est.rvec.map((v) => v.toFixed(4)).join(", ")}], ` +
          `tvec [${est.tvec.map((v) => v.toFixed(1)).join(", ")}] mm`;
    this.els.status.textContent =
      `session ${snap.id} — ${snap.mode} — ${snap.n_views} view(s) — ${estText}`;
  }

  private renderPlacementWarning(): void {
    const snap = this.snapshotValue;
    if (snap === null || this.controls === null) {
      return;
    }
    const corners = previewProjection(snap.rig.left, this.controls.pose(), snap.board);
    const ok = previewInFrame(corners, snap.rig.left);
    this.els.placementWarning.textContent = ok ? "" : "placement leaves the frame";
    this.els.placementWarning.classList.toggle("active", !ok);
  }

  private showToast(message: string): void {
    this.els.toast.textContent = message;
    this.els.toast.classList.add("active");
  }

  private clearToast(): void {
    this.els.toast.textContent = "";
    this.els.toast.classList.remove("active");
  }
}
