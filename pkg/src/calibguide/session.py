"""Guided-capture session state: an event-sourced calibration in progress.

A session owns a simulated rig (true relative transform included, so
captures can be synthesized), accumulates views, recalibrates after every
capture, and asks the planner for the next placement on demand.  Every
mutation appends one event dict; replaying the event list through
:meth:`SessionState.replay` reconstructs the exact state, which doubles as
the wire format for live streaming and the on-disk format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRays, InsufficientViews, InvalidConfig, NotVisible
from .geometry import BoardSpec, Pose, StereoRig, board_corners, project
from .jacobians import ViewPair
from .pipeline import (
    CalibrationDataset,
    CalibrationResult,
    calibrate,
    reprojection_error_stats,
    triangulation_error_stats,
)
from .planner import CandidatePose, SearchConfig, is_visible, next_optimal_pose
from .simulate import synthesize_view

MODES = ("guided", "freestyle")


def _clean_float(v: float | None) -> float | None:
    if v is None or not math.isfinite(v):
        return None
    return float(v)


@dataclass(eq=False)
class SessionState:
    """Mutable state of one capture session; not thread-safe by itself."""

    session_id: str
    rig: StereoRig  # intrinsics plus the simulated true relative transform
    board: BoardSpec
    mode: str = "guided"
    seed: int = 0
    sigma_px: float = 0.5
    kernel: str = "identity"
    search: SearchConfig = field(default_factory=SearchConfig)
    views: list[ViewPair] = field(default_factory=list)
    placed_poses: list[Pose | None] = field(default_factory=list)
    result: CalibrationResult | None = None
    trace_history: list[float | None] = field(default_factory=list)
    rms_history: list[float | None] = field(default_factory=list)
    triang_history: list[float | None] = field(default_factory=list)
    suggested: CandidatePose | None = None
    suggested_overlay: list | None = None
    events: list[dict] = field(default_factory=list)

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        session_id: str,
        rig: StereoRig,
        board: BoardSpec,
        mode: str = "guided",
        seed: int = 0,
        sigma_px: float = 0.5,
        kernel: str = "identity",
        search: SearchConfig | None = None,
    ) -> SessionState:
        if mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {mode!r}")
        if sigma_px < 0.0:
            raise InvalidConfig(f"sigma_px must be >= 0, got {sigma_px}")
        state = cls(
            session_id=session_id,
            rig=rig,
            board=board,
            mode=mode,
            seed=int(seed),
            sigma_px=float(sigma_px),
            kernel=kernel,
            search=search if search is not None else SearchConfig(),
        )
        state._append_event(
            {
                "type": "created",
                "session_id": session_id,
                "config": {
                    "rig": rig.to_dict(),
                    "board": board.to_dict(),
                    "mode": mode,
                    "seed": int(seed),
                    "sigma_px": float(sigma_px),
                    "kernel": kernel,
                    "search": state.search.to_dict(),
                },
            }
        )
        return state

    def _append_event(self, event: dict) -> dict:
        event = {"seq": len(self.events), **event}
        self.events.append(event)
        return event

    # -- core transitions --------------------------------------------------

    @property
    def n_views(self) -> int:
        return len(self.views)

    def estimated_rig(self) -> StereoRig:
        if self.result is None:
            raise InsufficientViews("no relative estimate yet; capture at least two views")
        return StereoRig(self.rig.left, self.rig.right, self.result.relative)

    def capture(
        self,
        pose: Pose | None = None,
        pixels: tuple | None = None,
        sigma: float | None = None,
    ) -> dict:
        """Add one view: either synthesize at ``pose`` or accept raw ``pixels``.

        ``pixels`` is a (left, right) pair of corner arrays for externally
        detected views; otherwise the pose is checked for visibility against
        the true rig and detections are synthesized with noise ``sigma``
        (session default when None).  Recalibrates once two or more views
        exist and returns the capture summary.
        """
        if pixels is None and pose is None:
            raise InvalidConfig("capture needs a board pose or detected pixels")
        sig = self.sigma_px if sigma is None else float(sigma)
        if sig < 0.0:
            raise InvalidConfig(f"sigma must be >= 0, got {sig}")

        if pixels is not None:
            left_px, right_px = pixels
            view = ViewPair(
                left_pixels=np.asarray(left_px, dtype=np.float64),
                right_pixels=np.asarray(right_px, dtype=np.float64),
                board=self.board,
            )
        else:
            if not is_visible(pose, self.rig, self.board, margin_px=0.0):
                raise NotVisible("board corners would leave the image at that pose")
            rng = np.random.default_rng([self.seed, 1, len(self.views)])
            view = synthesize_view(self.rig, self.board, pose, sig, rng)

        self.views.append(view)
        self.placed_poses.append(pose)
        self.suggested = None
        self.suggested_overlay = None
        self._recalibrate()
        summary = self._summary()
        self._append_event(
            {
                "type": "capture",
                "pose": pose.to_dict() if pose is not None else None,
                "sigma": sig,
                "external": pixels is not None,
                "view": {
                    "left_pixels": view.left_pixels.tolist(),
                    "right_pixels": view.right_pixels.tolist(),
                },
                "summary": summary,
            }
        )
        return summary

    def _recalibrate(self) -> None:
        if len(self.views) < 2:
            self.result = None
            self.trace_history.append(None)
            self.rms_history.append(None)
            self.triang_history.append(None)
            return
        dataset = CalibrationDataset(
            self.rig.left, self.rig.right, self.board, tuple(self.views)
        )
        init = self.result if self.result is not None else None
        self.result = calibrate(dataset, kernel=self.kernel, init=init)
        cov = self.result.covariance
        self.trace_history.append(_clean_float(cov.trace if cov is not None else None))
        rms, _ = reprojection_error_stats(dataset, self.result)
        self.rms_history.append(_clean_float(rms))
        try:
            self.triang_history.append(
                _clean_float(triangulation_error_stats(dataset, self.result))
            )
        except DegenerateRays:
            self.triang_history.append(None)

    def suggest(self) -> tuple[CandidatePose, list]:
        """Plan the next placement from the current estimate.

        Deterministic for a fixed session: the search seed derives from the
        session seed and the view count, so calling again without capturing
        returns the identical suggestion.  Needs at least two views (the
        relative estimate must exist).  Returns the candidate and the
        predicted left-image corner overlay, ordered like the board grid.
        """
        if len(self.views) < 2 or self.result is None:
            raise InsufficientViews(
                f"planning needs >= 2 captured views, session has {len(self.views)}"
            )
        est_rig = self.estimated_rig()
        planner_views = [
            v.with_pose(p) for v, p in zip(self.views, self.result.per_view_left_abs)
        ]
        derived = int(np.random.default_rng([self.seed, 2, len(self.views)]).integers(2**63))
        search = SearchConfig.from_dict({**self.search.to_dict(), "seed": derived})
        cand = next_optimal_pose(planner_views, est_rig, self.board, search)
        overlay = project(est_rig.left, cand.pose, board_corners(self.board))
        overlay_list = [[float(u), float(v)] for u, v in overlay]
        self.suggested = cand
        self.suggested_overlay = overlay_list
        self._append_event(
            {
                "type": "suggest",
                "suggestion": cand.to_dict(),
                "overlay": overlay_list,
            }
        )
        return cand, overlay_list

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        """Full state snapshot; replaying the events reproduces it exactly."""
        return {
            "id": self.session_id,
            "mode": self.mode,
            "seed": self.seed,
            "sigma_px": self.sigma_px,
            "kernel": self.kernel,
            "search": self.search.to_dict(),
            "rig": self.rig.to_dict(),
            "board": self.board.to_dict(),
            "n_views": self.n_views,
            "views": [
                {
                    "left_pixels": v.left_pixels.tolist(),
                    "right_pixels": v.right_pixels.tolist(),
                    "left_abs": (
                        self.result.per_view_left_abs[i].to_dict()
                        if self.result is not None and i < len(self.result.per_view_left_abs)
                        else None
                    ),
                }
                for i, v in enumerate(self.views)
            ],
            "relative_estimate": (
                self.result.relative.to_dict() if self.result is not None else None
            ),
            "trace_history": self.trace_history,
            "rms_history": self.rms_history,
            "triang_history": self.triang_history,
            "suggested": self.suggested.to_dict() if self.suggested is not None else None,
            "suggested_overlay": self.suggested_overlay,
            "next_seq": len(self.events),
        }

    @classmethod
    def replay(cls, events: list[dict]) -> SessionState:
        """Rebuild a session by re-running its event log.

        Captures are re-fed the recorded pixels (not re-synthesized), so the
        numeric pipeline re-executes deterministically; suggest events
        re-run the planner with the derived seed.  The result matches the
        live session field for field.
        """
        if not events or events[0].get("type") != "created":
            raise InvalidConfig("event log must start with a 'created' event")
        cfg = events[0]["config"]
        state = cls.create(
            session_id=events[0].get("session_id", ""),
            rig=StereoRig.from_dict(cfg["rig"]),
            board=BoardSpec.from_dict(cfg["board"]),
            mode=cfg["mode"],
            seed=cfg["seed"],
            sigma_px=cfg["sigma_px"],
            kernel=cfg["kernel"],
            search=SearchConfig.from_dict(cfg["search"]),
        )
        for event in events[1:]:
            if event["type"] == "capture":
                pose = Pose.from_dict(event["pose"]) if event["pose"] is not None else None
                view = event["view"]
                if event.get("external"):
                    state.capture(
                        pose=pose,
                        pixels=(view["left_pixels"], view["right_pixels"]),
                        sigma=event["sigma"],
                    )
                else:
                    # replay the synthesized detections verbatim; the rng
                    # stream would regenerate them, but replay must not
                    # depend on that
                    state.views.append(
                        ViewPair(
                            left_pixels=np.asarray(view["left_pixels"]),
                            right_pixels=np.asarray(view["right_pixels"]),
                            board=state.board,
                        )
                    )
                    state.placed_poses.append(pose)
                    state.suggested = None
                    state.suggested_overlay = None
                    state._recalibrate()
                    state._append_event(
                        {
                            "type": "capture",
                            "pose": event["pose"],
                            "sigma": event["sigma"],
                            "external": False,
                            "view": view,
                            "summary": state._summary(),
                        }
                    )
            elif event["type"] == "suggest":
                state.suggest()
            elif event["type"] == "created":
                raise InvalidConfig("duplicate 'created' event in log")
            else:
                raise InvalidConfig(f"unknown event type {event['type']!r}")
        return state

    def _summary(self) -> dict:
        return {
            "n_views": self.n_views,
            "relative": (
                self.result.relative.to_dict() if self.result is not None else None
            ),
            "trace": self.trace_history[-1] if self.trace_history else None,
            "rms_reproj": self.rms_history[-1] if self.rms_history else None,
            "triang_mean": self.triang_history[-1] if self.triang_history else None,
        }
