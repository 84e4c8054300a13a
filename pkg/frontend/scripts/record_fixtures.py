"""Regenerate the recorded service traffic that the frontend tests replay.

Drives the real guidance service in-process (no network, no camera) through
the exact call sequence the browser client issues, and saves every
request/response pair verbatim.  Committing the output keeps the frontend
tests hermetic while still testing against genuine service numerics.

Run from the frontend directory with the Python package installed:

    python scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import pathlib

import numpy as np
from fastapi.testclient import TestClient

from calibguide import BoardSpec, RandomPoseConstraints, random_pose
from calibguide.service import create_app
from calibguide.simulate import benchtop_rig

# The interactive-session board: same 9x6 corner grid as the simulated
# studies but at a printable 30 mm pitch — at arm's length the tiny 5 mm
# study board leaves the per-view information too ill-conditioned for a
# covariance readout, so sessions chart nothing with it.
SESSION_BOARD = BoardSpec(rows=9, cols=6, spacing_mm=30.0)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


class Recorder:
    def __init__(self):
        self.client = TestClient(create_app(data_dir=None))
        self.records: list[dict] = []

    def call(self, method: str, path: str, body: dict | None = None) -> dict:
        if method == "GET":
            res = self.client.get(path)
        else:
            res = self.client.request(method, path, json=body)
        record = {
            "method": method,
            "path": path,
            "request": body,
            "status": res.status_code,
            "response": res.json(),
        }
        self.records.append(record)
        return record["response"]


def record_guidance_loop() -> dict:
    """The scripted session: create, two freestyle captures, four accepted
    suggestions — mirroring the client's POST-then-GET command round-trips."""
    rig = benchtop_rig()
    board = SESSION_BOARD
    rec = Recorder()

    create_body = {
        "rig": rig.to_dict(),
        "board": board.to_dict(),
        "mode": "guided",
        "seed": 11,
        "sigma_px": 0.5,
    }
    created = rec.call("POST", "/sessions", create_body)
    sid = created["id"]

    rng = np.random.default_rng(2027)
    cons = RandomPoseConstraints(depth_range=(0.55, 1.1))
    poses = []
    for _ in range(2):
        poses.append(random_pose(cons, rig, board, poses, rng))
        rec.call("POST", f"/sessions/{sid}/captures", {"pose": poses[-1].to_dict()})
        rec.call("GET", f"/sessions/{sid}")

    for _ in range(4):
        sug = rec.call("POST", f"/sessions/{sid}/suggest", {})
        rec.call("GET", f"/sessions/{sid}")
        rec.call("POST", f"/sessions/{sid}/captures", {"pose": sug["pose"]})
        rec.call("GET", f"/sessions/{sid}")

    final_state = rec.call("GET", f"/sessions/{sid}")
    trace = [t for t in final_state["trace_history"] if t is not None]
    drops = [b - a for a, b in zip(trace, trace[1:])]
    if any(d > 0.0 for d in drops):
        raise SystemExit(
            f"recorded session has a trace increase ({trace}); pick another seed"
        )
    rec.records.pop()  # the confirmation GET is not part of the client flow

    return {
        "description": (
            "Scripted guidance session against the live service: create, "
            "2 freestyle captures, then 4 suggest+accept rounds, with the "
            "client's state refetch after every command."
        ),
        "records": rec.records,
    }


def record_not_visible() -> dict:
    """A capture pose behind the camera: the service answers NOT_VISIBLE."""
    rig = benchtop_rig()
    board = SESSION_BOARD
    rec = Recorder()
    created = rec.call(
        "POST",
        "/sessions",
        {"rig": rig.to_dict(), "board": board.to_dict(), "mode": "freestyle", "seed": 12},
    )
    sid = created["id"]
    bad = {"rvec": [0.0, 0.0, 0.0], "tvec": [0.0, 0.0, -500.0]}
    rec.call("POST", f"/sessions/{sid}/captures", {"pose": bad})
    return {
        "description": "A freestyle capture the service rejects as NOT_VISIBLE.",
        "records": rec.records,
    }


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    for name, payload in (
        ("guidance_loop.json", record_guidance_loop()),
        ("not_visible.json", record_not_visible()),
    ):
        path = FIXTURES / name
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        print(f"wrote {path} ({len(payload['records'])} records)")


if __name__ == "__main__":
    main()
