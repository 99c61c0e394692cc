"""Bundled synthetic scenario: six frames of a car approaching a red
traffic light, with a fully scripted backend.

The embedding table plants a similarity signal on frame 3 (peaking in
grid cell (0,2), where the traffic light is drawn) for the first
sub-query and on frame 5 for the second, so the whole pipeline runs
offline with known-correct intermediate values. Build it anywhere with
`python -m evflow.fixtures OUTDIR`.
"""

import json
import math
import os
import sys

import numpy as np
from PIL import Image

from .gateway import BackendScript, ChatRule
from .types import Raster

QUESTION = "What did the vehicle do at the traffic light?"
OPTIONS = [
    ("A", "Stopped at the red light"),
    ("B", "Drove through without stopping"),
    ("C", "Turned left at the junction"),
    ("D", "Parked at the curb"),
]
ANSWER = "A"

PLAN_REPLY = json.dumps(
    [
        {"q_text": "Is a traffic light visible?", "q_vis": "traffic light"},
        {"q_text": "Did the car come to a stop?", "q_vis": "car stopped at intersection"},
    ]
)

FRAME_SIZE = 96
N_FRAMES = 6

E_LIGHT = [1.0, 0.0, 0.0, 0.0]
E_FILLER = [0.0, 1.0, 0.0, 0.0]
E_STOP = [0.0, 0.0, 1.0, 0.0]


def _base_frame(i: int) -> np.ndarray:
    color = (40 + i * 30, 80 + i * 20, 120 + i * 15)
    return np.full((FRAME_SIZE, FRAME_SIZE, 3), color, dtype=np.uint8)


def build_frames() -> list[Raster]:
    frames = []
    for i in range(N_FRAMES):
        arr = _base_frame(i)
        if i == 3:
            # traffic light housing in grid cell (0,2): x in [64,96), y in [0,32)
            arr[2:30, 68:92] = (25, 25, 25)
            arr[4:12, 72:88] = (220, 40, 40)
            arr[14:20, 72:88] = (200, 160, 40)
            arr[22:28, 72:88] = (45, 180, 60)
        if i == 5:
            # road, crosswalk, and a stopped car
            arr[60:96, :] = (60, 60, 70)
            arr[60:64, :] = (230, 230, 230)
            arr[70:90, 30:66] = (180, 20, 20)
        frames.append(Raster.from_array(arr))
    return frames


def build_script(frames: list[Raster]) -> BackendScript:
    planted_crop = frames[3].crop(64, 0, 32, 32)
    embeddings = {
        "traffic light": E_LIGHT,
        "car stopped at intersection": E_STOP,
        frames[2].digest: [0.0, math.sqrt(0.96), 0.2, 0.0],
        frames[3].digest: [0.8, 0.6, 0.0, 0.0],
        frames[4].digest: [0.3, math.sqrt(0.91), 0.0, 0.0],
        frames[5].digest: [0.0, math.sqrt(0.19), 0.9, 0.0],
        planted_crop.digest: E_LIGHT,
    }
    chat_rules = (
        ChatRule(match="decompose it into a set", reply=PLAN_REPLY),
        ChatRule(
            match="Is a traffic light visible?",
            reply=json.dumps(
                {
                    "observation": "A red traffic light is visible at the intersection.",
                    "confidence": 0.9,
                    "conflict": False,
                }
            ),
            repeat=True,
        ),
        ChatRule(
            match="Did the car come to a stop?",
            reply=json.dumps(
                {
                    "observation": "The car is stopped at the crosswalk.",
                    "confidence": 0.85,
                    "conflict": False,
                }
            ),
            repeat=True,
        ),
        # arbitration of the undecomposed question (planner ablated)
        ChatRule(
            match=QUESTION + "\n\nOutput format (JSON)",
            reply=json.dumps(
                {
                    "observation": "The vehicle halts at the red traffic light.",
                    "confidence": 0.9,
                    "conflict": False,
                }
            ),
            repeat=True,
        ),
        ChatRule(match="Only select the best option.", reply="The answer is (A)."),
    )
    return BackendScript(
        chat_rules=chat_rules,
        embeddings={k: tuple(v) for k, v in embeddings.items()},
        default_embedding=tuple(E_FILLER),
    )


def build_fixture(root: str) -> dict[str, str]:
    """Write frames, manifest, and mock script under `root`; returns the
    paths of everything created."""
    frames_dir = os.path.join(root, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    frames = build_frames()
    for i, raster in enumerate(frames):
        Image.frombytes("RGB", (raster.width, raster.height), raster.data).save(
            os.path.join(frames_dir, f"{i:02d}.png")
        )

    manifest_path = os.path.join(root, "manifest.jsonl")
    entry = {
        "id": "traffic-light",
        "frames_dir": os.path.abspath(frames_dir),
        "question": QUESTION,
        "options": [{"letter": letter, "text": text} for letter, text in OPTIONS],
        "answer": ANSWER,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(entry) + "\n")

    script_path = os.path.join(root, "mock_script.json")
    with open(script_path, "w", encoding="utf-8") as fh:
        json.dump(build_script(frames).to_dict(), fh, indent=2)
        fh.write("\n")

    return {
        "root": root,
        "frames_dir": frames_dir,
        "manifest_path": manifest_path,
        "script_path": script_path,
    }


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print("usage: python -m evflow.fixtures OUTDIR", file=sys.stderr)
        sys.exit(1)
    paths = build_fixture(sys.argv[1])
    for key, value in paths.items():
        print(f"{key}: {value}")
