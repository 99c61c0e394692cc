"""Walk through the grid pyramid on a frame with one tiny detail.

A 300x300 frame that is mostly dull gray except for a small red blob
near the top right corner. Scoring the full frame barely notices it;
scoring the 3x3 cells individually makes the blob's cell the clear
winner. The scripted embedder stands in for a real one: crops that
contain red score high against the query, everything else scores low.

Run: python3 demos/grid_zoom.py
"""

import numpy as np

from evflow import Raster, ScriptedEmbedder, build_patch_set, select_evidence_patch

QUERY = "a small red object"


def redness(crop: Raster) -> float:
    arr = crop.to_array().astype(float)
    return float((arr[:, :, 0] > 200).mean())


def main() -> None:
    arr = np.full((300, 300, 3), (90, 90, 90), dtype=np.uint8)
    arr[30:55, 240:270] = (230, 30, 20)
    frame = Raster.from_array(arr)

    patches = build_patch_set(frame, n_grid=3)
    print(f"Patch set: {len(patches)} entries (1 Global + 3x3 grid)\n")

    # fake embeddings: alignment with the query grows with the fraction
    # of the crop the blob occupies, which is the whole point of zooming
    table = {QUERY: (1.0, 0.0)}
    cosines = {}
    for ref, crop in patches:
        cos = min(1.0, (8.0 * redness(crop)) ** 0.5)
        cosines[ref.label] = cos
        table[crop.digest] = (cos, (1.0 - cos**2) ** 0.5)
    embedder = ScriptedEmbedder(table)

    print(f"{'patch':<14} {'rect':<22} {'red pixels':>10} {'similarity':>11}")
    for ref, crop in patches:
        r = ref.rect
        rect = f"({r.x:3d},{r.y:3d}) {r.w}x{r.h}"
        print(
            f"{ref.label:<14} {rect:<22} {redness(crop) * 100:9.1f}% {cosines[ref.label]:11.3f}"
        )

    evidence = select_evidence_patch([(0, 0, patches)], QUERY, embedder, frozenset(), "demo")
    r = evidence.patch.rect
    print(f"\nJoint argmax picked {evidence.patch.label}")
    print(f"  rect ({r.x},{r.y}) {r.w}x{r.h}, similarity {evidence.similarity:.3f}")
    print("  The blob covers 7.5% of that crop versus 0.8% of the full frame,")
    print("  so the arbiter sees it nine times larger than uniform sampling would.")


if __name__ == "__main__":
    main()
