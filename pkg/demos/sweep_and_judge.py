"""Sweep a parameter, then run the evidence-quality study.

Both harnesses run on the bundled fixture with scripted backends, so
the numbers are illustrative rather than meaningful; the point is the
mechanics. The sweep re-answers the task at each smoothing kernel. The
judge study scores 16 uniformly sampled frames against the one crop
retrieval picked, using a scripted judge whose replies we control.

Run: python3 demos/sweep_and_judge.py
"""

import tempfile

from evflow import (
    BackendScript,
    ChatRule,
    PipelineConfig,
    ScriptedChat,
    ScriptedEmbedder,
    load_manifest,
    oracle_assess,
    render_oracle_table,
    sweep,
)
from evflow.fixtures import build_fixture


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        paths = build_fixture(tmp)
        entries = load_manifest(paths["manifest_path"])
        script = BackendScript.load(paths["script_path"])
        factory = lambda: (script.make_chat(), script.make_embedder())
        cfg = PipelineConfig()

        print("Sweeping the smoothing kernel over the fixture task:\n")
        reports = sweep(entries, cfg, {"k": [1, 3, 5, 7, 9]}, factory)
        for report in reports:
            print(
                f"  {report.label:<6} accuracy {report.accuracy:.2f} "
                f"({report.correct}/{report.total})"
            )

        # scripted judge: uniform frames mostly score 2-3, the zoomed
        # crop (its prompt carries the crop context note) scores 5
        judge = ScriptedChat(
            [
                ChatRule(reply="5", match="zoomed-in crop", repeat=True),
                ChatRule(reply="3", at=0),
                ChatRule(reply="2", at=2),
                ChatRule(reply="2", at=4),
                ChatRule(reply="3", repeat=True),
            ]
        )
        embedder = ScriptedEmbedder({}, default=(1.0, 0.0))
        report = oracle_assess(entries, cfg, judge, embedder)

        print("\nJudged evidence quality, uniform frames versus the picked crop:\n")
        print(render_oracle_table(report))
        print(f"\n(samples: {len(report.samples)}, skipped: {len(report.skipped)})")


if __name__ == "__main__":
    main()
