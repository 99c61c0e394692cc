"""Run the whole pipeline on the bundled traffic-light scenario.

Builds the six-frame fixture in a temp directory, answers its question
with the scripted backends, and narrates the trace: the plan, what each
sub-query retrieved, how arbitration ruled, and the final answer.

Pass --wire to route the same run through the local HTTP stub instead
of in-process mocks, exercising the real request/response path. Either
way nothing leaves the machine.

Run: python3 demos/full_run.py [--wire]
"""

import sys
import tempfile

from evflow import (
    BackendScript,
    HttpChatClient,
    HttpEmbeddingClient,
    PipelineConfig,
    StubServer,
    answer_question,
    load_frames,
)
from evflow.fixtures import OPTIONS, QUESTION, build_fixture
from evflow.trace import read_trace


def narrate(events) -> None:
    for event in events:
        p = event.payload
        if event.stage == "plan":
            print(f"plan: {len(p['subqueries'])} sub-queries")
            for sq in p["subqueries"]:
                print(f"  {sq['id']}: {sq['q_text']!r}  (visual: {sq['q_vis']!r})")
        elif event.stage == "scout.windows":
            spans = ", ".join(f"[{w['start']}..{w['end']}]" for w in p["windows"])
            print(f"{p['subquery_id']}: windows {spans}")
        elif event.stage == "scout.selected":
            print(
                f"{p['subquery_id']}: zoomed to {p['patch']['kind']} of frame "
                f"{p['frame_index']} (similarity {p['similarity']:.2f})"
            )
        elif event.stage == "arbitration":
            verdict = p["decision"]
            print(
                f"{p['subquery_id']}: arbiter says {p['observation']!r} "
                f"confidence {p['confidence']:.2f} -> {verdict}"
            )
        elif event.stage == "synthesis":
            print(f"synthesis over {len(p['facts'])} accepted facts -> {p['letter']}")


def main() -> None:
    wire = "--wire" in sys.argv[1:]
    with tempfile.TemporaryDirectory() as tmp:
        paths = build_fixture(tmp)
        frames = load_frames(paths["frames_dir"], budget=32)
        script = BackendScript.load(paths["script_path"])
        cfg = PipelineConfig()

        print(f"Question: {QUESTION}")
        for letter, text in OPTIONS:
            print(f"  ({letter}) {text}")
        print()

        if wire:
            with StubServer(script) as server:
                print(f"Talking to the stub at {server.endpoint}\n")
                record = answer_question(
                    frames,
                    QUESTION,
                    OPTIONS,
                    cfg,
                    HttpChatClient(server.endpoint, model="scripted"),
                    HttpEmbeddingClient(server.endpoint, model="scripted"),
                    question_id="demo",
                    trace_dir=tmp,
                )
                print(f"{len(server.requests)} HTTP requests, all schema-checked\n")
        else:
            record = answer_question(
                frames,
                QUESTION,
                OPTIONS,
                cfg,
                script.make_chat(),
                script.make_embedder(),
                question_id="demo",
                trace_dir=tmp,
            )

        narrate(read_trace(record.trace_path))
        print(
            f"\nAnswer: ({record.predicted})  "
            f"[{record.chat_calls} chat calls, "
            f"{record.embed_text_calls + record.embed_image_calls} embeddings]"
        )


if __name__ == "__main__":
    main()
