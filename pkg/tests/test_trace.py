import json

import pytest

from evflow.errors import TraceError
from evflow.trace import STAGES, TraceEvent, TraceRecorder, read_trace, without_wall_time, write_trace


class TestTraceEvent:
    def test_stage_checked(self):
        with pytest.raises(TraceError):
            TraceEvent(seq=0, stage="mystery", payload={}, wall_time=0.0)

    def test_known_stages(self):
        assert "plan" in STAGES
        assert "scout.selected" in STAGES
        assert "answer" in STAGES

    def test_negative_seq_rejected(self):
        with pytest.raises(TraceError):
            TraceEvent(seq=-1, stage="plan", payload={}, wall_time=0.0)


class TestTraceRecorder:
    def test_seq_auto_increments(self):
        rec = TraceRecorder()
        rec.emit("plan", {"a": 1})
        rec.emit("answer", {"b": 2})
        assert [e.seq for e in rec.events] == [0, 1]

    def test_wall_time_populated(self):
        rec = TraceRecorder()
        rec.emit("plan", {})
        assert rec.events[0].wall_time > 0


class TestRoundTrip:
    def test_write_then_read(self, tmp_path):
        rec = TraceRecorder()
        rec.emit("plan", {"question": "q"})
        rec.emit("answer", {"letter": "A"})
        path = tmp_path / "run.trace.jsonl"
        write_trace(rec.events, str(path))
        back = read_trace(str(path))
        assert without_wall_time(back) == without_wall_time(rec.events)

    def test_jsonl_lines_have_sorted_keys(self, tmp_path):
        rec = TraceRecorder()
        rec.emit("plan", {"zebra": 1, "apple": 2})
        path = tmp_path / "run.trace.jsonl"
        write_trace(rec.events, str(path))
        line = path.read_text().splitlines()[0]
        assert line == json.dumps(json.loads(line), sort_keys=True)

    def test_read_error_cites_line(self, tmp_path):
        path = tmp_path / "bad.trace.jsonl"
        good = json.dumps({"seq": 0, "stage": "plan", "payload": {}, "wall_time": 1.0})
        path.write_text(good + "\n{broken\n")
        with pytest.raises(TraceError) as exc:
            read_trace(str(path))
        assert ":2:" in str(exc.value)

    def test_read_rejects_unknown_stage(self, tmp_path):
        path = tmp_path / "bad.trace.jsonl"
        path.write_text(
            json.dumps({"seq": 0, "stage": "wat", "payload": {}, "wall_time": 1.0}) + "\n"
        )
        with pytest.raises(TraceError):
            read_trace(str(path))

    def test_without_wall_time_strips_only_time(self):
        rec = TraceRecorder()
        rec.emit("plan", {"x": 1})
        stripped = without_wall_time(rec.events)
        assert stripped == [{"seq": 0, "stage": "plan", "payload": {"x": 1}}]
