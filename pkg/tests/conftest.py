import json

import pytest

from evflow.config import PipelineConfig
from evflow.fixtures import ANSWER, OPTIONS, QUESTION, build_fixture
from evflow.gateway import BackendScript
from evflow.ingest import load_frames


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Traffic-light scenario on disk: frames/, manifest.jsonl, mock_script.json."""
    root = tmp_path_factory.mktemp("fixture")
    return build_fixture(str(root))


@pytest.fixture(scope="session")
def fixture_script(fixture_dir):
    return BackendScript.load(fixture_dir["script_path"])


@pytest.fixture(scope="session")
def fixture_frames(fixture_dir):
    return load_frames(fixture_dir["frames_dir"], budget=32)


@pytest.fixture
def fixture_backends(fixture_script):
    """Fresh mock pair per test; scripted rules are consumed on use."""
    return fixture_script.make_chat(), fixture_script.make_embedder()


@pytest.fixture
def default_cfg():
    return PipelineConfig()


@pytest.fixture
def fixture_task():
    return {"question": QUESTION, "options": OPTIONS, "answer": ANSWER}


def write_script(path, chat_rules=(), embeddings=None, default=None):
    """Minimal mock script file for tests that need custom backends."""
    doc = {
        "chat": list(chat_rules),
        "embeddings": embeddings or {},
    }
    if default is not None:
        doc["default_embedding"] = list(default)
    path.write_text(json.dumps(doc))
    return str(path)
