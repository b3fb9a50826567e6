import json
from pathlib import Path

import pytest

from scout_adapter.config import AdapterConfig

FIXTURES = Path(__file__).parent / "fixtures" / "recorded.json"


@pytest.fixture(scope="session")
def recorded():
    return json.loads(FIXTURES.read_text(encoding="utf-8"))


@pytest.fixture()
def config():
    return AdapterConfig(
        llm_base_url="http://llm.invalid",
        llm_model="test-chat",
        captioner_base_url="http://captioner.invalid",
        captioner_model="test-captioner",
        preamble="you are flying a drone in a game scenario.",
    )


class FakeChat:
    def __init__(self, text):
        self.text = text
        self.messages = None

    def complete(self, messages):
        self.messages = messages
        if isinstance(self.text, Exception):
            raise self.text
        return self.text


class FakeCaptioner:
    def __init__(self, payload):
        self.payload = payload
        self.last = None

    def query(self, image_b64, question):
        self.last = (image_b64, question)
        if isinstance(self.payload, Exception):
            raise self.payload
        return self.payload


@pytest.fixture()
def fake_chat():
    return FakeChat


@pytest.fixture()
def fake_captioner():
    return FakeCaptioner
