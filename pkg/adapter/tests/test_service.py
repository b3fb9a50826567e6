"""Service error paths and configuration guards."""

import pytest
from fastapi.testclient import TestClient

from scout_adapter.config import AdapterConfig, config_from_env
from scout_adapter.service import create_app
from scout_adapter.upstream import UpstreamFailure, UpstreamInvalid

TURN_REQUEST = {
    "history": [
        {
            "role": "engine",
            "text": "question: What do you see?\nanswer: x\ncaption: x\nmatch score: 0.5",
        }
    ],
    "mode": "active_perception",
    "preamble_id": "v1-es",
}

PERCEPTION_REQUEST = {"question": "is there a fire?", "view": {"image_b64": "aW1n"}}


def client_for(config, chat, captioner):
    return TestClient(create_app(config, chat_client=chat, captioner_client=captioner))


def test_upstream_failure_maps_to_502(config, fake_chat, fake_captioner):
    client = client_for(config, fake_chat(UpstreamFailure("boom")), fake_captioner({}))
    response = client.post("/controller/turn", json=TURN_REQUEST)
    assert response.status_code == 502
    assert response.json()["error"]["code"] == "upstream_failure"


def test_upstream_invalid_maps_to_distinct_502(config, fake_chat, fake_captioner):
    client = client_for(config, fake_chat(UpstreamInvalid("weird")), fake_captioner({}))
    response = client.post("/controller/turn", json=TURN_REQUEST)
    assert response.status_code == 502
    assert response.json()["error"]["code"] == "upstream_invalid"


def test_captioner_failure_maps_to_502(config, fake_chat, fake_captioner):
    client = client_for(
        config, fake_chat("x"), fake_captioner(UpstreamFailure("down"))
    )
    response = client.post("/perception/query", json=PERCEPTION_REQUEST)
    assert response.status_code == 502
    assert response.json()["error"]["code"] == "upstream_failure"


def test_structured_view_is_rejected(config, fake_chat, fake_captioner):
    request = {
        "question": "is there a fire?",
        "view": {"pose": {"position": [0, 0, 5], "yaw": 0.0}, "scene": "lake"},
    }
    client = client_for(config, fake_chat("x"), fake_captioner({}))
    response = client.post("/perception/query", json=request)
    assert response.status_code == 400


def test_request_schema_violation_is_400(config, fake_chat, fake_captioner):
    client = client_for(config, fake_chat("x"), fake_captioner({}))
    response = client.post("/controller/turn", json={"history": []})
    assert response.status_code == 400


def test_config_requires_all_endpoints():
    with pytest.raises(ValueError):
        AdapterConfig(
            llm_base_url="", llm_model="m", captioner_base_url="c", captioner_model="m"
        )


def test_config_from_env_reads_variables():
    env = {
        "SCOUT_LLM_BASE_URL": "http://llm",
        "SCOUT_LLM_MODEL": "chat-1",
        "SCOUT_CAPTIONER_BASE_URL": "http://cap",
        "SCOUT_CAPTIONER_MODEL": "cap-1",
        "SCOUT_SIMILARITY_MIN": "0",
        "SCOUT_SIMILARITY_MAX": "100",
    }
    config = config_from_env(env)
    assert config.llm_model == "chat-1"
    assert config.similarity_max == 100.0
    assert "game scenario" in config.preamble
