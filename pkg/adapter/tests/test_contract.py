"""Contract tests: recorded fixtures through the service, validated against
the shared wire schemas."""

from fastapi.testclient import TestClient

from scout_adapter.normalize import normalize_summary_text, normalize_turn_text
from scout_adapter.schemas import validate
from scout_adapter.service import create_app


def client_for(config, fake_chat=None, fake_captioner=None):
    app = create_app(config, chat_client=fake_chat, captioner_client=fake_captioner)
    return TestClient(app)


def test_controller_fixtures_validate_and_match(recorded, config, fake_chat, fake_captioner):
    for case in recorded["controller"]:
        chat = fake_chat(case["upstream_text"])
        client = client_for(config, chat, fake_captioner({}))
        path = "/controller/summary" if case["kind"] == "summary" else "/controller/turn"
        validate("controller_turn_request.v1", case["request"])
        response = client.post(path, json=case["request"])
        assert response.status_code == 200, case["name"]
        body = response.json()
        validate("controller_text_response.v1", body)
        assert body["text"] == case["expected_text"], case["name"]
        # system preamble leads the upstream conversation
        assert chat.messages[0]["role"] == "system"
        assert chat.messages[0]["content"] == config.preamble


def test_perception_fixtures_validate_and_match(recorded, config, fake_chat, fake_captioner):
    for case in recorded["perception"]:
        captioner = fake_captioner(case["upstream"])
        client = client_for(config, fake_chat("command: move left"), captioner)
        validate("perception_query_request.v1", case["request"])
        response = client.post("/perception/query", json=case["request"])
        assert response.status_code == 200, case["name"]
        body = response.json()
        validate("perception_query_response.v1", body)
        assert body == case["expected"], case["name"]
        assert captioner.last == (
            case["request"]["view"]["image_b64"],
            case["request"]["question"],
        )


def test_expected_texts_are_normalization_fixpoints(recorded):
    for case in recorded["controller"]:
        normalizer = (
            normalize_summary_text if case["kind"] == "summary" else normalize_turn_text
        )
        assert normalizer(case["expected_text"]) == case["expected_text"], case["name"]


def test_expected_controller_texts_parse_in_primary_grammar(recorded):
    # the adapter's output must be consumable by the strict primary parser
    from dronescout.grammar import parse_summary, parse_turn

    for case in recorded["controller"]:
        if case["kind"] == "summary":
            parse_summary(case["expected_text"])
        else:
            parse_turn(case["expected_text"])
