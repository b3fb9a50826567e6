"""Scripted controller policy: rule priorities, summaries, final composition."""

from dronescout.engine import HistoryEntry
from dronescout.facts import Fact
from dronescout.grammar import Command, QuestionKind, parse_turn
from dronescout.policy import (
    SAFETY_TABLE,
    ControllerBelief,
    ScriptedController,
    compose_final,
    scripted_next_turn,
    scripted_summary,
)


def engine_msg(caption, score, question="what do you see?", answer=None):
    return HistoryEntry(
        "engine",
        f"question: {question}\nanswer: {answer if answer is not None else caption}\n"
        f"caption: {caption}\nmatch score: {score!r}",
    )


def controller_msg(text):
    return HistoryEntry("controller", text)


def next_directive(history):
    belief = ControllerBelief.from_history(history)
    return scripted_next_turn(belief, belief.last_reply)


# ---------- rule order ----------


def test_new_label_triggers_save():
    directive = next_directive([engine_msg("a truck", 0.5)])
    assert directive.command is Command.SAVE_POSITION


def test_high_score_triggers_save_without_new_label():
    history = [
        engine_msg("a rock", 0.3),
        controller_msg("command: save position"),
        HistoryEntry("engine", "position saved"),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("a rock", 0.9),
    ]
    assert next_directive(history).command is Command.SAVE_POSITION


def test_save_not_repeated_for_same_result():
    history = [
        engine_msg("a truck", 0.9),
        controller_msg("command: save position"),
        HistoryEntry("engine", "position saved"),
    ]
    directive = next_directive(history)
    assert directive.command is not Command.SAVE_POSITION


def test_save_budget_exhausts():
    history = [engine_msg("a truck", 0.9)]
    for _ in range(3):
        history.append(controller_msg("command: save position"))
        history.append(HistoryEntry("engine", "position saved"))
    history.append(controller_msg("command: move left\nquestion: what do you see?"))
    history.append(engine_msg("a fresh lake", 0.95))
    directive = next_directive(history)
    assert directive.command is not Command.SAVE_POSITION


def test_watchlist_token_triggers_presence_question():
    history = [
        engine_msg("a burning tree", 0.5),
        controller_msg("command: save position"),
        HistoryEntry("engine", "position saved"),
    ]
    directive = next_directive(history)
    assert directive.command is Command.ASK_QUESTION
    assert directive.question.kind is QuestionKind.PRESENCE
    assert directive.question.subject == "burning"


def test_watch_question_asked_once_per_token():
    history = [
        engine_msg("a burning tree", 0.5),
        controller_msg("command: save position"),
        HistoryEntry("engine", "position saved"),
        controller_msg("command: ask a question\nquestion: is there a burning?"),
        engine_msg("a burning tree", 0.5, question="is there a burning?", answer="yes"),
    ]
    directive = next_directive(history)
    assert directive.command is not Command.ASK_QUESTION


def test_improving_window_moves_closer():
    history = [
        engine_msg("nothing notable", 0.3),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("nothing notable", 0.4),
        controller_msg("command: move right\nquestion: what do you see?"),
        engine_msg("nothing notable", 0.5),
    ]
    directive = next_directive(history)
    assert directive.command is Command.MOVE_CLOSER
    assert directive.question is not None


def test_sweeps_left_then_right():
    first = next_directive([engine_msg("nothing notable", 0.0)])
    assert first.command is Command.MOVE_LEFT
    history = [
        engine_msg("nothing notable", 0.0),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("nothing notable", 0.0),
    ]
    assert next_directive(history).command is Command.MOVE_RIGHT


def test_all_swept_and_flat_stops():
    history = [
        engine_msg("nothing notable", 0.2),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("nothing notable", 0.2),
        controller_msg("command: move right\nquestion: what do you see?"),
        engine_msg("nothing notable", 0.2),
    ]
    assert next_directive(history).command is Command.I_KNOW_ENOUGH


def test_policy_is_pure():
    history = [engine_msg("a truck", 0.5)]
    belief = ControllerBelief.from_history(history)
    a = scripted_next_turn(belief, belief.last_reply)
    b = scripted_next_turn(belief, belief.last_reply)
    assert a == b


# ---------- summary ----------


def test_summary_targets_heard_once_plus_watchlist():
    history = [
        engine_msg("a tree", 0.5),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("a tree and a fire", 0.5),
        controller_msg("command: move right\nquestion: what do you see?"),
        engine_msg("a tree", 0.5),
    ]
    summary = scripted_summary(ControllerBelief.from_history(history))
    assert summary.validation_targets == (Fact("fire"),)
    assert "tree" in summary.caption


def test_summary_no_facts():
    summary = scripted_summary(ControllerBelief.from_history([]))
    assert summary.caption == "nothing notable"
    assert summary.validation_targets == ()


def test_summary_caption_ranks_by_repetition():
    history = [
        engine_msg("a rock and a tree", 0.5),
        controller_msg("command: move left\nquestion: what do you see?"),
        engine_msg("a tree", 0.5),
    ]
    summary = scripted_summary(ControllerBelief.from_history(history))
    assert summary.caption.startswith("a tree")


# ---------- compose_final ----------


def test_compose_confirmed_burning_tree_gets_fire_response_note():
    _, _, notes = compose_final([Fact("tree", ("burning",))])
    assert notes == [SAFETY_TABLE["burning"]]
    assert "fire response" in notes[0]


def test_compose_empty():
    description, caption, notes = compose_final([])
    assert "no notable objects" in description
    assert caption == "nothing notable"
    assert notes == []


def test_compose_includes_fact_phrases_verbatim():
    description, caption, _ = compose_final(
        [Fact("road", ("snowy",)), Fact("truck", ("crashed",))]
    )
    assert "snowy road" in description
    assert "crashed truck" in description
    assert "crashed truck" in caption


def test_compose_leads_with_anomalies_and_dedupes_notes():
    _, caption, notes = compose_final(
        [Fact("rock"), Fact("lake"), Fact("hut"), Fact("pine"), Fact("fire", ("burning",))]
    )
    assert caption.startswith("a burning fire")
    assert notes == [SAFETY_TABLE["burning"], SAFETY_TABLE["fire"]]


def test_compose_never_includes_refuted_or_unheard():
    confirmed = [Fact("tree", ("tall",))]
    description, caption, _ = compose_final(confirmed)
    assert "rock" not in description and "rock" not in caption


# ---------- backend surface ----------


def test_scripted_controller_outputs_parse():
    controller = ScriptedController()
    history = [engine_msg("a tree and a rock", 0.7)]
    for _ in range(12):
        text = controller.next_turn(history)
        directive = parse_turn(text)  # must never raise
        history.append(controller_msg(text))
        if directive.command is Command.I_KNOW_ENOUGH:
            break
        if directive.command is Command.SAVE_POSITION:
            history.append(HistoryEntry("engine", "position saved"))
        else:
            history.append(engine_msg("a tree", 0.7))
    summary_text = controller.summary(history)
    from dronescout.grammar import parse_summary

    parse_summary(summary_text)


def test_policy_terminates_within_bound():
    # 2 sweeps + score window + save budget with a generous constant
    controller = ScriptedController()
    history = [engine_msg("a tree and a rock and a hut and a lake", 0.9)]
    turns = 0
    while turns < 24:
        text = controller.next_turn(history)
        directive = parse_turn(text)
        history.append(controller_msg(text))
        turns += 1
        if directive.command is Command.I_KNOW_ENOUGH:
            break
        if directive.command is Command.SAVE_POSITION:
            history.append(HistoryEntry("engine", "position saved"))
        elif directive.command is Command.ASK_QUESTION:
            history.append(engine_msg("a tree", 0.9, question=directive.question.raw, answer="yes"))
        else:
            history.append(engine_msg("a tree", 0.9))
    assert turns <= 2 + 3 + 3 + 4
