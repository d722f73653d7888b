"""Chat gateway: digests, retries, structured parsing, transcripts, replay."""

import json

import pytest

from dytag.gateway import (
    CLASS_PREDICTION,
    LINK_ANSWER,
    REASK_MESSAGE,
    RETRIEVAL_LIKELIHOODS,
    ChatMessage,
    ChatRequest,
    Gateway,
    HttpBackend,
    MockBackend,
    MockMissError,
    MockRule,
    ReplayBackend,
    ReplayMissError,
    StructuredParseError,
    TransportError,
    extract_json_object,
    heuristic_mock,
    load_mock_rules,
    request_digest,
    system_user_request,
)
from dytag.gateway import backends as backends_module
from dytag.gateway.types import canonical_request_payload


def req(user="hello", system=None, **kw):
    messages = []
    if system is not None:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", user))
    return ChatRequest(model="m", messages=tuple(messages), **kw)


# ----------------------------------------------------------------------
# request shape and digests


def test_request_requires_messages():
    with pytest.raises(ValueError, match="at least one message"):
        ChatRequest(model="m", messages=())


def test_system_message_only_first():
    with pytest.raises(ValueError, match="first message"):
        ChatRequest(
            model="m",
            messages=(ChatMessage("user", "a"), ChatMessage("system", "b")),
        )
    # and leading system is fine
    r = system_user_request("m", "sys", "usr")
    assert [m.role for m in r.messages] == ["system", "user"]


def test_digest_stable_for_equal_requests():
    assert request_digest(req("a", system="s")) == request_digest(req("a", system="s"))
    assert request_digest(req("a")) != request_digest(req("b"))
    assert request_digest(req("a")) != request_digest(req("a", temperature=0.5))
    assert request_digest(req("a")) != request_digest(req("a", max_tokens=2))


def test_digest_normalizes_line_endings():
    assert request_digest(req("line1\r\nline2")) == request_digest(req("line1\nline2"))


def test_digest_ignores_structured_hint():
    assert request_digest(req("a", expect_structured=True)) == request_digest(
        req("a", expect_structured=False)
    )
    assert "expect_structured" not in canonical_request_payload(req("a"))


def test_canonical_payload_is_serialization_order_free():
    blob1 = json.dumps(canonical_request_payload(req("a")), sort_keys=True)
    blob2 = json.dumps(canonical_request_payload(req("a")), sort_keys=True)
    assert blob1 == blob2


# ----------------------------------------------------------------------
# structured parsing


def test_parse_fenced_class_prediction():
    got = CLASS_PREDICTION.parse('```json\n{"Prediction": "personal"}\n```')
    assert got["Prediction"] == "personal"


def test_parse_retrieval_likelihood_map():
    got = RETRIEVAL_LIKELIHOODS.parse('{"17": 0.9, "23": 0.1}')
    assert got == {"17": 0.9, "23": 0.1}


def test_parse_retrieval_rejects_bad_values():
    with pytest.raises(StructuredParseError):
        RETRIEVAL_LIKELIHOODS.parse('{"17": 1.7}')
    with pytest.raises(StructuredParseError):
        RETRIEVAL_LIKELIHOODS.parse('{"seventeen": 0.5}')
    with pytest.raises(StructuredParseError):
        RETRIEVAL_LIKELIHOODS.parse("{}")


def test_parse_link_answer():
    assert LINK_ANSWER.parse("1") == 1
    assert LINK_ANSWER.parse(" 0 ") == 0
    assert LINK_ANSWER.parse('"1"') == 1
    with pytest.raises(StructuredParseError):
        LINK_ANSWER.parse("I think the answer is 1")


def test_extract_first_json_object():
    content = 'noise {"not": "closed" and then {"Prediction": "A"} trailing'
    assert extract_json_object(content) == {"Prediction": "A"}
    with pytest.raises(StructuredParseError):
        extract_json_object("no objects here")


def test_class_prediction_missing_key():
    with pytest.raises(StructuredParseError, match="Prediction"):
        CLASS_PREDICTION.parse('{"Answer": "A"}')


# ----------------------------------------------------------------------
# http retry behavior


class _FakeReply:
    def __init__(self, status, content="ok"):
        self.status_code = status
        self.text = json.dumps({"error": "boom"}) if status != 200 else ""
        self._content = content

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


def _patch_post(monkeypatch, replies):
    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append(url)
        return replies[min(len(calls), len(replies)) - 1]

    monkeypatch.setattr(backends_module.requests, "post", fake_post)
    return calls


def test_http_retries_transient_then_succeeds(monkeypatch, tmp_path):
    calls = _patch_post(
        monkeypatch, [_FakeReply(500), _FakeReply(500), _FakeReply(200, "done")]
    )
    delays = []
    backend = HttpBackend(
        "https://api.example.com", api_key="k", sleeper=delays.append
    )
    gw = Gateway(backend, transcript_path=tmp_path / "t.jsonl")
    response = gw.complete(req("ping"))
    assert response.content == "done"
    assert len(calls) == 3
    assert delays == [0.5, 1.0]  # capped exponential backoff
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 1  # one record per logical call, not per attempt
    record = json.loads(lines[0])
    assert record["request_digest"] == request_digest(req("ping"))


def test_http_retry_bound(monkeypatch):
    calls = _patch_post(monkeypatch, [_FakeReply(500)])
    backend = HttpBackend(
        "https://api.example.com", api_key="k", sleeper=lambda _s: None
    )
    with pytest.raises(TransportError, match="exhausted 3 attempts"):
        backend.complete(req("ping"))
    assert len(calls) == 3


def test_http_client_error_fails_fast(monkeypatch):
    calls = _patch_post(monkeypatch, [_FakeReply(400)])
    backend = HttpBackend(
        "https://api.example.com", api_key="k", sleeper=lambda _s: None
    )
    with pytest.raises(TransportError, match="status 400"):
        backend.complete(req("ping"))
    assert len(calls) == 1


def test_http_429_is_transient(monkeypatch):
    calls = _patch_post(monkeypatch, [_FakeReply(429), _FakeReply(200, "fine")])
    backend = HttpBackend(
        "https://api.example.com", api_key="k", sleeper=lambda _s: None
    )
    assert backend.complete(req("ping")).content == "fine"
    assert len(calls) == 2


def test_http_requires_credential(monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    from dytag.gateway import CredentialError

    with pytest.raises(CredentialError, match="LLM_API_KEY"):
        HttpBackend("https://api.example.com")


# ----------------------------------------------------------------------
# re-ask policy


def _reask_backend(final_reply):
    return MockBackend(
        [
            MockRule(
                "after-reask",
                lambda r, t: REASK_MESSAGE in t,
                lambda r, t: final_reply,
            ),
            MockRule("prose", lambda r, t: True, lambda r, t: "happy to help!"),
        ]
    )


def test_reask_once_then_parse(tmp_path):
    gw = Gateway(_reask_backend('{"Prediction": "A"}'), transcript_path=tmp_path / "t.jsonl")
    result = gw.complete_structured(req("classify"), CLASS_PREDICTION)
    assert result.value["Prediction"] == "A"
    assert result.reasked
    assert len(result.digests) == 2
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 2
    reask_request = json.loads(lines[1])["request"]
    assert reask_request["messages"][-1]["content"] == REASK_MESSAGE


def test_reask_failure_surfaces_parse_error():
    gw = Gateway(_reask_backend("still chatting"))
    with pytest.raises(StructuredParseError) as info:
        gw.complete_structured(req("classify"), CLASS_PREDICTION)
    assert len(info.value.digests) == 2
    assert info.value.content == "still chatting"


def test_no_reask_when_first_reply_parses():
    gw = Gateway(_reask_backend("unused"))
    ok = MockBackend([MockRule("json", lambda r, t: True, lambda r, t: '{"Prediction": "B"}')])
    result = Gateway(ok).complete_structured(req("classify"), CLASS_PREDICTION)
    assert not result.reasked and len(result.digests) == 1


# ----------------------------------------------------------------------
# mock backend


def test_mock_first_matching_rule_wins():
    backend = MockBackend(
        [
            MockRule("a", lambda r, t: "alpha" in t, lambda r, t: "A"),
            MockRule("b", lambda r, t: True, lambda r, t: "B"),
        ]
    )
    assert backend.complete(req("alpha beta")).content == "A"
    assert backend.complete(req("beta")).content == "B"


def test_mock_miss_is_an_error():
    backend = MockBackend([MockRule("a", lambda r, t: False, lambda r, t: "A")])
    with pytest.raises(MockMissError):
        backend.complete(req("anything"))


def test_mock_rule_file(tmp_path):
    spec = [
        {"match": {"substring": "greet"}, "respond": "hi"},
        {"match": {"regex": "nod+e"}, "respond": "matched"},
        {"match": {"metric": {"name": "HI", "op": ">", "value": 0}}, "respond": "1"},
    ]
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(spec))
    backend = MockBackend(load_mock_rules(path))
    assert backend.complete(req("please greet me")).content == "hi"
    assert backend.complete(req("a nodde here")).content == "matched"
    hi_prompt = (
        "Historical Interaction Count:\n"
        "The total number of past interactions between "
        "Source ID 1 and Destination ID 2: 3"
    )
    assert backend.complete(req(hi_prompt)).content == "1"


def test_mock_rule_file_rejects_bad_shapes(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text("{}")
    with pytest.raises(ValueError, match="nonempty JSON list"):
        load_mock_rules(path)
    path.write_text(json.dumps([{"match": {"telepathy": True}, "respond": "x"}]))
    with pytest.raises(ValueError, match="substring, regex, or metric"):
        load_mock_rules(path)


# ----------------------------------------------------------------------
# heuristic mock answers on real prompts


def _lp_prompt(store, u, v, t):
    from dytag.metrics import batch_evidence
    from dytag.tasks import assemble_prompt
    from dytag.tasks.prompts import PromptSettings
    from dytag.tasks.types import TaskQuery

    q = TaskQuery(index=0, task="lp", source=u, destination=v, t=t, truth=0)
    ev = batch_evidence(store, [(u, v, t)])[0]
    return assemble_prompt(q, "structure", ev, None, PromptSettings(model="m"))


def test_heuristic_lp_answers(toy):
    backend = heuristic_mock()
    assert backend.complete(_lp_prompt(toy, 1, 2, 5.0)).content == "1"  # HI = 2
    assert backend.complete(_lp_prompt(toy, 2, 3, 3.0)).content == "0"  # cold pair


def test_heuristic_ec_answers_modal_pair_label(toy):
    from dytag.metrics import batch_evidence
    from dytag.store import chronological_split
    from dytag.tasks import assemble_prompt, ordered_class_list
    from dytag.tasks.prompts import PromptSettings
    from dytag.tasks.types import TaskQuery

    split = chronological_split(toy)
    classes = [toy.label_text(lab) for lab in ordered_class_list(split)]
    q = TaskQuery(index=0, task="ec", source=1, destination=2, t=5.0, truth=0)
    ev = batch_evidence(toy, [(1, 2, 5.0)])[0]
    prompt = assemble_prompt(
        q, "structure", ev, None, PromptSettings(model="m"), store=toy, class_names=classes
    )
    reply = heuristic_mock().complete(prompt)
    assert json.loads(reply.content) == {"Prediction": "A"}


# ----------------------------------------------------------------------
# replay


def test_replay_round_trip(tmp_path, toy):
    path = tmp_path / "t.jsonl"
    gw = Gateway(heuristic_mock(), transcript_path=path)
    warm = _lp_prompt(toy, 1, 2, 5.0)
    cold = _lp_prompt(toy, 2, 3, 3.0)
    live = [gw.complete(warm).content, gw.complete(cold).content]

    replay = Gateway(ReplayBackend(path))
    assert [replay.complete(warm).content, replay.complete(cold).content] == live
    assert replay.complete(warm).backend == "replay"


def test_replay_miss_names_digest(tmp_path, toy):
    path = tmp_path / "t.jsonl"
    Gateway(heuristic_mock(), transcript_path=path).complete(_lp_prompt(toy, 1, 2, 5.0))
    replay = Gateway(ReplayBackend(path))
    unseen = req("never recorded")
    with pytest.raises(ReplayMissError) as info:
        replay.complete(unseen)
    assert request_digest(unseen) in str(info.value)


def test_replay_duplicate_digest_first_wins(tmp_path):
    path = tmp_path / "t.jsonl"
    gw = Gateway(
        MockBackend([MockRule("any", lambda r, t: True, lambda r, t: "first")]),
        transcript_path=path,
    )
    gw.complete(req("same"))
    # hand-append a conflicting record under the same digest
    record = json.loads(path.read_text().splitlines()[0])
    record["response"]["content"] = "second"
    with path.open("a") as fh:
        fh.write(json.dumps(record) + "\n")
    assert ReplayBackend(path).complete(req("same")).content == "first"


def test_replay_empty_transcript_rejected(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text("")
    with pytest.raises(ValueError, match="no records"):
        ReplayBackend(path)
