from __future__ import annotations

import json

import pytest
import requests

from kgrag.llm import (
    MOCK_REASON_PREAMBLE,
    AuthFailureError,
    BudgetExceededError,
    ChatRequest,
    GatewayTimeoutError,
    HttpBackend,
    MissingBindingError,
    MockBackend,
    PromptTemplate,
    TransportError,
    default_gen_instruction,
    load_templates,
    parse_id_list,
    parse_term_list,
    render_template,
)


class TestRenderTemplate:
    def test_basic_substitution(self):
        template = PromptTemplate(name="retrieve", body="Q: {question}")
        assert render_template(template, {"question": "x"}) == "Q: x"

    def test_missing_binding(self):
        template = PromptTemplate(name="reason", body="{subgraphs}")
        with pytest.raises(MissingBindingError) as err:
            render_template(template, {"question": "x"})
        assert err.value.name == "subgraphs"

    def test_doubled_placeholder_substitutes_both_sites(self):
        template = PromptTemplate(name="retrieve", body="{question} / {question}")
        assert render_template(template, {"question": "a"}) == "a / a"

    def test_unreferenced_bindings_ignored(self):
        template = PromptTemplate(name="retrieve", body="Q: {question}")
        assert render_template(template, {"question": "x", "sentences": "y"}) == "Q: x"

    def test_binding_text_is_not_reexpanded(self):
        template = PromptTemplate(name="retrieve", body="{question}")
        rendered = render_template(template, {"question": "{question}"})
        assert rendered == "{question}"

    def test_literal_json_braces_are_not_placeholders(self):
        template = PromptTemplate(name="filter", body='reply {"ids": [1]} for {question}')
        assert template.placeholders() == {"question"}


class TestTemplateFiles:
    def test_defaults_cover_all_names(self):
        templates = load_templates()
        assert set(templates) == {"retrieve", "filter", "reason"}
        assert templates["reason"].placeholders() == {"question", "subgraphs", "sentences"}
        assert templates["filter"].placeholders() == {"question", "candidates"}

    def test_directory_override(self, tmp_path):
        for name in ("retrieve", "filter", "reason"):
            (tmp_path / f"{name}.txt").write_text(f"{name}: {{question}}", encoding="utf-8")
        templates = load_templates(tmp_path)
        assert templates["filter"].body == "filter: {question}"

    def test_gen_instruction_available(self):
        assert "JSON" in default_gen_instruction()


class TestParsers:
    def test_terms_split_trim_dedupe(self):
        assert parse_term_list("clutch\n engine ,clutch\n\n") == ["clutch", "engine"]

    def test_terms_dedupe_is_case_insensitive(self):
        assert parse_term_list("Clutch\nclutch") == ["Clutch"]

    def test_id_list_json(self):
        assert parse_id_list("[1, 3]") == [1, 3]
        assert parse_id_list("[]") == []

    def test_id_list_embedded_array(self):
        assert parse_id_list("keep these: [2, 4] thanks") == [2, 4]

    def test_id_list_bare_tokens(self):
        assert parse_id_list("1, 3 5") == [1, 3, 5]

    def test_id_list_rejects_prose(self):
        assert parse_id_list("one and three") is None
        assert parse_id_list("") is None
        assert parse_id_list('["a"]') is None


def mock_request(template_name: str, **bindings) -> ChatRequest:
    template = load_templates()[template_name]
    return ChatRequest(system_prompt="", user_prompt=render_template(template, bindings))


class TestMockBackend:
    def test_retrieve_emits_lexicon_hits_only(self):
        backend = MockBackend(["clutch", "engine"])
        request = mock_request("retrieve", question="clutch judders at launch")
        assert backend.complete(request).text == "clutch"

    def test_retrieve_no_hits(self):
        backend = MockBackend(["gearbox"])
        request = mock_request("retrieve", question="the cabin light flickers")
        assert backend.complete(request).text == ""

    def test_retrieve_matches_casefolded_and_japanese(self):
        backend = MockBackend(["クラッチ", "Engine"])
        request = mock_request("retrieve", question="クラッチが滑るのはなぜですか。engine も確認。")
        assert backend.complete(request).text.splitlines() == ["Engine", "クラッチ"]

    def test_filter_keeps_blocks_sharing_content_tokens(self):
        candidates = "\n\n".join(
            [
                "[1] target: clutch\nclutch -[causal]-> judder",
                "[2] target: engine\nengine -[status]-> overheating",
                "[3] target: clutch pedal\nclutch pedal -[status]-> sticking",
                "[4] target: radiator\nradiator -[status]-> leak",
            ]
        )
        backend = MockBackend()
        request = mock_request(
            "filter", question="why does the clutch judder", candidates=candidates
        )
        assert json.loads(backend.complete(request).text) == [1, 3]

    def test_filter_ignores_scaffold_words(self):
        candidates = "[1] target: radiator\nradiator -[causal]-> leak"
        backend = MockBackend()
        request = mock_request(
            "filter", question="is the target causal status", candidates=candidates
        )
        assert json.loads(backend.complete(request).text) == []

    def test_reason_echoes_evidence_after_preamble(self):
        request = mock_request(
            "reason",
            question="q",
            subgraphs="[1] target: A\nA -[causal]-> B",
            sentences="S one.",
        )
        text = MockBackend().complete(request).text
        assert text.splitlines() == [
            MOCK_REASON_PREAMBLE,
            "[1] target: A",
            "A -[causal]-> B",
            "S one.",
        ]

    def test_reason_with_no_evidence_is_preamble_only(self):
        request = mock_request("reason", question="q", subgraphs="", sentences="")
        assert MockBackend().complete(request).text == MOCK_REASON_PREAMBLE

    def test_gen_qa_uses_doc_id_and_first_sentence(self):
        instruction = default_gen_instruction()
        prompt = f"{instruction.rstrip()}\n\nDocument doc-7:\nFirst finding. Second finding."
        response = MockBackend().complete(ChatRequest(system_prompt="", user_prompt=prompt))
        data = json.loads(response.text)
        assert data["question"] == "What failure chain is described in document doc-7?"
        assert data["answer"] == "First finding."

    def test_identical_request_identical_response(self):
        backend = MockBackend(["clutch"])
        request = mock_request("retrieve", question="clutch slips")
        assert backend.complete(request) == backend.complete(request)

    def test_unroutable_request_rejected(self):
        with pytest.raises(ValueError, match="route"):
            MockBackend().complete(ChatRequest(system_prompt="", user_prompt="hello"))


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text or json.dumps(self._payload)

    def json(self):
        return self._payload


def completion_payload(text="ok"):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 2},
    }


@pytest.fixture
def no_sleep(monkeypatch):
    naps = []
    monkeypatch.setattr("kgrag.llm.time.sleep", naps.append)
    return naps


REQUEST = ChatRequest(system_prompt="sys", user_prompt="hi")


def make_backend(**kwargs):
    defaults = dict(base_url="http://llm.local/v1", model="m", api_key="k", backoff_seconds=0.5)
    defaults.update(kwargs)
    return HttpBackend(**defaults)


class TestHttpBackend:
    def test_success_sends_default_temperature_zero(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(url=url, payload=json, headers=headers)
            return FakeResponse(payload=completion_payload("answer"))

        monkeypatch.setattr(requests, "post", fake_post)
        response = make_backend().complete(REQUEST)
        assert response.text == "answer"
        assert response.usage == (5, 2)
        assert seen["url"] == "http://llm.local/v1/chat/completions"
        assert seen["payload"]["temperature"] == 0.0
        assert seen["payload"]["messages"][0] == {"role": "system", "content": "sys"}
        assert seen["headers"]["Authorization"] == "Bearer k"

    def test_retries_connection_errors_with_backoff(self, monkeypatch, no_sleep):
        calls = {"n": 0}

        def flaky_post(url, **kwargs):
            calls["n"] += 1
            if calls["n"] < 3:
                raise requests.ConnectionError("down")
            return FakeResponse(payload=completion_payload())

        monkeypatch.setattr(requests, "post", flaky_post)
        assert make_backend(max_retries=3).complete(REQUEST).text == "ok"
        assert calls["n"] == 3
        assert no_sleep == [0.5, 1.0]

    def test_unreachable_host_exhausts_retries(self, monkeypatch, no_sleep):
        calls = {"n": 0}

        def dead_post(url, **kwargs):
            calls["n"] += 1
            raise requests.ConnectionError("no route")

        monkeypatch.setattr(requests, "post", dead_post)
        with pytest.raises(TransportError, match="connection failed"):
            make_backend(max_retries=2).complete(REQUEST)
        assert calls["n"] == 3

    def test_server_errors_retry_then_report_status(self, monkeypatch, no_sleep):
        monkeypatch.setattr(requests, "post", lambda url, **k: FakeResponse(status_code=503))
        with pytest.raises(TransportError) as err:
            make_backend(max_retries=1).complete(REQUEST)
        assert err.value.status == 503

    def test_auth_failure_is_immediate(self, monkeypatch, no_sleep):
        calls = {"n": 0}

        def unauthorized(url, **kwargs):
            calls["n"] += 1
            return FakeResponse(status_code=401)

        monkeypatch.setattr(requests, "post", unauthorized)
        with pytest.raises(AuthFailureError):
            make_backend().complete(REQUEST)
        assert calls["n"] == 1

    def test_timeouts_surface_as_timeout_error(self, monkeypatch, no_sleep):
        def slow_post(url, **kwargs):
            raise requests.Timeout("too slow")

        monkeypatch.setattr(requests, "post", slow_post)
        with pytest.raises(GatewayTimeoutError):
            make_backend(max_retries=1).complete(REQUEST)

    def test_context_overflow_maps_to_budget_error(self, monkeypatch):
        response = FakeResponse(status_code=400, text="maximum context length exceeded")
        monkeypatch.setattr(requests, "post", lambda url, **k: response)
        with pytest.raises(BudgetExceededError):
            make_backend().complete(REQUEST)

    def test_local_context_limit_precheck(self, monkeypatch):
        def fail_post(url, **kwargs):
            raise AssertionError("should not reach the network")

        monkeypatch.setattr(requests, "post", fail_post)
        backend = make_backend(context_limit=1)
        with pytest.raises(BudgetExceededError):
            backend.complete(ChatRequest(system_prompt="", user_prompt="three tokens here"))

    def test_in_flight_requests_are_bounded(self, monkeypatch):
        import threading
        import time as real_time

        active = {"now": 0, "peak": 0}
        lock = threading.Lock()

        def slow_post(url, **kwargs):
            with lock:
                active["now"] += 1
                active["peak"] = max(active["peak"], active["now"])
            real_time.sleep(0.02)
            with lock:
                active["now"] -= 1
            return FakeResponse(payload=completion_payload())

        monkeypatch.setattr(requests, "post", slow_post)
        backend = make_backend(max_in_flight=2)
        threads = [
            threading.Thread(target=lambda: backend.complete(REQUEST)) for _ in range(6)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert active["peak"] <= 2

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("GRAPHRAG_API_BASE", "http://llm.local/v1/")
        monkeypatch.setenv("GRAPHRAG_MODEL", "gpt-x")
        monkeypatch.setenv("GRAPHRAG_API_KEY", "secret")
        backend = HttpBackend.from_env()
        assert backend.base_url == "http://llm.local/v1"
        assert backend.model == "gpt-x"
        assert backend.api_key == "secret"
