"""Chat-completion gateway: prompt templates plus mock and HTTP backends.

The mock backend is a pure function of the request text and a label lexicon,
which keeps every offline test and experiment bit-reproducible. It routes on
the "Task:" line the default templates start with and reads the labelled
sections they render ("Question:", "Candidates:", "Relations:", "Sentences:",
"Document <id>:"), so edited templates should keep those markers if mock runs
are still wanted.

The HTTP backend speaks the common chat-completions wire protocol:
POST {base}/chat/completions with bearer-token auth, retrying transient
failures with exponential backoff.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from importlib import resources

from .kg import normalize_label
from .tokens import DEFAULT_SCHEME, count_tokens, tokenize

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "PromptTemplate",
    "Backend",
    "MockBackend",
    "HttpBackend",
    "GatewayError",
    "TransportError",
    "AuthFailureError",
    "BudgetExceededError",
    "GatewayTimeoutError",
    "MissingBindingError",
    "render_template",
    "load_templates",
    "default_gen_instruction",
    "parse_term_list",
    "parse_id_list",
    "MOCK_REASON_PREAMBLE",
]

ENV_API_BASE = "GRAPHRAG_API_BASE"
ENV_API_KEY = "GRAPHRAG_API_KEY"
ENV_MODEL = "GRAPHRAG_MODEL"

TEMPLATE_NAMES = ("retrieve", "filter", "reason")

MOCK_REASON_PREAMBLE = "Based on the retrieved evidence:"


class GatewayError(Exception):
    """Base class for backend failures."""


class TransportError(GatewayError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthFailureError(GatewayError):
    pass


class BudgetExceededError(GatewayError):
    pass


class GatewayTimeoutError(GatewayError):
    pass


class MissingBindingError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"template references unbound placeholder {self.name!r}"


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 1024


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] | None = None


class Backend(Protocol):
    kind: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))


def render_template(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every referenced placeholder, single pass, no re-expansion."""
    missing = template.placeholders() - bindings.keys()
    if missing:
        raise MissingBindingError(sorted(missing)[0])
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], template.body)


def _read_prompt(name: str, directory: Path | None) -> str:
    if directory is not None:
        return (directory / f"{name}.txt").read_text(encoding="utf-8")
    return resources.files(__package__).joinpath(f"prompts/{name}.txt").read_text("utf-8")


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load the retrieve/filter/reason templates from a directory or the defaults."""
    directory = Path(directory) if directory is not None else None
    return {
        name: PromptTemplate(name=name, body=_read_prompt(name, directory))
        for name in TEMPLATE_NAMES
    }


def default_gen_instruction() -> str:
    """Instruction text used by dataset generation."""
    return _read_prompt("gen_qa", None)


# ---------------------------------------------------------------------------
# Completion parsing (shared by pipeline and harness)
# ---------------------------------------------------------------------------


def parse_term_list(completion: str) -> list[str]:
    """Split a completion on newlines/commas, trim, drop empties, dedupe in order."""
    terms: list[str] = []
    seen: set[str] = set()
    for piece in re.split(r"[\n,]+", completion):
        term = piece.strip()
        key = normalize_label(term)
        if term and key not in seen:
            seen.add(key)
            terms.append(term)
    return terms


def parse_id_list(completion: str) -> list[int] | None:
    """Extract an integer id list; None when the completion has no such shape.

    Accepts a JSON integer array, a bracketed array embedded in text, or a
    bare comma/whitespace-separated list of integers.
    """
    text = completion.strip()
    if not text:
        return None
    candidates = [text]
    bracketed = re.search(r"\[[^\[\]]*\]", text)
    if bracketed:
        candidates.append(bracketed.group(0))
    for snippet in candidates:
        try:
            data = json.loads(snippet)
        except json.JSONDecodeError:
            continue
        if isinstance(data, list) and all(
            isinstance(x, int) and not isinstance(x, bool) for x in data
        ):
            return list(data)
    pieces = [p for p in re.split(r"[\s,]+", text.strip("[]")) if p]
    if pieces and all(re.fullmatch(r"-?\d+", p) for p in pieces):
        return [int(p) for p in pieces]
    return None


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

_SECTION_HEADERS = ("Question:", "Candidates:", "Relations:", "Sentences:")
_DOC_HEADER_RE = re.compile(r"^Document (.+):$")

# Rendering scaffold words that never count as content when the mock filter
# compares a candidate block against the question.
_SCAFFOLD_TOKENS = {"target", "causal", "weak_causal", "status", "hierarchical"}


def _split_sections(prompt: str) -> tuple[dict[str, str], str | None]:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    doc_id: str | None = None
    for line in prompt.splitlines():
        if line in _SECTION_HEADERS:
            current = sections.setdefault(line[:-1].lower(), [])
            continue
        doc_match = _DOC_HEADER_RE.match(line)
        if doc_match:
            doc_id = doc_match.group(1)
            current = sections.setdefault("document", [])
            continue
        if current is not None:
            current.append(line)
    return {k: "\n".join(v).strip() for k, v in sections.items()}, doc_id


def _first_sentence(text: str) -> str:
    stripped = text.strip()
    for i, ch in enumerate(stripped):
        if ch in "。．.!?！？\n":
            return stripped[: i + 1].strip()
    return stripped


class MockBackend:
    """Deterministic offline stand-in for a chat-completions service.

    retrieve: emits every lexicon entry found in the question, sorted.
    filter:   keeps candidate blocks sharing at least one content token
              with the question, answering with a JSON id array.
    reason:   echoes the relation and sentence lines after a fixed preamble.
    dataset generation: fixed question stem plus the document's first
              sentence as the answer, as a JSON object.
    """

    kind = "mock"

    def __init__(self, lexicon: Iterable[str] = ()):
        self.lexicon = tuple(sorted(set(lexicon)))

    @classmethod
    def for_graph(cls, graph) -> "MockBackend":
        labels = [node.label for node in graph.nodes.values()]
        labels.extend(graph.aliases.keys())
        return cls(labels)

    def complete(self, request: ChatRequest) -> ChatResponse:
        lines = [l for l in request.user_prompt.splitlines() if l.strip()]
        task = lines[0] if lines else ""
        sections, doc_id = _split_sections(request.user_prompt)
        if task == "Task: term retrieval.":
            return ChatResponse(text=self._retrieve(sections.get("question", "")))
        if task == "Task: sub-graph filtering.":
            return ChatResponse(
                text=self._filter(sections.get("question", ""), sections.get("candidates", ""))
            )
        if task == "Task: failure-cause reasoning.":
            return ChatResponse(
                text=self._reason(sections.get("relations", ""), sections.get("sentences", ""))
            )
        if task == "Task: dataset generation.":
            return ChatResponse(text=self._gen_qa(doc_id, sections.get("document", "")))
        raise ValueError(f"mock backend cannot route request starting with {task!r}")

    def _retrieve(self, question: str) -> str:
        haystack = normalize_label(question)
        hits = [term for term in self.lexicon if normalize_label(term) in haystack]
        return "\n".join(hits)

    def _filter(self, question: str, candidates: str) -> str:
        question_tokens = set(tokenize(question, DEFAULT_SCHEME))
        kept: list[int] = []
        for block in re.split(r"\n\s*\n", candidates):
            match = re.match(r"\[(\d+)\]", block.strip())
            if not match:
                continue
            block_tokens = {
                t
                for t in tokenize(block, DEFAULT_SCHEME)
                if t not in _SCAFFOLD_TOKENS and not t.isdigit()
            }
            if block_tokens & question_tokens:
                kept.append(int(match.group(1)))
        return json.dumps(kept)

    def _reason(self, relations: str, sentences: str) -> str:
        lines = [l for l in relations.splitlines() if l.strip()]
        lines += [l for l in sentences.splitlines() if l.strip()]
        if not lines:
            return MOCK_REASON_PREAMBLE
        return MOCK_REASON_PREAMBLE + "\n" + "\n".join(lines)

    def _gen_qa(self, doc_id: str | None, document: str) -> str:
        question = f"What failure chain is described in document {doc_id}?"
        return json.dumps(
            {"question": question, "answer": _first_sentence(document)},
            ensure_ascii=False,
        )


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------

_RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


@dataclass
class HttpBackend:
    """Client for a chat-completions endpoint with bounded retries."""

    base_url: str
    model: str
    api_key: str = ""
    max_retries: int = 3
    backoff_seconds: float = 0.5
    timeout_seconds: float = 60.0
    max_in_flight: int = 4
    context_limit: int | None = None
    kind: str = field(default="http", init=False)

    def __post_init__(self):
        self.base_url = self.base_url.rstrip("/")
        self._gate = threading.Semaphore(self.max_in_flight)

    @classmethod
    def from_env(cls, **overrides) -> "HttpBackend":
        import os

        base = overrides.pop("base_url", os.environ.get(ENV_API_BASE, ""))
        model = overrides.pop("model", os.environ.get(ENV_MODEL, ""))
        key = overrides.pop("api_key", os.environ.get(ENV_API_KEY, ""))
        if not base or not model:
            raise GatewayError(
                f"HTTP backend needs {ENV_API_BASE} and {ENV_MODEL} (and usually {ENV_API_KEY})"
            )
        return cls(base_url=base, model=model, api_key=key, **overrides)

    def complete(self, request: ChatRequest) -> ChatResponse:
        import requests

        if self.context_limit is not None:
            prompt_tokens = count_tokens(request.system_prompt) + count_tokens(
                request.user_prompt
            )
            if prompt_tokens > self.context_limit:
                raise BudgetExceededError(
                    f"prompt is {prompt_tokens} tokens, backend context is {self.context_limit}"
                )

        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        url = f"{self.base_url}/chat/completions"
        last_error: GatewayError = TransportError("no attempt made")
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = requests.post(
                        url, json=payload, headers=headers, timeout=self.timeout_seconds
                    )
            except requests.Timeout as exc:
                last_error = GatewayTimeoutError(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = TransportError(f"connection failed: {exc}")
                continue

            if response.status_code in (401, 403):
                raise AuthFailureError(f"authentication failed ({response.status_code})")
            if response.status_code == 400 and "context" in response.text.lower():
                raise BudgetExceededError(response.text)
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = TransportError(
                    f"server returned {response.status_code}", status=response.status_code
                )
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"server returned {response.status_code}: {response.text[:200]}",
                    status=response.status_code,
                )
            return self._parse(response.json())
        raise last_error

    @staticmethod
    def _parse(data: dict) -> ChatResponse:
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc!r}") from exc
        usage = None
        raw_usage = data.get("usage")
        if isinstance(raw_usage, dict):
            prompt = raw_usage.get("prompt_tokens")
            completion = raw_usage.get("completion_tokens")
            if isinstance(prompt, int) and isinstance(completion, int):
                usage = (prompt, completion)
        return ChatResponse(text=text, usage=usage)
