"""Answerers and judges for the ANSWER and EVALUATE phases.

The extractive answerer works offline. The remote answerer and judge speak
the OpenAI-compatible chat-completions protocol (``POST {model, messages}`` ->
``choices[0].message.content``), which most hosted and local LLM servers expose.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from pathlib import Path
from string import Template
from typing import Protocol, Sequence

from .dataset import Question

PROMPT_DIR = Path(__file__).with_name("prompts")

_ANSWER_PROMPT = {
    "temporal": "answer_temporal",
    "temporal_reasoning": "answer_temporal",
    "ss_preference": "answer_preference",
    "knowledge_update": "answer_knowledge_update",
}
_JUDGE_PROMPT = {
    "temporal": "judge_temporal",
    "temporal_reasoning": "judge_temporal",
    "ss_preference": "judge_preference",
    "knowledge_update": "judge_knowledge_update",
}


@lru_cache(maxsize=None)
def load_prompt(name: str) -> Template:
    return Template((PROMPT_DIR / f"{name}.txt").read_text("utf-8"))


def answer_prompt(question: Question, memories: Sequence[str]) -> str:
    tmpl = load_prompt(_ANSWER_PROMPT.get(question.question_type, "answer_default"))
    notes = "\n".join(f"- {m}" for m in memories) or "- (none)"
    return tmpl.substitute(memories=notes, question=question.question, now=question.now or "an unknown date")


def judge_prompt(question: Question, answer: str) -> str:
    tmpl = load_prompt(_JUDGE_PROMPT.get(question.question_type, "judge_default"))
    return tmpl.substitute(question=question.question, gold=question.answer, answer=answer)


class AnswerError(RuntimeError):
    pass


class Answerer(Protocol):
    def answer(self, question: Question, memories: Sequence[str]) -> str: ...


class Judge(Protocol):
    def is_correct(self, question: Question, answer: str) -> bool: ...


class ExtractiveAnswerer:
    """Concatenates the contents of the top ``answer_k`` retrieved memories."""

    def __init__(self, answer_k: int = 1) -> None:
        if answer_k < 1:
            raise ValueError("answer_k must be >= 1")
        self.answer_k = answer_k

    def answer(self, question: Question, memories: Sequence[str]) -> str:
        return " ".join(memories[: self.answer_k])


class ChatClient:
    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0, client=None) -> None:
        import httpx

        self.endpoint = endpoint
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, prompt: str) -> str:
        import httpx

        body = {"model": self.model, "temperature": 0, "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            return str(resp.json()["choices"][0]["message"]["content"]).strip()
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise AnswerError(f"chat completion failed: {exc}") from exc


class RemoteAnswerer:
    def __init__(self, chat: ChatClient) -> None:
        self.chat = chat

    def answer(self, question: Question, memories: Sequence[str]) -> str:
        return self.chat.complete(answer_prompt(question, memories))


_LABEL = re.compile(r"\b(CORRECT|WRONG)\b")


def parse_label(text: str) -> bool:
    """Read a CORRECT/WRONG verdict from JSON or from free text."""
    try:
        data = json.loads(text)
        if isinstance(data, dict) and "label" in data:
            return str(data["label"]).strip().upper() == "CORRECT"
    except ValueError:
        pass
    m = _LABEL.search(text.upper())
    if m is None:
        raise AnswerError(f"judge gave no verdict: {text[:80]!r}")
    return m[1] == "CORRECT"


class RemoteJudge:
    def __init__(self, chat: ChatClient) -> None:
        self.chat = chat

    def is_correct(self, question: Question, answer: str) -> bool:
        return parse_label(self.chat.complete(judge_prompt(question, answer)))
