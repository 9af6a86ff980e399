from __future__ import annotations

import json

import pytest

from codiq.core import Origin, Question
from codiq.gateway import ScriptedGateway
from codiq.judges import shuffle_permutation


def make_question(
    qid="q0",
    text="What is 2 + 2?",
    domain="math",
    dataset="test",
    round_index=0,
    token_length=None,
) -> Question:
    from codiq.gateway import estimate_tokens

    return Question(
        id=qid,
        domain=domain,
        text=text,
        origin=Origin(dataset, round_index),
        token_length=estimate_tokens(text) if token_length is None else token_length,
    )


def rank_json(groups, reasons=None) -> str:
    if reasons is None:
        reasons = [f"group {i}" for i in range(len(groups))]
    return json.dumps({"result": [list(g) for g in groups], "reason": reasons})


def verdict_json(solvable=True, confidence=0.95, reason="ok", missing=()) -> str:
    return json.dumps(
        {
            "solvable": solvable,
            "confidence": confidence,
            "reason": reason,
            "missing_info": list(missing),
        }
    )


def rank_entry(groups, tokens=None, reasons=None) -> dict:
    entry = {"tag": "rank", "response": rank_json(groups, reasons)}
    if tokens is not None:
        entry["tokens"] = tokens
    return entry


def rank_entry_original_order(groups_by_original, n, shuffle_seed, tokens=None) -> dict:
    """Script a ranking over *original* indices for a seeded-shuffle call.

    The model sees shuffled indices, so each original index i is written as
    perm.index(i) in the scripted response.
    """
    perm = shuffle_permutation(n, shuffle_seed)
    shuffled_groups = [[perm.index(i) for i in g] for g in groups_by_original]
    return rank_entry(shuffled_groups, tokens=tokens)


def verify_entry(solvable=True, confidence=0.95, reason="ok", missing=(), tokens=None) -> dict:
    entry = {"tag": "verify", "response": verdict_json(solvable, confidence, reason, missing)}
    if tokens is not None:
        entry["tokens"] = tokens
    return entry


def generate_entry(text, tokens=None) -> dict:
    entry = {"tag": "generate", "response": text}
    if tokens is not None:
        entry["tokens"] = tokens
    return entry


def scripted(entries) -> ScriptedGateway:
    return ScriptedGateway(entries)


class AutoGateway:
    """Content-computed fake: responses are pure functions of the request,
    so behavior is deterministic under any thread interleaving."""

    def __init__(self):
        import threading

        self._lock = threading.Lock()
        self.calls = []

    def role_config(self, tag):
        from codiq.gateway import RoleConfig

        return RoleConfig(url=f"fake://{tag}", model=f"fake-{tag}")

    def chat(self, tag, user_prompt, system_prompt=None):
        from codiq.gateway import ChatRequest

        request = ChatRequest(
            model_name=f"fake-{tag}",
            system_prompt=system_prompt or "sys",
            user_prompt=user_prompt,
            max_tokens=64,
            temperature=0.0,
            request_tag=tag,
        )
        return self.complete(request)

    def complete(self, request):
        import re

        from codiq.gateway import ChatResponse

        with self._lock:
            self.calls.append(request)
        prompt = request.user_prompt
        if request.request_tag == "generate":
            original = prompt.split("Original Problem:\n", 1)[1]
            original = original.split("\n\n## Output Format", 1)[0]
            text = original + " +"
        elif request.request_tag == "rank":
            n = len(re.findall(r"(?m)^Question \d+: ", prompt))
            text = rank_json([list(range(n))])
        elif request.request_tag == "verify":
            text = verdict_json(True, 0.9)
        else:
            text = "{}"
        return ChatResponse(
            text=text, prompt_tokens=10, completion_tokens=20, reported_usage=True
        )


class LevelRankGateway(AutoGateway):
    """Ranks by a ``level=<int>`` marker embedded in each question text, so
    scores depend on content alone, never on presentation order."""

    def complete(self, request):
        import re

        from codiq.gateway import ChatResponse

        if request.request_tag != "rank":
            return super().complete(request)
        with self._lock:
            self.calls.append(request)
        entries = re.findall(r"(?m)^Question (\d+): .*?level=(\d+)", request.user_prompt)
        by_level: dict[int, list[int]] = {}
        for idx, level in entries:
            by_level.setdefault(int(level), []).append(int(idx))
        groups = [sorted(by_level[level]) for level in sorted(by_level)]
        return ChatResponse(
            text=rank_json(groups), prompt_tokens=5, completion_tokens=9,
            reported_usage=True,
        )


@pytest.fixture
def seed_question() -> Question:
    return make_question()


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Tests must never touch the network; any HTTP attempt fails loudly."""

    def _panic(*args, **kwargs):
        raise AssertionError("network I/O attempted during tests")

    monkeypatch.setattr("requests.sessions.Session.request", _panic)
