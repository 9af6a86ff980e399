"""Hidden-state runtimes: anything that can answer a question and hand back
per-generated-token hidden states from the final transformer layer.

Two implementations ship here: a deterministic stub for tests and offline
development, and a best-effort HuggingFace-backed runtime for real
extraction. The engine consuming the resulting feature files never sees a
runtime; the feature JSONL file is the only contract.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


class RuntimeUnavailable(RuntimeError):
    """The requested model runtime cannot be constructed in this environment."""


@dataclass
class StubRuntime:
    """Deterministic fake runtime.

    Hidden states are seeded by a CRC of (question text, pass index), so
    repeated extractions are byte-stable across processes. The generated
    window length is derived from the text unless pinned via ``length``.
    """

    d_model: int = 64
    length: int | None = None
    non_thinking: bool = False  # accepted for interface parity; no effect

    def window_length(self, text: str, max_window: int) -> int:
        if self.length is not None:
            return min(self.length, max_window)
        derived = 64 + zlib.crc32(text.encode("utf-8")) % 2000
        return min(derived, max_window)

    def hidden_states(self, text: str, max_window: int, pass_index: int = 0) -> np.ndarray:
        length = self.window_length(text, max_window)
        seed = zlib.crc32(f"{pass_index}::{text}".encode("utf-8"))
        rng = np.random.default_rng(seed)
        return rng.standard_normal((length, self.d_model)).astype(np.float32)


class HuggingFaceRuntime:
    """Final-layer hidden states from a local causal LM (loaded lazily).

    ``non_thinking`` is passed through to the chat template when the model
    family supports an ``enable_thinking`` switch; it is otherwise inert.
    """

    def __init__(self, model_name: str, device: str = "cpu", non_thinking: bool = True):
        try:
            import torch  # noqa: F401
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise RuntimeUnavailable(f"transformers/torch unavailable: {exc}") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModelForCausalLM.from_pretrained(
                model_name, output_hidden_states=True
            ).to(device)
        except Exception as exc:  # pragma: no cover - environment dependent
            raise RuntimeUnavailable(f"cannot load {model_name!r}: {exc}") from exc
        self.model.eval()
        self.device = device
        self.non_thinking = non_thinking
        self.d_model = int(self.model.config.hidden_size)

    def _prompt_ids(self, text: str):  # pragma: no cover - needs model weights
        if getattr(self.tokenizer, "chat_template", None):
            kwargs = {"add_generation_prompt": True, "return_tensors": "pt"}
            try:
                return self.tokenizer.apply_chat_template(
                    [{"role": "user", "content": text}],
                    enable_thinking=not self.non_thinking,
                    **kwargs,
                )
            except TypeError:
                return self.tokenizer.apply_chat_template(
                    [{"role": "user", "content": text}], **kwargs
                )
        return self.tokenizer(text, return_tensors="pt").input_ids

    def window_length(self, text: str, max_window: int) -> int:  # pragma: no cover
        return max_window

    def hidden_states(self, text: str, max_window: int, pass_index: int = 0) -> np.ndarray:
        # pragma: no cover - needs model weights
        import torch

        torch.manual_seed(pass_index)
        input_ids = self._prompt_ids(text).to(self.device)
        with torch.no_grad():
            generated = self.model.generate(
                input_ids,
                max_new_tokens=max_window,
                do_sample=True,
                return_dict_in_generate=True,
                output_hidden_states=True,
            )
        # One tuple of per-layer states per generated token; keep the last layer.
        states = [step[-1][0, -1, :] for step in generated.hidden_states]
        return torch.stack(states).float().cpu().numpy()


def build_runtime(kind: str, **kwargs):
    if kind == "stub":
        allowed = {k: v for k, v in kwargs.items() if k in ("d_model", "length", "non_thinking")}
        return StubRuntime(**allowed)
    if kind == "hf":
        return HuggingFaceRuntime(
            kwargs["model_name"],
            device=kwargs.get("device", "cpu"),
            non_thinking=kwargs.get("non_thinking", True),
        )
    raise RuntimeUnavailable(f"unknown runtime kind {kind!r}")
