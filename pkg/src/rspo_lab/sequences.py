"""Token vocabularies and prompt/completion sequences.

A Sequence always carries the prompt (never corrupted) and the completion
together with per-position masked flags.  Masked positions keep a sentinel
token value; the flags are the authoritative record of corruption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Sentinel stored in the token array at masked completion positions.
MASKED_TOKEN = -1


@dataclass(frozen=True)
class Vocab:
    """Ordered token alphabet with a distinguished mask token."""

    tokens: tuple[str, ...]
    mask_id: int

    def __post_init__(self):
        if not 0 <= self.mask_id < len(self.tokens):
            raise ValueError(f"mask_id {self.mask_id} out of range for {len(self.tokens)} tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocab tokens must be distinct")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def index(self, char: str) -> int:
        try:
            return self.tokens.index(char)
        except ValueError:
            raise KeyError(f"character {char!r} not in vocab") from None


@dataclass
class Sequence:
    """A prompt plus a (possibly corrupted) completion."""

    prompt: np.ndarray
    completion: np.ndarray
    masked: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.prompt = np.asarray(self.prompt, dtype=np.int64)
        self.completion = np.asarray(self.completion, dtype=np.int64)
        if self.masked is None:
            self.masked = np.zeros(len(self.completion), dtype=bool)
        else:
            self.masked = np.asarray(self.masked, dtype=bool)
        if len(self.masked) != len(self.completion):
            raise ValueError("masked flags must match completion length")
        if len(self.completion) < 1:
            raise ValueError("completion must have at least one token")

    @property
    def prompt_len(self) -> int:
        return len(self.prompt)

    @property
    def completion_len(self) -> int:
        return len(self.completion)

    @property
    def total_len(self) -> int:
        return len(self.prompt) + len(self.completion)

    def is_clean(self) -> bool:
        return not self.masked.any()

    def copy(self) -> "Sequence":
        return Sequence(self.prompt.copy(), self.completion.copy(), self.masked.copy())

    def with_masked(self, positions) -> "Sequence":
        """Return a copy masked exactly at the given completion positions."""
        out = self.copy()
        out.masked[:] = False
        idx = np.asarray(list(positions), dtype=np.int64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.completion_len:
                raise ValueError("mask positions outside completion range")
            out.masked[idx] = True
            out.completion[idx] = MASKED_TOKEN
        return out
