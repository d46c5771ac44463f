"""Hash-chained test automaton replicated by the membership layer.

The state is a short hex digest; applying a batch of inputs folds them into
the chain in ascending processor order. Two replicas that applied the same
batches in the same order hold byte-identical states, so cross-processor
digest comparison is a complete agreement check.
"""

from __future__ import annotations

import hashlib


def _h(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def initial_state() -> str:
    return _h("genesis")


def apply_batch(state: str | None, msg) -> str:
    """Fold one agreed input batch into the chain. None entries are members
    with nothing to say (or non-members) and are skipped; an all-empty batch
    leaves the state untouched."""
    if state is None:
        state = initial_state()
    parts = [state]
    for j, m in enumerate(msg):
        if m is not None:
            parts.append(f"{j}:{m}")
    if len(parts) == 1:
        return state
    return _h("|".join(parts))


def digest_batch(msg) -> str:
    return hashlib.sha1(repr(tuple(msg)).encode()).hexdigest()[:12]


class InputFeed:
    """Deterministic per-processor input source."""

    def __init__(self, self_id: int):
        self.self_id = self_id
        self.count = 0

    def fetch(self) -> str:
        self.count += 1
        return f"m{self.self_id}.{self.count}"
