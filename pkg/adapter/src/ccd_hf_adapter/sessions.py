"""Dual-branch decoding sessions.

A session holds two independent incremental caches, ``main`` and ``cd``,
primed from the same prompt. The engine absorbs chosen tokens into both but
sends placeholder ids down the cd branch where it wants masking, so the two
histories diverge; nothing one branch absorbs may ever leak into the other.
"""

from __future__ import annotations

import numpy as np

from ccd_hf_adapter.model import BranchState, CheckpointRunner

BRANCH_NAMES = ("main", "cd")


class AdapterSession:
    """Session state served over one connection.

    Per-branch counters are the served ``length`` fields; the engine checks
    them against its own ledger, so they must count absorbed tokens exactly.
    """

    def __init__(self, session_id: str) -> None:
        self.session_id = session_id
        self.branches: dict[str, BranchState] = {}

    def prime(self, runner: CheckpointRunner, prompt: list[int]) -> np.ndarray:
        """(Re)initialize both branches from a prompt; returns main logits.

        Both branches hold the same history afterwards, so only the main
        logits are worth returning. Fresh states are swapped in only after
        every feed succeeds, keeping the session intact on failure.
        """
        branches = {name: BranchState() for name in BRANCH_NAMES}
        logits = {name: runner.feed(state, prompt) for name, state in branches.items()}
        self.branches = branches
        return logits["main"]

    def lengths(self) -> dict[str, int]:
        return {name: state.length for name, state in self.branches.items()}
