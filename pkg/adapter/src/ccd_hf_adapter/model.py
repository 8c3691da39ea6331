"""Deterministic incremental wrapper around a causal-LM checkpoint.

The protocol promises bit-identical logits for identical per-branch token
histories, and chunk-consistency down to the bit. Batched prefill cannot
keep that promise on common BLAS backends: the reduction order changes with
the GEMM shape, so absorbing [a, b, c] in one call and in three calls gives
logits that differ in the last bits. Repeating the same call pattern is
bitwise stable, so every prompt and append here is absorbed strictly one
token at a time. Throughput is not this adapter's job; being a reference
logit source is.
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer, DynamicCache
from transformers.utils import logging as hf_logging

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class DeterminismError(RuntimeError):
    """The startup probe could not establish run-to-run stable logits."""


class BranchState:
    """One branch's incremental cache plus its absorbed-token counter."""

    def __init__(self) -> None:
        self.cache = DynamicCache()
        self.length = 0

    def __repr__(self) -> str:
        return f"<BranchState length={self.length}>"


class CheckpointRunner:
    """Loads a checkpoint in a fixed numeric mode and feeds it token by token.

    The runner owns everything the server advertises in hello_ok: vocabulary
    size, the resolved placeholder id, and the end-of-text id. Construction
    fails rather than serve a model whose numerics cannot be pinned down.
    """

    def __init__(
        self,
        model_id: str,
        *,
        dtype: str = "float32",
        placeholder_override: int | None = None,
    ) -> None:
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype!r}; choose from {sorted(_DTYPES)}")
        self.model_id = model_id
        self.dtype = dtype
        hf_logging.disable_progress_bar()  # keep server stderr line-oriented
        self.model = AutoModelForCausalLM.from_pretrained(model_id)
        self.model.to(_DTYPES[dtype])
        self.model.eval()
        self.model.requires_grad_(False)
        config = self.model.config
        self.vocab_size = int(config.vocab_size)
        self.max_positions = int(
            getattr(config, "n_positions", None)
            or getattr(config, "max_position_embeddings", None)
            or 0
        )
        self.tokenizer = _try_tokenizer(model_id)
        self.eos_id = self._resolve_eos()
        self.placeholder_id = self._resolve_placeholder(placeholder_override)
        self._probe_determinism()

    # -- special token resolution -------------------------------------------

    def _resolve_eos(self) -> int:
        eos = getattr(self.model.config, "eos_token_id", None)
        if isinstance(eos, (list, tuple)):
            eos = eos[0] if eos else None
        if eos is None and self.tokenizer is not None:
            eos = self.tokenizer.eos_token_id
        if eos is None:
            raise ValueError(f"checkpoint {self.model_id!r} advertises no end-of-text token")
        return self._checked_id(int(eos), "end-of-text")

    def _resolve_placeholder(self, override: int | None) -> int:
        # explicit choice first, then a reserved pad-style token, then eos
        if override is not None:
            return self._checked_id(override, "placeholder")
        if self.tokenizer is not None:
            pad = getattr(self.tokenizer, "pad_token_id", None)
            if pad is not None:
                return self._checked_id(int(pad), "placeholder")
            extras = getattr(self.tokenizer, "additional_special_tokens", None) or []
            for token in extras:
                if "pad" in str(token).lower():
                    return self._checked_id(
                        int(self.tokenizer.convert_tokens_to_ids(token)), "placeholder"
                    )
        pad = getattr(self.model.config, "pad_token_id", None)
        if pad is not None:
            return self._checked_id(int(pad), "placeholder")
        return self.eos_id

    def _checked_id(self, token: int, role: str) -> int:
        if not 0 <= token < self.vocab_size:
            raise ValueError(
                f"{role} token {token} outside vocabulary of size {self.vocab_size}"
            )
        return token

    # -- inference ------------------------------------------------------------

    def feed(self, state: BranchState, tokens: list[int]) -> np.ndarray:
        """Absorb tokens in order; returns logits for the next position.

        One forward call per token: any split of a sequence into chunks then
        reproduces the same call pattern and therefore the same bits.
        """
        if not tokens:
            raise ValueError("feed requires at least one token")
        with torch.no_grad():
            for token in tokens:
                ids = torch.tensor([[token]], dtype=torch.long)
                out = self.model(input_ids=ids, past_key_values=state.cache, use_cache=True)
                state.cache = out.past_key_values
                state.length += 1
        return out.logits[0, -1].numpy().copy()

    def _probe_determinism(self) -> None:
        if self.model.training:
            raise DeterminismError("model is in training mode")
        probe = [self.eos_id] * 3
        first = self.feed(BranchState(), probe)
        second = self.feed(BranchState(), probe)
        if first.tobytes() != second.tobytes():
            raise DeterminismError(
                "identical probe histories produced different logits; refusing to serve"
            )


def _try_tokenizer(model_id: str):
    # serving works tokenizer-free; only special-token resolution and the
    # tokenize/detokenize commands need one
    try:
        return AutoTokenizer.from_pretrained(model_id)
    except Exception:
        return None
