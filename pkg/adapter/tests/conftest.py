"""Shared fixtures: two tiny saved checkpoints and a direct-forward oracle.

``conformance_checkpoint`` advertises the same vocabulary geometry as the
recorded golden transcript (vocab 8, placeholder 0, eos 1) so the replay can
be compared byte for byte. ``text_checkpoint`` is larger (vocab 384) and
ships a byte-level BPE tokenizer for the parity, isolation, and CLI tests.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch
from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
from transformers import (
    DynamicCache,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
)

from ccd_hf_adapter import CheckpointRunner

TOKENIZER_CORPUS = [
    "the quick brown fox jumps over the lazy dog " * 3,
    "pack my box with five dozen liquor jugs",
    "how vexingly quick daft zebras jump!",
    "0123456789 !?.,:;'\"()-",
]


def _save_model(path, *, vocab_size: int, n_positions: int, seed: int) -> None:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=n_positions,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=1,
        eos_token_id=1,
        pad_token_id=0,
        attn_pdrop=0.0,
        embd_pdrop=0.0,
        resid_pdrop=0.0,
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    model.save_pretrained(path)


def _save_tokenizer(path) -> None:
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=384,
        special_tokens=["<|pad|>", "<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(TOKENIZER_CORPUS, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="<|pad|>", eos_token="<|endoftext|>"
    )
    fast.save_pretrained(path)


@pytest.fixture(scope="session")
def conformance_checkpoint(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("ckpt-vocab8")
    _save_model(path, vocab_size=8, n_positions=64, seed=0)
    return str(path)


@pytest.fixture(scope="session")
def text_checkpoint(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("ckpt-vocab384")
    _save_model(path, vocab_size=384, n_positions=96, seed=1)
    _save_tokenizer(path)
    return str(path)


@pytest.fixture(scope="session")
def conformance_runner(conformance_checkpoint) -> CheckpointRunner:
    return CheckpointRunner(conformance_checkpoint)


@pytest.fixture(scope="session")
def text_runner(text_checkpoint) -> CheckpointRunner:
    return CheckpointRunner(text_checkpoint)


def _oracle_logits(model: GPT2LMHeadModel, history: list[int]) -> np.ndarray:
    """Direct in-process forward passes, one token at a time, fresh cache."""
    cache = DynamicCache()
    out = None
    with torch.no_grad():
        for token in history:
            out = model(
                input_ids=torch.tensor([[token]]), past_key_values=cache, use_cache=True
            )
            cache = out.past_key_values
    return out.logits[0, -1].numpy()


def _oracle_bytes(model: GPT2LMHeadModel, history: list[int]) -> bytes:
    """The wire form of the oracle: rounded to float32 once, little-endian."""
    return np.ascontiguousarray(_oracle_logits(model, history), dtype="<f4").tobytes()


@pytest.fixture(scope="session")
def logit_oracle():
    """(model, history) -> wire bytes expected for that exact history."""
    return _oracle_bytes


@pytest.fixture(scope="session")
def raw_oracle():
    """(model, history) -> logits array in the model's own dtype."""
    return _oracle_logits
