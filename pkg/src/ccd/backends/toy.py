"""Self-contained toy transformer backend.

A two-layer pre-norm transformer with tied input/output embeddings, small
enough to run thousands of decode steps per second in NumPy yet structured
enough to show realistic confidence dynamics. All weights derive from a
single integer seed, so any two processes given the same seed produce
bit-identical logits.

Weights are drawn and stored as float32 (that is the export precision);
arithmetic runs in float64 after a one-time upcast. The placeholder token's
embedding row is zero, so masking a token genuinely removes its content and
leaves only positional signal.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from ccd.backends.base import CacheHandle, ModelBackend, VocabInfo
from ccd.errors import ContextOverflowError

VOCAB = 64
CONTEXT = 256
DIM = 32
HEADS = 2
LAYERS = 2
HEAD_DIM = DIM // HEADS

PLACEHOLDER_ID = 0
EOS_ID = 1

# Tied-output logits are z @ E^T times this; sized so greedy continuations
# are confident but not saturated.
LOGIT_SCALE = 3.0 / np.sqrt(DIM)

_MAGIC = b"CCDTOY1"
_LN_EPS = 1e-5


@dataclass
class _LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    wm1: np.ndarray
    wm2: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.wq, self.wk, self.wv, self.wo, self.wm1, self.wm2]


@dataclass
class ToyWeights:
    """Float32 parameter set; the serialization unit for weight export."""

    tok_emb: np.ndarray
    pos_emb: np.ndarray
    layers: list[_LayerWeights]

    @classmethod
    def from_seed(cls, seed: int) -> "ToyWeights":
        rng = np.random.default_rng(seed)

        def draw(shape: tuple[int, ...], std: float) -> np.ndarray:
            return rng.normal(0.0, std, size=shape).astype(np.float32)

        tok = draw((VOCAB, DIM), 1.0)
        tok[PLACEHOLDER_ID] = 0.0
        pos = draw((CONTEXT, DIM), 0.1)
        attn_std = 1.0 / np.sqrt(DIM)
        layers = []
        for _ in range(LAYERS):
            layers.append(
                _LayerWeights(
                    wq=draw((DIM, DIM), attn_std),
                    wk=draw((DIM, DIM), attn_std),
                    wv=draw((DIM, DIM), attn_std),
                    wo=draw((DIM, DIM), attn_std),
                    wm1=draw((DIM, 4 * DIM), attn_std),
                    wm2=draw((4 * DIM, DIM), 1.0 / np.sqrt(4 * DIM)),
                )
            )
        return cls(tok_emb=tok, pos_emb=pos, layers=layers)

    def arrays(self) -> list[np.ndarray]:
        out = [self.tok_emb, self.pos_emb]
        for layer in self.layers:
            out.extend(layer.arrays())
        return out

    def save(self, fp: BinaryIO) -> None:
        fp.write(_MAGIC)
        fp.write(struct.pack("<5I", VOCAB, CONTEXT, DIM, HEADS, LAYERS))
        for arr in self.arrays():
            fp.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fp: BinaryIO) -> "ToyWeights":
        magic = fp.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"bad weight file magic {magic!r}")
        dims = struct.unpack("<5I", fp.read(20))
        if dims != (VOCAB, CONTEXT, DIM, HEADS, LAYERS):
            raise ValueError(f"unsupported dimensions {dims}")

        def read(shape: tuple[int, ...]) -> np.ndarray:
            n = int(np.prod(shape)) * 4
            raw = fp.read(n)
            if len(raw) != n:
                raise ValueError("weight file truncated")
            return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

        tok = read((VOCAB, DIM))
        pos = read((CONTEXT, DIM))
        layers = []
        for _ in range(LAYERS):
            layers.append(
                _LayerWeights(
                    wq=read((DIM, DIM)),
                    wk=read((DIM, DIM)),
                    wv=read((DIM, DIM)),
                    wo=read((DIM, DIM)),
                    wm1=read((DIM, 4 * DIM)),
                    wm2=read((4 * DIM, DIM)),
                )
            )
        if fp.read(1):
            raise ValueError("trailing bytes after weights")
        return cls(tok_emb=tok, pos_emb=pos, layers=layers)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ToyWeights":
        return cls.load(io.BytesIO(data))


class _ToyCache(CacheHandle):
    def __init__(self, owner: "ToyBackend") -> None:
        super().__init__(owner)
        self.k = [np.zeros((CONTEXT, DIM)) for _ in range(LAYERS)]
        self.v = [np.zeros((CONTEXT, DIM)) for _ in range(LAYERS)]


def _ln(x: np.ndarray) -> np.ndarray:
    mu = x.mean()
    var = x.var()
    return (x - mu) / np.sqrt(var + _LN_EPS)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


class ToyBackend(ModelBackend):
    def __init__(self, seed: int = 0, *, weights: ToyWeights | None = None) -> None:
        w = weights if weights is not None else ToyWeights.from_seed(seed)
        self.weights = w
        self._emb = w.tok_emb.astype(np.float64)
        self._pos = w.pos_emb.astype(np.float64)
        self._layers = [
            _LayerWeights(*[a.astype(np.float64) for a in layer.arrays()])
            for layer in w.layers
        ]
        self._info = VocabInfo(
            vocab_size=VOCAB, placeholder_id=PLACEHOLDER_ID, eos_id=EOS_ID
        )

    @classmethod
    def from_file(cls, path: str) -> "ToyBackend":
        with open(path, "rb") as fp:
            return cls(weights=ToyWeights.load(fp))

    def vocab_info(self) -> VocabInfo:
        return self._info

    def init_cache(self, prefix: Sequence[int]) -> tuple[CacheHandle, np.ndarray]:
        toks = self._require_tokens(prefix, context="init_cache")
        cache = _ToyCache(self)
        for t in toks:
            logits = self._advance(cache, t)
        return cache, logits

    def append_chunk(self, cache: CacheHandle, tokens: Sequence[int]) -> np.ndarray:
        self._require_owned(cache)
        assert isinstance(cache, _ToyCache)
        toks = self._require_tokens(tokens, context="append_chunk")
        # Token-by-token updates keep every chunk partition bit-identical.
        for t in toks:
            logits = self._advance(cache, t)
        return logits

    def _advance(self, cache: _ToyCache, token: int) -> np.ndarray:
        i = cache.length
        if i >= CONTEXT:
            raise ContextOverflowError(
                f"toy context is {CONTEXT} tokens; cannot absorb more"
            )
        x = self._emb[token] + self._pos[i]
        for li, lw in enumerate(self._layers):
            h = _ln(x)
            q = h @ lw.wq
            cache.k[li][i] = h @ lw.wk
            cache.v[li][i] = h @ lw.wv
            att = np.empty(DIM)
            for hd in range(HEADS):
                sl = slice(hd * HEAD_DIM, (hd + 1) * HEAD_DIM)
                scores = cache.k[li][: i + 1, sl] @ q[sl] / np.sqrt(HEAD_DIM)
                att[sl] = _softmax(scores) @ cache.v[li][: i + 1, sl]
            x = x + att @ lw.wo
            x = x + np.tanh(_ln(x) @ lw.wm1) @ lw.wm2
        cache.length = i + 1
        return (self._emb @ _ln(x)) * LOGIT_SCALE
