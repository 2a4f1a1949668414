"""Segment embedders with hand-written gradients.

Two architectures map a ``T x d`` feature matrix to a unit-norm vector:

``meanpool_mlp``
    temporal mean -> ReLU MLP -> linear output -> L2 normalisation.
``attn1``
    sinusoidal positional encoding -> one single-head scaled dot-product
    self-attention layer -> output projection -> temporal mean -> L2
    normalisation.

All parameters are float64 numpy arrays kept in an ordered dict, so
``backward`` returns gradients under the same names.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import FormatError, NumericError
from .features import decode_feature_matrix, encode_feature_matrix

ARCHS = ("meanpool_mlp", "attn1")
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class EmbedderConfig:
    arch: str = "meanpool_mlp"
    input_dim: int = 60
    hidden: Tuple[int, ...] = (64,)
    embed_dim: int = 32
    key_dim: int = 16
    seed: int = 0
    positional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.arch not in ARCHS:
            raise ValueError(f"unknown embedder arch {self.arch!r}; choose from {ARCHS}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.embed_dim < 2:
            raise ValueError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if self.arch == "meanpool_mlp":
            if not self.hidden or min(self.hidden) < 1:
                raise ValueError("meanpool_mlp needs at least one positive hidden size")
        else:
            if self.key_dim < 1:
                raise ValueError("key_dim must be positive")
            if self.positional and self.input_dim % 2:
                raise ValueError("attn1 with positional encoding needs an even input_dim")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class EmbedderModel:
    config: EmbedderConfig
    params: Dict[str, np.ndarray] = field(repr=False)

    def copy(self) -> "EmbedderModel":
        return EmbedderModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_model(cfg: EmbedderConfig) -> EmbedderModel:
    rng = np.random.default_rng(cfg.seed)
    params: Dict[str, np.ndarray] = {}
    if cfg.arch == "meanpool_mlp":
        sizes = (cfg.input_dim,) + cfg.hidden + (cfg.embed_dim,)
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            params[f"W{i}"] = _glorot(rng, fi, fo)
            params[f"b{i}"] = np.zeros(fo)
    else:
        k = cfg.key_dim
        params["Wq"] = _glorot(rng, cfg.input_dim, k)
        params["Wk"] = _glorot(rng, cfg.input_dim, k)
        params["Wv"] = _glorot(rng, cfg.input_dim, k)
        params["Wo"] = _glorot(rng, k, cfg.embed_dim)
        params["bo"] = np.zeros(cfg.embed_dim)
    return EmbedderModel(cfg, params)


def positional_encoding(T: int, d: int) -> np.ndarray:
    """Sinusoidal encoding: even columns sin(t / 10000^(2i/d)), odd columns cos."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if d < 2 or d % 2:
        raise ValueError(f"positional encoding needs an even d >= 2, got {d}")
    t = np.arange(T, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((T, d))
    pe[:, 0::2] = np.sin(t / freq)
    pe[:, 1::2] = np.cos(t / freq)
    return pe


def _as_batch(model: EmbedderModel, X, dtype=np.float64) -> np.ndarray:
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != model.config.input_dim or X.shape[1] < 1:
        raise ValueError(
            f"expected (B, T, {model.config.input_dim}) input, got shape {X.shape}"
        )
    return X


def _normalize(o: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.sqrt(np.sum(o * o, axis=-1, keepdims=True))
    if not np.all(np.isfinite(norm)) or np.any(norm < _NORM_EPS):
        raise NumericError("embedding pre-activation is degenerate (zero or non-finite norm)")
    return o / norm, norm


def forward_batch(model: EmbedderModel, X, dtype=np.float64) -> Tuple[np.ndarray, dict]:
    """Embed a stack of segments ``(B, T, d)``; returns ``(Z, cache)``."""
    X = _as_batch(model, X, dtype)
    p = model.params
    cfg = model.config
    cache: dict = {"X": X}
    if cfg.arch == "meanpool_mlp":
        h = X.mean(axis=1)
        acts = [h]
        n_layers = len(cfg.hidden) + 1
        for i in range(n_layers):
            a = h @ p[f"W{i}"] + p[f"b{i}"]
            h = np.maximum(a, 0.0) if i < n_layers - 1 else a
            acts.append(h)
        cache["acts"] = acts
        out = h
    else:
        T = X.shape[1]
        Xp = X + positional_encoding(T, cfg.input_dim).astype(dtype) if cfg.positional else X
        Q = Xp @ p["Wq"]
        K = Xp @ p["Wk"]
        V = Xp @ p["Wv"]
        S = Q @ K.transpose(0, 2, 1) / np.sqrt(dtype(cfg.key_dim))
        S = S - S.max(axis=-1, keepdims=True)
        A = np.exp(S)
        A /= A.sum(axis=-1, keepdims=True)
        H = A @ V
        out = (H @ p["Wo"]).mean(axis=1) + p["bo"]
        cache.update(Xp=Xp, Q=Q, K=K, V=V, A=A, H=H)
    Z, norm = _normalize(out)
    cache["Z"] = Z
    cache["norm"] = norm
    return Z, cache


def forward(model: EmbedderModel, x, dtype=np.float64) -> np.ndarray:
    """Embedding of a single ``T x d`` segment."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a T x d matrix, got shape {x.shape}")
    return forward_batch(model, x, dtype)[0][0]


def attention_weights(model: EmbedderModel, x) -> np.ndarray:
    """Row-stochastic ``T x T`` attention matrix of an attn1 model."""
    if model.config.arch != "attn1":
        raise ValueError("attention_weights needs an attn1 model")
    _, cache = forward_batch(model, np.asarray(x)[None])
    return cache["A"][0]


def backward_batch(model: EmbedderModel, cache: dict, G) -> Dict[str, np.ndarray]:
    """Gradient of ``sum_b G[b] . Z[b]`` with respect to every parameter."""
    Z, norm = cache["Z"], cache["norm"]
    G = np.asarray(G, dtype=np.float64)
    if G.shape != Z.shape:
        raise ValueError(f"upstream gradient shape {G.shape} != embedding shape {Z.shape}")
    p = model.params
    cfg = model.config
    # through z = o / |o|
    d_out = (G - Z * np.sum(Z * G, axis=-1, keepdims=True)) / norm
    grads: Dict[str, np.ndarray] = {}
    if cfg.arch == "meanpool_mlp":
        acts = cache["acts"]
        n_layers = len(cfg.hidden) + 1
        delta = d_out
        for i in reversed(range(n_layers)):
            grads[f"W{i}"] = acts[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ p[f"W{i}"].T) * (acts[i] > 0)
    else:
        Xp, Q, K, V, A, H = (cache[k] for k in ("Xp", "Q", "K", "V", "A", "H"))
        T = Xp.shape[1]
        grads["bo"] = d_out.sum(axis=0)
        # mean over time: every frame receives d_out / T
        dO = np.broadcast_to(d_out[:, None, :] / T, H.shape[:2] + (d_out.shape[1],))
        grads["Wo"] = np.einsum("btk,bte->ke", H, dO)
        dH = dO @ p["Wo"].T
        dA = dH @ V.transpose(0, 2, 1)
        dV = A.transpose(0, 2, 1) @ dH
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / np.sqrt(cfg.key_dim)
        dQ = dS @ K
        dK = dS.transpose(0, 2, 1) @ Q
        grads["Wq"] = np.einsum("btd,btk->dk", Xp, dQ)
        grads["Wk"] = np.einsum("btd,btk->dk", Xp, dK)
        grads["Wv"] = np.einsum("btd,btk->dk", Xp, dV)
    return {k: grads[k] for k in p}


def backward(model: EmbedderModel, x, upstream_grad) -> Dict[str, np.ndarray]:
    """Parameter gradients of ``upstream_grad . forward(model, x)``."""
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != (model.config.embed_dim,):
        raise ValueError(f"upstream gradient must have shape ({model.config.embed_dim},)")
    _, cache = forward_batch(model, np.asarray(x)[None])
    return backward_batch(model, cache, g[None])


def grad_check(
    model: EmbedderModel,
    x,
    probe,
    step: float = 1e-4,
    backward_fn: Optional[Callable] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The objective is ``probe . forward(model, x)``; every scalar parameter is
    perturbed in turn and differentiated with the fourth-order central
    stencil.  The numeric side runs in extended precision so that
    exactly-zero gradients (e.g. directions the normalisation is invariant to)
    are not swamped by float64 rounding in the difference quotient.
    """
    backward_fn = backward_fn or backward
    probe64 = np.asarray(probe, dtype=np.float64)
    analytic = backward_fn(model, x, probe64)
    ext = np.longdouble
    probe = probe64.astype(ext)
    h = ext(step)
    work = EmbedderModel(model.config, {k: v.astype(ext) for k, v in model.params.items()})
    worst = 0.0
    for name, value in work.params.items():
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            f = []
            for k in (-2, -1, 1, 2):
                flat[i] = orig + k * h
                f.append(probe @ forward(work, x, ext))
            flat[i] = orig
            numeric = float((f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h))
            a = float(analytic[name].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def apply_update(model: EmbedderModel, grads: Dict[str, np.ndarray], lr: float) -> None:
    for k, g in grads.items():
        model.params[k] -= lr * g


# -- checkpoints -------------------------------------------------------------
# Layout: b"DMCK", u32 LE header length, UTF-8 JSON header, then one FMAT block
# per parameter tensor in header order (vectors stored as 1 x n).

_CKPT_MAGIC = b"DMCK"


def save_checkpoint(model: EmbedderModel, path, extra: Optional[dict] = None) -> None:
    header = {
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode()
    blocks = [encode_feature_matrix(np.atleast_2d(v)) for v in model.params.values()]
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC + struct.pack("<I", len(hbytes)) + hbytes)
        for b in blocks:
            fh.write(b)


def load_checkpoint(path) -> Tuple[EmbedderModel, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _CKPT_MAGIC or len(buf) < 8:
        raise FormatError(f"{path}: not a model checkpoint")
    (hlen,) = struct.unpack_from("<I", buf, 4)
    try:
        header = json.loads(buf[8:8 + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt checkpoint header ({exc})") from None
    cfg = EmbedderConfig.from_dict(header["config"])
    offset = 8 + hlen
    params: Dict[str, np.ndarray] = {}
    for name, shape in header["params"]:
        m, offset = decode_feature_matrix(buf, offset, exact=False)
        params[name] = m.astype(np.float64).reshape(shape)
    if offset != len(buf):
        raise FormatError(f"{path}: trailing bytes after parameter blocks")
    expected = init_model(cfg).params
    for k, v in expected.items():
        if k not in params or params[k].shape != v.shape:
            raise FormatError(f"{path}: parameter {k} missing or mis-shaped")
    return EmbedderModel(cfg, params), header.get("extra", {})


def round_to_float32(model: EmbedderModel) -> EmbedderModel:
    """Model with parameters rounded the way a checkpoint stores them."""
    return EmbedderModel(
        model.config, {k: v.astype(np.float32).astype(np.float64) for k, v in model.params.items()}
    )


def embedding_hash(Z: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(Z, dtype="<f8").tobytes()).hexdigest()
