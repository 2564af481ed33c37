"""Small autoregressive language model with exact per-sample gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .tokenizer import EOS_ID, Vocabulary

__all__ = [
    "ModelConfig",
    "LossConfig",
    "SamplerConfig",
    "LanguageModel",
    "ModelError",
    "param_count",
]

_PARAM_FIELDS = ("E", "P", "Wq", "Wk", "Wv", "Wo", "W1", "b1", "W2", "b2")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 128
    context_len: int = 64
    init_seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) < 1:
            raise ModelError("all dimensions must be >= 1")
        if self.context_len < 2:
            raise ModelError("context_len must be >= 2")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        V, d, h, T = self.vocab_size, self.embed_dim, self.hidden_dim, self.context_len
        return {
            "E": (V, d),
            "P": (T, d),
            "Wq": (d, d),
            "Wk": (d, d),
            "Wv": (d, d),
            "Wo": (d, d),
            "W1": (d, h),
            "b1": (h,),
            "W2": (h, d),
            "b2": (d,),
        }

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "context_len": self.context_len,
            "init_seed": self.init_seed,
        }


def param_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in config.shapes().values())


@dataclass(frozen=True)
class LossConfig:
    """Prompt-mismatch loss weights: NLL(correct) - (lam/K) sum NLL(wrong)."""

    lam: float = 0.2
    wrong_sample_k: int | None = None  # None: use all wrong prompts
    wrong_cap_per_token: float | None = None  # nats per predicted token, None: uncapped

    def __post_init__(self):
        if self.lam < 0:
            raise ModelError("lambda must be >= 0")
        if self.wrong_cap_per_token is not None and self.wrong_cap_per_token < 0:
            raise ModelError("wrong-term cap must be >= 0")


@dataclass(frozen=True)
class SamplerConfig:
    nucleus_p: float = 0.8
    max_new_tokens: int | None = None

    def __post_init__(self):
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ModelError("nucleus_p must be in (0, 1]")


def nucleus_filter(probs: np.ndarray, p: float) -> np.ndarray:
    """Renormalized distribution restricted to the smallest probability-sorted
    prefix with cumulative mass >= p; zero elsewhere."""
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    cut = int(np.searchsorted(cum, p)) + 1
    cut = min(cut, len(probs))
    keep = order[:cut]
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    return out / out.sum()


class LanguageModel:
    """Parameter vector + vocabulary binding for the reference architecture."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, theta: np.ndarray | None = None):
        if vocab.size != config.vocab_size:
            raise ModelError(
                f"vocabulary size {vocab.size} != config vocab_size {config.vocab_size}"
            )
        self.config = config
        self.vocab = vocab
        n = param_count(config)
        if theta is None:
            rng = np.random.default_rng(config.init_seed)
            theta = np.zeros(n)
            off = 0
            for name, shape in config.shapes().items():
                size = int(np.prod(shape))
                if not name.startswith("b"):
                    theta[off : off + size] = rng.normal(0.0, 0.02, size)
                off += size
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (n,):
            raise ModelError(f"theta must have {n} entries, got {theta.shape}")
        self.theta = theta
        self._views = {}
        off = 0
        for name, shape in config.shapes().items():
            size = int(np.prod(shape))
            self._views[name] = self.theta[off : off + size].reshape(shape)
            off += size

    @property
    def params(self) -> tuple[np.ndarray, ...]:
        return tuple(self._views[n] for n in _PARAM_FIELDS)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.theta)):
            raise ModelError("model parameters contain non-finite values")

    # ---- losses -------------------------------------------------------------

    def _check_len(self, ids: np.ndarray) -> np.ndarray:
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        if not 2 <= len(ids) <= self.config.context_len:
            raise ModelError(
                f"sequence length {len(ids)} outside [2, {self.config.context_len}]"
            )
        return ids

    def logits(self, ids: np.ndarray) -> np.ndarray:
        ids = self._check_len(ids)
        return kernels.forward_logits(ids, *self.params)

    def nll(self, ids: np.ndarray, loss_from: int = 1) -> float:
        """Negative log-likelihood of the sequence in nats (sum over positions)."""
        ids = self._check_len(ids)
        logits = kernels.forward_logits(ids, *self.params)
        rows = logits[:-1]
        mx = rows.max(axis=1)
        lse = np.log(np.exp(rows - mx[:, None]).sum(axis=1)) + mx
        tok = rows[np.arange(len(ids) - 1), ids[1:]]
        counted = np.arange(1, len(ids)) >= loss_from
        val = float(((lse - tok) * counted).sum())
        if not np.isfinite(val):
            raise ModelError("non-finite NLL; training diverged")
        return val

    def _wrong_term(self, wrong_ids: np.ndarray, cfg: LossConfig, loss_from: int,
                    with_grad: bool):
        """Capped wrong-prompt NLL (and gradient tuple, zeroed when capped)."""
        wrong_ids = self._check_len(wrong_ids)
        if with_grad:
            out = kernels.nll_and_grad(wrong_ids, loss_from, *self.params)
            nll, grads = out[0], out[1:]
        else:
            nll, grads = self.nll(wrong_ids, loss_from), None
        if cfg.wrong_cap_per_token is not None:
            n_pred = max(len(wrong_ids) - loss_from, 0)
            cap = cfg.wrong_cap_per_token * n_pred
            if nll > cap:
                return cap, None  # constant beyond the cap: zero gradient
        return nll, grads

    def combined_loss(
        self,
        correct_ids: np.ndarray,
        wrong_ids_list: list[np.ndarray],
        cfg: LossConfig,
        loss_from: int = 1,
    ) -> float:
        if cfg.lam > 0 and not wrong_ids_list:
            raise ModelError("wrong_ids_list must be non-empty when lambda > 0")
        loss = self.nll(correct_ids, loss_from)
        if cfg.lam > 0:
            penalty = 0.0
            for wids in wrong_ids_list:
                penalty += self._wrong_term(wids, cfg, loss_from, with_grad=False)[0]
            loss -= cfg.lam * penalty / len(wrong_ids_list)
        return loss

    def per_sample_grad(
        self,
        correct_ids: np.ndarray,
        wrong_ids_list: list[np.ndarray],
        cfg: LossConfig,
        loss_from: int = 1,
    ) -> np.ndarray:
        """Exact flat gradient of the combined loss for one record."""
        loss, grad = self.loss_and_grad(correct_ids, wrong_ids_list, cfg, loss_from)
        return grad

    def loss_and_grad(
        self,
        correct_ids: np.ndarray,
        wrong_ids_list: list[np.ndarray],
        cfg: LossConfig,
        loss_from: int = 1,
    ) -> tuple[float, np.ndarray]:
        if cfg.lam > 0 and not wrong_ids_list:
            raise ModelError("wrong_ids_list must be non-empty when lambda > 0")
        correct_ids = self._check_len(correct_ids)
        out = kernels.nll_and_grad(correct_ids, loss_from, *self.params)
        loss = out[0]
        flat = np.concatenate([g.ravel() for g in out[1:]])
        if cfg.lam > 0:
            scale = cfg.lam / len(wrong_ids_list)
            for wids in wrong_ids_list:
                nll_w, grads_w = self._wrong_term(wids, cfg, loss_from, with_grad=True)
                loss -= scale * nll_w
                if grads_w is not None:
                    flat -= scale * np.concatenate([g.ravel() for g in grads_w])
        if not np.isfinite(loss) or not np.all(np.isfinite(flat)):
            raise ModelError("non-finite gradient; training diverged")
        return float(loss), flat

    # ---- sampling -----------------------------------------------------------

    def sample(
        self,
        instruction_ids: np.ndarray,
        sampler: SamplerConfig,
        seed: int | np.random.Generator,
    ) -> np.ndarray:
        """Nucleus-sample a continuation of the instruction; excludes the prompt."""
        instruction_ids = np.ascontiguousarray(instruction_ids, dtype=np.int64)
        T = self.config.context_len
        if not 1 <= len(instruction_ids) < T:
            raise ModelError("instruction must be non-empty and fit in the context")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        d = self.config.embed_dim
        Kc = np.zeros((T, d))
        Vc = np.zeros((T, d))
        logits = None
        for pos, tok in enumerate(instruction_ids):
            logits = kernels.decode_step(int(tok), pos, Kc, Vc, *self.params)
        generated: list[int] = []
        pos = len(instruction_ids)
        budget = T - pos
        if sampler.max_new_tokens is not None:
            budget = min(budget, sampler.max_new_tokens)
        for _ in range(budget):
            mx = logits.max()
            probs = np.exp(logits - mx)
            probs /= probs.sum()
            probs = nucleus_filter(probs, sampler.nucleus_p)
            u = rng.random()
            tok = int(np.searchsorted(np.cumsum(probs), u, side="right"))
            tok = min(tok, len(probs) - 1)
            generated.append(tok)
            if tok == EOS_ID:
                break
            logits = kernels.decode_step(tok, pos, Kc, Vc, *self.params)
            pos += 1
        return np.asarray(generated, dtype=np.int64)

    # ---- checkpoints --------------------------------------------------------

    def save(self, path: str | Path, ledger_snapshot: dict | None = None,
             extra: dict | None = None) -> None:
        """JSON header line (config, vocab, ledger) + little-endian f64 block."""
        header = {
            "config": self.config.to_dict(),
            "vocab": self.vocab.to_list(),
            "ledger": ledger_snapshot or {},
        }
        if extra:
            header.update(extra)
        with Path(path).open("wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            fh.write(np.ascontiguousarray(self.theta, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> tuple["LanguageModel", dict]:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                header_line = fh.readline()
                header = json.loads(header_line.decode("utf-8"))
                config = ModelConfig(**header["config"])
                vocab = Vocabulary.from_list(header["vocab"])
                blob = fh.read()
            theta = np.frombuffer(blob, dtype="<f8").astype(np.float64)
            model = cls(config, vocab, theta)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ModelError(f"corrupt checkpoint {path}: {exc}") from exc
        return model, header
