"""Training orchestration (public pretrain -> DP fine-tune) and twin-set generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accountant import AccountantError, PrivacyLedger, PrivacySpec, calibrate_sigma
from .corpus import Corpus, LabeledRecord
from .dp_optim import DpOptimConfig, OptimizerState, clip, dp_adam_step, noised_sum, poisson_sample
from .model import LanguageModel, LossConfig, ModelConfig, SamplerConfig
from .schema import AttributeSchema, PromptTemplate, render, wrong_prompts
from .tokenizer import BOS_ID, EOS_ID, Vocabulary

__all__ = ["TrainPlan", "GenerationPlan", "SynthesisError", "train", "generate"]


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class TrainPlan:
    """Phases and hyperparameters of one training run.

    ``privacy`` None means a non-private fine-tune (epsilon = infinity), which
    defaults to fewer epochs and a smaller learning rate than the DP regime
    because non-private training overfits quickly at this scale.
    """

    pretrain_epochs: int = 2
    finetune_epochs: int = 5
    epsilon: float | None = 8.0  # None: non-private
    delta: float | None = None  # None: 1 / (2 n) rule
    clip_norm: float = 1.0
    noise_multiplier: float | None = None  # None: calibrated from the target
    batch_size: int = 100
    lr_dp: float = 1e-3
    lr_nonprivate: float = 1e-4
    nonprivate_finetune_epochs: int = 2
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig | None = None  # None: defaults with vocab size filled in
    vocab_max_size: int = 1024
    mask_instruction_loss: bool = False
    wrong_prompt_mode: str = "all_differ"
    vocab_from_private: bool = True
    master_seed: int = 0

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise SynthesisError("epsilon target must be > 0 (or None for non-private)")
        if min(self.pretrain_epochs, self.finetune_epochs) < 0:
            raise SynthesisError("epoch counts must be >= 0")


@dataclass(frozen=True)
class GenerationPlan:
    total: int
    proportions: dict[str, float] | None = None  # key: "|"-joined attribute values
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    min_length: int = 3
    max_length: int | None = None
    seed: int = 0
    max_resample_attempts: int = 10

    def __post_init__(self):
        if self.total < 0:
            raise SynthesisError("total sample count must be >= 0")
        if self.proportions is not None:
            s = sum(self.proportions.values())
            if abs(s - 1.0) > 1e-9:
                raise SynthesisError(f"proportions sum to {s}, expected 1")
            if any(p < 0 for p in self.proportions.values()):
                raise SynthesisError("proportions must be >= 0")


def _assignment_key(assignment: dict[str, str], schema: AttributeSchema) -> str:
    return "|".join(assignment[n] for n in schema.names)


def _encode_pair(vocab: Vocabulary, prompt: str, text: str, context_len: int) -> tuple[np.ndarray, int]:
    """BOS + prompt tokens + text tokens + EOS, truncated; returns (ids, text start)."""
    p = vocab.encode_words(prompt)
    x = vocab.encode_words(text)
    ids = np.concatenate(([BOS_ID], p, x, [EOS_ID]))
    if len(ids) > context_len:
        ids = np.concatenate((ids[: context_len - 1], [EOS_ID]))
    return ids.astype(np.int64), 1 + len(p)


def largest_remainder_counts(proportions: list[float], total: int) -> list[int]:
    raw = [p * total for p in proportions]
    counts = [math.floor(r) for r in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _adam_epochs(
    model: LanguageModel,
    sequences: list[tuple[np.ndarray, list[np.ndarray], int]],
    loss_cfg: LossConfig,
    optim: DpOptimConfig,
    epochs: int,
    dp: bool,
    sigma: float,
    q: float,
) -> int:
    """Shared trainer loop; returns the number of optimizer steps taken.

    DP mode: Poisson batches, per-sample clip, noised sum over the expected
    batch size.  Non-private mode: sequential full passes in index-order
    minibatches through the same aggregation op with clipping inactive.
    """
    n = len(sequences)
    dim = len(model.theta)
    state = OptimizerState.zeros(dim)
    noise_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=optim.seed, spawn_key=(0xD0,))
    )
    theta = model.theta
    steps_taken = 0
    if dp:
        steps_per_epoch = max(1, round(n / optim.batch_size))
        total_steps = epochs * steps_per_epoch
        for step in range(total_steps):
            idx = poisson_sample(n, q, optim.seed, step)
            clipped = []
            for i in idx:
                ids, wrong, loss_from = sequences[i]
                g = model.per_sample_grad(ids, wrong, loss_cfg, loss_from)
                clipped.append(clip(g, optim.clip_norm))
            avg = noised_sum(clipped, optim.clip_norm, sigma, optim.batch_size, noise_rng, dim=dim)
            state, theta = dp_adam_step(state, theta, avg, optim)
            model.theta[:] = theta
            steps_taken += 1
    else:
        for _ in range(epochs):
            for start in range(0, n, optim.batch_size):
                batch = range(start, min(start + optim.batch_size, n))
                grads = []
                for i in batch:
                    ids, wrong, loss_from = sequences[i]
                    grads.append(model.per_sample_grad(ids, wrong, loss_cfg, loss_from))
                avg = noised_sum(grads, math.inf, 0.0, len(grads), noise_rng, dim=dim)
                state, theta = dp_adam_step(state, theta, avg, optim)
                model.theta[:] = theta
                steps_taken += 1
    return steps_taken


def train(
    plan: TrainPlan,
    public: Corpus,
    private: Corpus,
    template: PromptTemplate,
    schema: AttributeSchema,
) -> tuple[LanguageModel, PrivacyLedger]:
    """Pretrain on the public corpus (plain NLL), then fine-tune on the private
    corpus with the prompt-mismatch loss, privately when the plan targets a
    finite epsilon.  The returned ledger covers exactly the fine-tune steps."""
    template.check_against(schema)
    for i, rec in enumerate(private.records):
        if set(rec.attrs) != set(schema.names):
            raise SynthesisError(f"private record {i} lacks a full attribute assignment")
    n = len(private)
    if n == 0:
        raise SynthesisError("private corpus is empty")

    vocab_corpora = [public, private] if plan.vocab_from_private else [public]
    # every instruction prompt is public (template + schema), so the prompts
    # for all assignments feed vocabulary construction at no privacy cost
    prompts = [render(template, schema, a) for a in schema.assignments()]
    vocab = Vocabulary.build(vocab_corpora, max_size=plan.vocab_max_size,
                             extra_texts=prompts)
    mcfg = plan.model
    if mcfg is None:
        mcfg = ModelConfig(vocab_size=vocab.size, init_seed=plan.master_seed)
    elif mcfg.vocab_size != vocab.size:
        mcfg = ModelConfig(
            vocab_size=vocab.size,
            embed_dim=mcfg.embed_dim,
            hidden_dim=mcfg.hidden_dim,
            context_len=mcfg.context_len,
            init_seed=mcfg.init_seed,
        )
    model = LanguageModel(mcfg, vocab)
    ledger = PrivacyLedger()

    # privacy feasibility is settled before any training happens
    dp = plan.epsilon is not None and math.isfinite(plan.epsilon)
    sigma = 0.0
    q = 1.0
    total_steps = 0
    if dp and plan.finetune_epochs > 0:
        q = min(plan.batch_size / n, 1.0)
        steps_per_epoch = max(1, round(n / plan.batch_size))
        total_steps = plan.finetune_epochs * steps_per_epoch
        delta = plan.delta if plan.delta is not None else 1.0 / (2.0 * n)
        spec = PrivacySpec(epsilon=plan.epsilon, delta=delta, n=n, q=q, steps=total_steps)
        sigma = plan.noise_multiplier if plan.noise_multiplier is not None else calibrate_sigma(spec)

    # phase 1: public pretrain, plain NLL, no prompts, no privacy cost
    if plan.pretrain_epochs > 0 and len(public) > 0:
        seqs = []
        for rec in public.records:
            ids, _ = _encode_pair(vocab, "", rec.text, mcfg.context_len)
            seqs.append((ids, [], 1))
        optim = DpOptimConfig(
            clip_norm=plan.clip_norm,
            batch_size=plan.batch_size,
            lr=plan.lr_nonprivate if not dp else plan.lr_dp,
            seed=plan.master_seed * 2 + 1,
        )
        _adam_epochs(model, seqs, LossConfig(lam=0.0), optim, plan.pretrain_epochs,
                     dp=False, sigma=0.0, q=1.0)

    # phase 2: private fine-tune with the prompt-mismatch loss
    finetune_epochs = plan.finetune_epochs if dp else plan.nonprivate_finetune_epochs
    if finetune_epochs > 0:
        seqs = []
        for rec in private.records:
            prompt = render(template, schema, rec.attrs)
            ids, text_start = _encode_pair(vocab, prompt, rec.text, mcfg.context_len)
            wrongs = []
            if plan.loss.lam > 0:
                wp = wrong_prompts(template, schema, rec.attrs, mode=plan.wrong_prompt_mode)
                if plan.loss.wrong_sample_k is not None and plan.loss.wrong_sample_k < len(wp):
                    rng = np.random.default_rng(
                        np.random.SeedSequence(entropy=plan.master_seed, spawn_key=(0x3F, len(seqs)))
                    )
                    wp = [wp[i] for i in rng.choice(len(wp), plan.loss.wrong_sample_k, replace=False)]
                wrongs = [
                    _encode_pair(vocab, w, rec.text, mcfg.context_len)[0] for w in wp
                ]
            loss_from = text_start if plan.mask_instruction_loss else 1
            seqs.append((ids, wrongs, loss_from))
        optim = DpOptimConfig(
            clip_norm=plan.clip_norm,
            noise_multiplier=sigma,
            batch_size=plan.batch_size if dp else min(plan.batch_size, n),
            lr=plan.lr_dp if dp else plan.lr_nonprivate,
            seed=plan.master_seed * 2 + 2,
        )
        if dp:
            steps = _adam_epochs(model, seqs, plan.loss, optim, finetune_epochs,
                                 dp=True, sigma=sigma, q=q)
            ledger.append(sigma, q, steps)
        else:
            _adam_epochs(model, seqs, plan.loss, optim, finetune_epochs,
                         dp=False, sigma=0.0, q=1.0)
    model.check_finite()
    return model, ledger


def generate(
    model: LanguageModel,
    plan: GenerationPlan,
    template: PromptTemplate,
    schema: AttributeSchema,
) -> tuple[Corpus, dict]:
    """Sample the synthetic twin corpus; labels come from the prompts.

    Returns the corpus plus metadata: per-class counts and the indices of
    records that exhausted the resample budget (kept, but flagged).
    """
    template.check_against(schema)
    assignments = schema.assignments()
    keys = [_assignment_key(a, schema) for a in assignments]
    if plan.proportions is None:
        props = [1.0 / len(assignments)] * len(assignments)
    else:
        unknown = set(plan.proportions) - set(keys)
        if unknown:
            raise SynthesisError(f"proportions name unknown assignments: {sorted(unknown)}")
        props = [plan.proportions.get(k, 0.0) for k in keys]
        if abs(sum(props) - 1.0) > 1e-9:
            raise SynthesisError("proportions must sum to 1 over schema assignments")
    counts = largest_remainder_counts(props, plan.total)
    vocab = model.vocab
    records: list[LabeledRecord] = []
    flagged: list[int] = []
    seed_root = np.random.SeedSequence(entropy=plan.seed, spawn_key=(0x5E,))
    record_index = 0
    for assignment, count in zip(assignments, counts):
        prompt = render(template, schema, assignment)
        instr = np.concatenate(([BOS_ID], vocab.encode_words(prompt))).astype(np.int64)
        for _ in range(count):
            rec_seed = np.random.SeedSequence(entropy=plan.seed, spawn_key=(0x5E, record_index))
            rng = np.random.default_rng(rec_seed)
            text = ""
            ok = False
            for _attempt in range(plan.max_resample_attempts):
                sampler = plan.sampler
                if plan.max_length is not None:
                    cap = plan.max_length + 1  # allow the closing EOS
                    mx = sampler.max_new_tokens
                    sampler = SamplerConfig(
                        nucleus_p=sampler.nucleus_p,
                        max_new_tokens=cap if mx is None else min(mx, cap),
                    )
                out = model.sample(instr, sampler, rng)
                text = vocab.decode(out)
                if plan.max_length is not None:
                    words = text.split()
                    if len(words) > plan.max_length:
                        text = " ".join(words[: plan.max_length])
                if len(text.split()) >= plan.min_length:
                    ok = True
                    break
            if not ok:
                flagged.append(record_index)
                if not text.strip():
                    text = "<unk>"  # degenerate generation kept, flagged
            records.append(LabeledRecord(text=text, attrs=dict(assignment)))
            record_index += 1
    corpus = Corpus(records=tuple(records), schema=schema, role="synthetic")
    meta = {
        "counts_per_class": dict(zip(keys, counts)),
        "flagged_records": flagged,
        "nucleus_p": plan.sampler.nucleus_p,
        "seed": plan.seed,
        "total": plan.total,
    }
    return corpus, meta
