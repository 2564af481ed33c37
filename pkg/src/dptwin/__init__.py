"""dptwin: differentially private synthetic text twins.

Train a small prompt-conditioned autoregressive language model under
differential privacy, synthesize labeled twin datasets from it, and audit
the result for utility, leakage, and distributional quality.
"""

from .accountant import (
    ALPHA_GRID,
    PrivacyLedger,
    PrivacySpec,
    calibrate_sigma,
    compose_and_convert,
    delta_default,
    rdp_subsampled_gaussian,
)
from .corpus import Corpus, LabeledRecord, ToyCorpusSpec, generate_toy_corpus, load_jsonl, split, write_jsonl
from .model import LanguageModel, LossConfig, ModelConfig, SamplerConfig
from .schema import Attribute, AttributeSchema, PromptTemplate, render, sample_wrong_prompts, wrong_prompts
from .synthesis import GenerationPlan, TrainPlan, generate, train
from .tokenizer import Vocabulary

__version__ = "0.1.0"

__all__ = [
    "ALPHA_GRID",
    "Attribute",
    "AttributeSchema",
    "Corpus",
    "GenerationPlan",
    "LabeledRecord",
    "LanguageModel",
    "LossConfig",
    "ModelConfig",
    "PrivacyLedger",
    "PrivacySpec",
    "PromptTemplate",
    "SamplerConfig",
    "ToyCorpusSpec",
    "TrainPlan",
    "Vocabulary",
    "calibrate_sigma",
    "compose_and_convert",
    "delta_default",
    "generate",
    "generate_toy_corpus",
    "load_jsonl",
    "rdp_subsampled_gaussian",
    "render",
    "sample_wrong_prompts",
    "split",
    "train",
    "wrong_prompts",
    "write_jsonl",
]
