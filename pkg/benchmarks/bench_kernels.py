"""Benchmark the hot kernels on the jitted and pure-numpy paths.

Usage:  python benchmarks/bench_kernels.py
The script re-invokes itself with DPTWIN_DISABLE_NUMBA=1 to time the fallback
path in a fresh interpreter, then prints a side-by-side table.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np


def build():
    from dptwin.model import LanguageModel, LossConfig, ModelConfig
    from dptwin.tokenizer import Vocabulary

    vocab = Vocabulary.from_list([f"w{i}" for i in range(60)])
    cfg = ModelConfig(vocab_size=64, embed_dim=24, hidden_dim=48, context_len=32,
                      init_seed=0)
    model = LanguageModel(cfg, vocab)
    rng = np.random.default_rng(0)
    ids = rng.integers(0, 64, size=20).astype(np.int64)
    wrongs = [rng.integers(0, 64, size=20).astype(np.int64)]
    return model, ids, wrongs


def timeit(fn, repeat: int) -> float:
    fn()  # warm-up (includes any jit compilation)
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def run_benchmarks() -> dict[str, float]:
    from dptwin.model import LossConfig, SamplerConfig

    model, ids, wrongs = build()
    loss_cfg = LossConfig(lam=0.2)
    sampler = SamplerConfig(nucleus_p=0.8, max_new_tokens=16)
    instr = ids[:4].copy()
    return {
        "forward_nll_us": timeit(lambda: model.nll(ids), 2000) * 1e6,
        "per_sample_grad_us": timeit(
            lambda: model.per_sample_grad(ids, wrongs, loss_cfg), 500) * 1e6,
        "sample_16_tokens_us": timeit(
            lambda: model.sample(instr, sampler, seed=0), 200) * 1e6,
    }


def main() -> None:
    if os.environ.get("BENCH_CHILD"):
        print(json.dumps(run_benchmarks()))
        return
    from dptwin import kernels

    label = "numba" if kernels.NUMBA_ENABLED else "numpy"
    here = run_benchmarks()
    env = dict(os.environ, BENCH_CHILD="1",
               DPTWIN_DISABLE_NUMBA="0" if label == "numpy" else "1")
    out = subprocess.run([sys.executable, os.path.abspath(__file__)], env=env,
                         capture_output=True, text=True, check=True)
    other = json.loads(out.stdout.strip().splitlines()[-1])
    other_label = "numpy" if label == "numba" else "numba"

    width = max(len(k) for k in here)
    print(f"{'kernel'.ljust(width)}  {label:>12}  {other_label:>12}  {'speedup':>8}")
    for key in here:
        a, b = here[key], other[key]
        numba_t, numpy_t = (a, b) if label == "numba" else (b, a)
        print(f"{key.ljust(width)}  {a:12.1f}  {b:12.1f}  {numpy_t / numba_t:7.2f}x")
    print("\ntimes are microseconds per call; speedup is numpy time / numba time")


if __name__ == "__main__":
    main()
