from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Task:
    x: np.ndarray  # (n, d, L)
    y: np.ndarray  # (n,)
    classes: int


def make_task(rng: np.random.Generator, n: int = 512, d: int = 32, seq_len: int = 8,
              classes: int = 4, noise: float = 1.0) -> Task:
    """Mixture-of-Gaussians sequence classification.

    Every token sits near one of ``classes`` centres. One token per sequence
    also carries a shared marker direction; the label is the centre of that
    marked token, while the other tokens draw their centres at random. At the
    default noise the marker stands only a few standard deviations clear of the
    distractor tokens, so a dense model stays short of zero loss.
    """
    centres = rng.standard_normal((classes, d))
    marker = rng.standard_normal(d)
    y = rng.integers(0, classes, size=n)
    picks = rng.integers(0, classes, size=(n, seq_len))
    pos = rng.integers(0, seq_len, size=n)
    picks[np.arange(n), pos] = y
    tokens = centres[picks] + noise * rng.standard_normal((n, seq_len, d))
    tokens[np.arange(n), pos] += marker
    return Task(x=np.ascontiguousarray(tokens.transpose(0, 2, 1)), y=y, classes=classes)
