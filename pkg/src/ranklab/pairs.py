"""Mini-batch construction and pair-formation strategies.

Three ways of turning a mini-batch into training pairs:

  fixed-similar   a perfect matching, every pair shares one content
  all-similar     every pair of batch items that share a content
  all-differing   every pair, regardless of content

The first two need structurally constrained batches; `make_minibatch`
draws them. all-similar batches hold one single content, so the batch can
never exceed the number of samples available for one content.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

STRATEGIES = ("fixed-similar", "all-similar", "all-differing")


class InfeasibleBatchError(ValueError):
    """The requested batch cannot satisfy the strategy's constraint."""


@dataclass(frozen=True)
class SampleRef:
    """Lightweight view of one batch item for pair formation."""

    index: int  # position in the mini-batch
    content_id: int
    mos: float


@dataclass(frozen=True)
class PairSet:
    pairs: tuple  # unordered (i, j) position pairs, i < j
    strategy_tag: str

    def __len__(self):
        return len(self.pairs)


def _contents(batch: Sequence) -> list:
    return [s.content_id for s in batch]


def fixed_pairs(batch: Sequence) -> PairSet:
    """Perfect matching of same-content pairs, first-fit in batch order."""
    contents = _contents(batch)
    if len(contents) % 2 != 0:
        raise InfeasibleBatchError(f"fixed pairs need an even batch, got {len(contents)}")
    groups = defaultdict(list)
    for position, content in enumerate(contents):
        groups[content].append(position)
    odd = sorted(str(c) for c, members in groups.items() if len(members) % 2 != 0)
    if odd:
        raise InfeasibleBatchError(
            "batch is not partitionable into same-content pairs; "
            f"contents with an odd sample count: {', '.join(odd)}"
        )
    pairs = []
    for content in dict.fromkeys(contents):  # first-appearance order
        members = groups[content]
        pairs.extend((members[k], members[k + 1]) for k in range(0, len(members), 2))
    return PairSet(tuple(pairs), "fixed-similar")


def all_pairs_similar(batch: Sequence) -> PairSet:
    contents = _contents(batch)
    n = len(contents)
    pairs = tuple(
        (i, j) for i in range(n) for j in range(i + 1, n) if contents[i] == contents[j]
    )
    return PairSet(pairs, "all-similar")


def all_pairs_differing(batch: Sequence) -> PairSet:
    n = len(batch)
    pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return PairSet(pairs, "all-differing")


def pairs_for_strategy(strategy: str, batch: Sequence) -> PairSet:
    if strategy == "fixed-similar":
        return fixed_pairs(batch)
    if strategy == "all-similar":
        return all_pairs_similar(batch)
    if strategy == "all-differing":
        return all_pairs_differing(batch)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def make_minibatch(dataset: Sequence, strategy: str, n: int, rng: np.random.Generator) -> list:
    """Draw a batch of `n` dataset samples satisfying the strategy's structure.

    fixed-similar draws n/2 distinct contents and two samples of each;
    all-similar draws one content (uniformly among those with enough
    samples) and n of its samples; all-differing draws uniformly from the
    whole dataset. All draws are without replacement.
    """
    if n < 2:
        raise InfeasibleBatchError("batch size must be at least 2")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    by_content = defaultdict(list)
    for idx, sample in enumerate(dataset):
        by_content[sample.content_id].append(idx)
    content_ids = sorted(by_content)

    if strategy == "all-differing":
        if n > len(dataset):
            raise InfeasibleBatchError(
                f"batch size {n} exceeds the dataset size {len(dataset)}"
            )
        chosen = rng.choice(len(dataset), size=n, replace=False)
        return [dataset[i] for i in chosen]

    if strategy == "all-similar":
        feasible = [c for c in content_ids if len(by_content[c]) >= n]
        if not feasible:
            max_d = max(len(v) for v in by_content.values())
            raise InfeasibleBatchError(
                f"all-similar batches require n <= max samples per content; "
                f"requested {n} but no content has more than {max_d}"
            )
        content = feasible[rng.integers(len(feasible))]
        chosen = rng.choice(len(by_content[content]), size=n, replace=False)
        return [dataset[by_content[content][i]] for i in chosen]

    # fixed-similar
    if n % 2 != 0:
        raise InfeasibleBatchError(f"fixed-similar batches must be even, got {n}")
    pairable = [c for c in content_ids if len(by_content[c]) >= 2]
    if n // 2 > len(pairable):
        raise InfeasibleBatchError(
            f"fixed-similar batch of {n} needs {n // 2} contents with at least "
            f"2 samples, dataset has {len(pairable)}"
        )
    picked = rng.choice(len(pairable), size=n // 2, replace=False)
    batch = []
    for k in picked:
        members = by_content[pairable[k]]
        two = rng.choice(len(members), size=2, replace=False)
        batch.append(dataset[members[two[0]]])
        batch.append(dataset[members[two[1]]])
    return batch
