# -*- coding: utf-8 -*-
"""
Dataset generators for the two algorithmic tasks.

Sequences are [token_a, token_b, equals_token]; the equals token is the last
vocabulary id and never appears as a label.

S5 conventions: permutations of (0..4) are indexed in lexicographic (Lehmer
code) order and composition is (a o b)(x) = a(b(x)).

Splits are shuffled with SplitMix64 + Fisher-Yates so they can be reproduced
bit-for-bit outside Python.
"""
import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from grok_lab.schemas import S5_ORDER, TaskConfig

_MASK64 = (1 << 64) - 1
_N_ELEMS = 5


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def permutation(self, n: int) -> List[int]:
        """Fisher-Yates from the top; j = next() mod (i + 1)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next() % (i + 1)
            order[i], order[j] = order[j], order[i]
        return order


@dataclass(frozen=True)
class TaskDataset:
    task: str  # "mod_add" or "s5"
    p: int  # modulus; 120 (group order) for s5
    vocab_size: int
    sequences: np.ndarray  # (n, 3) int64
    labels: np.ndarray  # (n,) int64
    train_idx: np.ndarray
    test_idx: np.ndarray
    split_seed: int
    train_fraction: float

    @property
    def equals_token(self) -> int:
        return self.vocab_size - 1

    def split(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        if name == "train":
            idx = self.train_idx
        elif name == "test":
            idx = self.test_idx
        elif name == "all":
            idx = np.arange(len(self.labels))
        else:
            raise ValueError(f"Unknown split '{name}'. Supported: train, test, all")
        return self.sequences[idx], self.labels[idx]


def split_indices(total: int, split_seed: int, train_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    # exact decimal arithmetic: 0.3 * 14400 must give 4320, not 4319
    n_train = math.floor(Fraction(str(train_fraction)) * total)
    order = SplitMix64(split_seed).permutation(total)
    train = np.sort(np.asarray(order[:n_train], dtype=np.int64))
    test = np.sort(np.asarray(order[n_train:], dtype=np.int64))
    return train, test


def gen_mod_add(p: int, split_seed: int = 0, train_fraction: float = 0.3) -> TaskDataset:
    if p < 2:
        raise ValueError(f"modulus must be >= 2, got {p}")
    a, b = np.divmod(np.arange(p * p, dtype=np.int64), p)
    sequences = np.stack([a, b, np.full_like(a, p)], axis=1)
    labels = (a + b) % p
    train, test = split_indices(p * p, split_seed, train_fraction)
    return TaskDataset("mod_add", p, p + 1, sequences, labels, train, test, split_seed, train_fraction)


def _validate_perm(perm: Sequence[int]) -> Tuple[int, ...]:
    perm = tuple(int(x) for x in perm)
    if sorted(perm) != list(range(_N_ELEMS)):
        raise ValueError(f"not a permutation of 0..{_N_ELEMS - 1}: {perm}")
    return perm


def perm_index(perm: Sequence[int]) -> int:
    """Lexicographic rank via the Lehmer code."""
    perm = _validate_perm(perm)
    index = 0
    for i, x in enumerate(perm):
        smaller_after = sum(1 for y in perm[i + 1:] if y < x)
        index += smaller_after * math.factorial(_N_ELEMS - 1 - i)
    return index


def index_perm(i: int) -> Tuple[int, ...]:
    if not 0 <= i < S5_ORDER:
        raise ValueError(f"permutation index must be in [0, {S5_ORDER}), got {i}")
    remaining = list(range(_N_ELEMS))
    out = []
    for pos in range(_N_ELEMS - 1, -1, -1):
        digit, i = divmod(i, math.factorial(pos))
        out.append(remaining.pop(digit))
    return tuple(out)


def compose(a: Sequence[int], b: Sequence[int]) -> Tuple[int, ...]:
    """(a o b)(x) = a(b(x))."""
    return tuple(a[b[x]] for x in range(_N_ELEMS))


def s5_table() -> np.ndarray:
    """table[i, j] = perm_index(index_perm(i) o index_perm(j))."""
    perms = list(itertools.permutations(range(_N_ELEMS)))
    rank = {perm: idx for idx, perm in enumerate(perms)}
    table = np.empty((S5_ORDER, S5_ORDER), dtype=np.int64)
    for i, a in enumerate(perms):
        for j, b in enumerate(perms):
            table[i, j] = rank[compose(a, b)]
    return table


def gen_s5(split_seed: int = 0, train_fraction: float = 0.3) -> TaskDataset:
    a, b = np.divmod(np.arange(S5_ORDER * S5_ORDER, dtype=np.int64), S5_ORDER)
    sequences = np.stack([a, b, np.full_like(a, S5_ORDER)], axis=1)
    labels = s5_table()[a, b]
    train, test = split_indices(S5_ORDER * S5_ORDER, split_seed, train_fraction)
    return TaskDataset("s5", S5_ORDER, S5_ORDER + 1, sequences, labels, train, test, split_seed, train_fraction)


def build_dataset(task: TaskConfig) -> TaskDataset:
    if task.kind == "s5":
        return gen_s5(task.split_seed, task.train_fraction)
    return gen_mod_add(task.p, task.split_seed, task.train_fraction)


def dump_dataset_csv(dataset: TaskDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    split = np.full(len(dataset.labels), "test", dtype=object)
    split[dataset.train_idx] = "train"
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["a", "b", "label", "split"])
        for (a, b, _), label, s in zip(dataset.sequences.tolist(), dataset.labels.tolist(), split):
            writer.writerow([a, b, label, s])
    return path
