"""Binary indexed tree for weighted sampling under point updates.

The kernels work on a 1-based ``tree`` array of length ``size + 1``.  They are
plain functions so the event loops in :mod:`.engines` and :mod:`.zoo` can call
them from compiled code.
"""
from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["fw_build", "fw_add", "fw_prefix", "fw_search", "fw_total", "FenwickSampler"]


@njit(cache=True)
def fw_build(weights, tree, n):
    """Fill ``tree`` from ``weights[:n]`` in O(size)."""
    size = tree.shape[0] - 1
    for k in range(size + 1):
        tree[k] = 0.0
    for k in range(n):
        tree[k + 1] = weights[k]
    for k in range(1, size + 1):
        parent = k + (k & -k)
        if parent <= size:
            tree[parent] += tree[k]


@njit(cache=True)
def fw_add(tree, idx, delta):
    """Add ``delta`` to the weight at 0-based ``idx``."""
    size = tree.shape[0] - 1
    k = idx + 1
    while k <= size:
        tree[k] += delta
        k += k & -k


@njit(cache=True)
def fw_prefix(tree, idx):
    """Sum of weights ``[0, idx)``."""
    s = 0.0
    k = idx
    while k > 0:
        s += tree[k]
        k -= k & -k
    return s


@njit(cache=True)
def fw_total(tree):
    return fw_prefix(tree, tree.shape[0] - 1)


@njit(cache=True)
def fw_search(tree, u, n):
    """Smallest 0-based index whose inclusive prefix sum exceeds ``u``.

    The answer is clipped to ``[0, n - 1]`` so a ``u`` that rounding has
    pushed past the stored total still lands on a live slot.
    """
    size = tree.shape[0] - 1
    step = 1
    while step * 2 <= size:
        step *= 2
    pos = 0
    rem = u
    while step > 0:
        nxt = pos + step
        if nxt <= size and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        step //= 2
    if pos > n - 1:
        pos = n - 1
    return pos


class FenwickSampler:
    """Python front end over the kernels, for tests and small models.

    Examples
    --------
    >>> fs = FenwickSampler([1.0, 0.0, 3.0])
    >>> fs.search(0.5), fs.search(1.5)
    (0, 2)
    """

    def __init__(self, weights, capacity=None):
        w = np.asarray(weights, dtype=np.float64)
        cap = max(int(capacity or 0), len(w), 1)
        self.weights = np.zeros(cap)
        self.weights[: len(w)] = w
        self.n = len(w)
        self.tree = np.zeros(cap + 1)
        fw_build(self.weights, self.tree, self.n)

    def total(self) -> float:
        return fw_total(self.tree)

    def update(self, idx: int, value: float) -> None:
        delta = value - self.weights[idx]
        self.weights[idx] = value
        fw_add(self.tree, idx, delta)

    def append(self, value: float) -> None:
        if self.n == len(self.weights):
            self.weights = np.concatenate([self.weights, np.zeros(len(self.weights))])
            self.tree = np.zeros(len(self.weights) + 1)
            fw_build(self.weights, self.tree, self.n)
        self.weights[self.n] = value
        fw_add(self.tree, self.n, value)
        self.n += 1

    def prefix(self, idx: int) -> float:
        return fw_prefix(self.tree, idx)

    def search(self, u: float) -> int:
        return int(fw_search(self.tree, u, self.n))

    def sample(self, rng: np.random.Generator) -> int:
        return self.search(rng.random() * self.total())

    def rebuild(self) -> None:
        fw_build(self.weights, self.tree, self.n)
