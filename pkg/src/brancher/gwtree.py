"""Galton-Watson trees, adjoint trees and windows of the infinite invariant tree.

Trees are addressed by a 64-bit key (see ``keys``): the offspring count of a
vertex is an inverse-CDF draw from a hash of its key, and the keys of its
children are derived from its key and their planar index.  A tree is thus
never stored; it is replayed as a depth-first event stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from . import keys as K
from .harness.stats import EstimateCI
from .harness.streams import chunks, stream
from .offspring import OffspringLaw, Pmf, SpineSplit, adjoint, size_biased

DEFAULT_MAX_GENERATION = 10**6
DEFAULT_MAX_SIZE = 10**8


@dataclass(frozen=True)
class Enter:
    node: int
    child_count: int
    depth: int
    key: int
    parent: int
    index: int  # planar index among the parent's children


@dataclass(frozen=True)
class Leave:
    node: int


Event = Union[Enter, Leave]


def draw_key(rng: np.random.Generator) -> int:
    return int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64,
                            endpoint=True))


class TreeEventStream:
    """Depth-first Enter/Leave events of a GW tree addressed by ``key``.

    The root draws its offspring from ``root_pmf`` (the law itself for a
    critical tree, the adjoint law for an adjoint tree); every other vertex
    from the law.  Vertices at depth ``max_generation`` are reported with
    their drawn child count but not expanded; ``truncated`` is set after a
    full iteration if a budget cut anything off.
    """

    def __init__(self, law: OffspringLaw, key: int, root_pmf: Pmf | None = None,
                 max_generation: int = DEFAULT_MAX_GENERATION,
                 max_size: int = DEFAULT_MAX_SIZE):
        if max_generation < 0 or max_size < 1:
            raise ValueError("budgets must be positive")
        self.law = law
        self.key = int(key)
        self.root_pmf = root_pmf if root_pmf is not None else law
        self.max_generation = max_generation
        self.max_size = max_size
        self.truncated = False
        self._cdf = law.cdf()
        self._root_cdf = self.root_pmf.cdf()

    def child_count(self, key: int, depth: int) -> int:
        cdf = self._root_cdf if depth == 0 else self._cdf
        return K.draw(cdf, K.uniform(key, K.SALT_COUNT))

    def __iter__(self) -> Iterator[Event]:
        self.truncated = False
        size = 0
        # stack entries: (key, depth, parent, index) or a pending Leave
        stack: list = [(self.key, 0, -1, 0)]
        while stack:
            item = stack.pop()
            if isinstance(item, Leave):
                yield item
                continue
            key, depth, parent, index = item
            if size >= self.max_size:
                # close the open vertices so the stream stays well nested
                self.truncated = True
                for rest in reversed(stack):
                    if isinstance(rest, Leave):
                        yield rest
                return
            node = size
            size += 1
            nc = self.child_count(key, depth)
            yield Enter(node, nc, depth, key, parent, index)
            stack.append(Leave(node))
            if nc and depth >= self.max_generation:
                self.truncated = True
                continue
            for c in range(nc - 1, -1, -1):
                stack.append((K.child_key(key, c), depth + 1, node, c))

    def size(self) -> int:
        return sum(1 for e in self if isinstance(e, Enter))


def sample_critical_tree(law: OffspringLaw, rng: np.random.Generator,
                         max_generation: int = DEFAULT_MAX_GENERATION,
                         max_size: int = DEFAULT_MAX_SIZE) -> TreeEventStream:
    return TreeEventStream(law, draw_key(rng), None, max_generation, max_size)


def sample_adjoint_tree(law: OffspringLaw, rng: np.random.Generator,
                        max_generation: int = DEFAULT_MAX_GENERATION,
                        max_size: int = DEFAULT_MAX_SIZE) -> TreeEventStream:
    return TreeEventStream(law, draw_key(rng), adjoint(law), max_generation,
                           max_size)


def generation_sizes(law: OffspringLaw, n: int, rng: np.random.Generator,
                     replicas: int) -> np.ndarray:
    """Z_0..Z_n for independent trees, shape (replicas, n+1).

    Generation k+1 is the sum of Z_k independent offspring counts, drawn as
    one multinomial vector per tree; only surviving trees are touched.
    """
    p = law.probs / law.probs.sum()
    ks = np.arange(len(p))
    Z = np.zeros((replicas, n + 1), dtype=np.int64)
    Z[:, 0] = 1
    alive = np.arange(replicas)
    for g in range(n):
        if alive.size == 0:
            break
        counts = rng.multinomial(Z[alive, g], p)
        Z[alive, g + 1] = counts @ ks
        alive = alive[Z[alive, g + 1] > 0]
    return Z


def survival_probability(law: OffspringLaw, n: int, replicas: int,
                         master_seed: int, tag: str = "survival") -> EstimateCI:
    """P(Z_n != 0) from generation-capped trees (no size budget, no bias).

    Replicas are processed in fixed chunks, each with its own keyed stream,
    so the estimate does not depend on how the chunks are scheduled.
    """
    if n < 1 or replicas < 1:
        raise ValueError("need n >= 1 and replicas >= 1")
    alive = 0
    for c, _, m in chunks(replicas, 4096):
        Z = generation_sizes(law, n, stream(master_seed, tag, law.name, n, c), m)
        alive += int(np.count_nonzero(Z[:, n]))
    return EstimateCI.from_binomial(alive, replicas)


@dataclass
class Attachment:
    """A subtree hanging off the spine: its root is the child with key
    ``key`` of spine vertex ``spine_index``."""

    spine_index: int
    child_index: int
    key: int


@dataclass
class InvariantTreeWindow:
    """First ``spine_length`` spine vertices of the invariant tree (index 0
    is the root) with their past and future attachments.

    Convention: at spine vertex i >= 1 with k children and special child j,
    children 0..j-2 (planar) hang in the past and j..k-1 in the future.  The
    root has no past children; its non-special children are all future.
    Past vertices are ordered spine-distance major, depth-first minor.
    """

    law: OffspringLaw
    key: int
    spine_length: int
    root_future: int
    splits: list[SpineSplit] = field(default_factory=list)
    past: list[Attachment] = field(default_factory=list)
    future: list[Attachment] = field(default_factory=list)

    def spine_keys(self) -> list[int]:
        return [K.root_key(self.key)] + [K.spine_key(self.key, i)
                                         for i in range(1, self.spine_length)]

    def subtree(self, att: Attachment, max_generation=DEFAULT_MAX_GENERATION,
                max_size=DEFAULT_MAX_SIZE) -> TreeEventStream:
        return TreeEventStream(self.law, att.key, None, max_generation, max_size)

    def labels(self, max_size: int = 10_000) -> dict[tuple, int]:
        """Integer labels: future side 0, 1, 2, ... depth-first from the root
        (root first), past side -1, -2, ... with spine vertex i labelled
        before its past attachments.  Keys are ('spine', i) or
        ('sub', spine_index, child_index, node)."""
        out: dict[tuple, int] = {("spine", 0): 0}
        nxt = 1
        for att in self.future:
            for ev in self.subtree(att, max_size=max_size):
                if isinstance(ev, Enter):
                    out[("sub", att.spine_index, att.child_index, ev.node)] = nxt
                    nxt += 1
        lab = -1
        by_spine: dict[int, list[Attachment]] = {}
        for att in self.past:
            by_spine.setdefault(att.spine_index, []).append(att)
        for i in range(1, self.spine_length):
            out[("spine", i)] = lab
            lab -= 1
            for att in by_spine.get(i, []):
                for ev in self.subtree(att, max_size=max_size):
                    if isinstance(ev, Enter):
                        out[("sub", i, att.child_index, ev.node)] = lab
                        lab -= 1
        return out


def sample_invariant_window(law: OffspringLaw, spine_budget: int,
                            rng: np.random.Generator | None = None,
                            key: int | None = None) -> InvariantTreeWindow:
    if spine_budget < 1:
        raise ValueError("spine_budget counts the root and must be >= 1")
    if key is None:
        key = draw_key(rng)
    cdf_mu = law.cdf()
    cdf_sb = size_biased(law).cdf()
    rk = K.root_key(key)
    nf_root = K.draw(cdf_mu, K.uniform(rk, K.SALT_COUNT))
    win = InvariantTreeWindow(law, key, spine_budget, nf_root)
    win.future.extend(Attachment(0, 1 + c, K.child_key(rk, 1 + c))
                      for c in range(nf_root))
    for i in range(1, spine_budget):
        sk = K.spine_key(key, i)
        npast, nfut = K.spine_split(sk, cdf_sb)
        win.splits.append(SpineSplit(npast, nfut))
        win.past.extend(Attachment(i, c, K.child_key(sk, c)) for c in range(npast))
        win.future.extend(Attachment(i, npast + 1 + c, K.child_key(sk, npast + 1 + c))
                          for c in range(nfut))
    return win
