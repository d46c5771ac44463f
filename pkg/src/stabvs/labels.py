"""Bounded labeling scheme.

Labels replace unbounded epoch numbers. A label is (creator, sting, antistings)
with sting drawn from a finite domain D = [1, k^2+1] and antistings a k-subset
of D. Labels of different creators are ordered by creator id; labels of one
creator are ordered by the sting/antistings relation and may be incomparable.
A fresh label can always be made greater than any k known labels of the same
creator, which is what lets the system escape arbitrary (even cyclic) initial
label states: incomparable or dominated labels get cancelled, and the creator
mints a successor that dominates everything it has stored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable


class Ordering(Enum):
    LESS = "less"
    GREATER = "greater"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class SchemeParams:
    """Sizing for the label domain: k bounds how many labels a creator must
    be able to dominate at once; the sting domain has k^2+1 members so a free
    sting always exists."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def domain_size(self) -> int:
        return self.k * self.k + 1

    def domain(self) -> range:
        return range(1, self.domain_size + 1)


@dataclass(frozen=True)
class Label:
    creator: int
    sting: int
    antistings: frozenset

    def render(self) -> str:
        """Canonical text form: creator:sting:{a1,a2,...}, antistings ascending."""
        inner = ",".join(str(a) for a in sorted(self.antistings))
        return f"{self.creator}:{self.sting}:{{{inner}}}"

    def render_compact(self) -> str:
        """Digest form for traces when antisting sets are large."""
        if len(self.antistings) <= 16:
            return self.render()
        blob = ",".join(str(a) for a in sorted(self.antistings)).encode()
        digest = hashlib.sha1(blob).hexdigest()[:8]
        return f"{self.creator}:{self.sting}:a#{digest}"

    def to_obj(self):
        """JSON-safe structural form; round-trips through label_from_obj."""
        return {"cre": self.creator, "st": self.sting,
                "as": sorted(self.antistings)}


def label_from_obj(obj) -> Label:
    return Label(int(obj["cre"]), int(obj["st"]), frozenset(obj["as"]))


def make_label(params: SchemeParams, creator: int, sting: int,
               antistings: Iterable[int]) -> Label:
    """Construct a label, enforcing structural validity for the given params."""
    anti = frozenset(antistings)
    if not (1 <= sting <= params.domain_size):
        raise ValueError(f"sting {sting} outside domain [1,{params.domain_size}]")
    if len(anti) != params.k:
        raise ValueError(f"antistings must have exactly k={params.k} members")
    if any(a < 1 or a > params.domain_size for a in anti):
        raise ValueError("antisting outside domain")
    return Label(creator, sting, anti)


def normalize_label(params: SchemeParams, creator: int, sting: int,
                    antistings: Iterable[int]) -> Label:
    """Clamp arbitrary field values into a structurally valid label.

    Incoming and injected values may be garbage; processing assumes structural
    validity, so the sting is wrapped into the domain and the antisting set is
    deduped, clamped, truncated to the k smallest or padded with the smallest
    unused domain members. Deterministic.
    """
    d = params.domain_size
    sting = (int(sting) - 1) % d + 1
    anti = sorted({(int(a) - 1) % d + 1 for a in antistings})
    anti = anti[:params.k]
    pad = 1
    while len(anti) < params.k:
        if pad not in anti:
            anti.append(pad)
        pad += 1
    return Label(int(creator), sting, frozenset(anti))


def cmp_label(a: Label, b: Label) -> Ordering:
    """Order two labels.

    Distinct creators compare by creator id and are never incomparable.
    Same-creator labels: a < b when a's sting is one of b's antistings and
    b's sting is not one of a's; if each sting lands in the other's
    antistings (or neither does, for distinct labels) they are incomparable.
    """
    if a == b:
        return Ordering.EQUAL
    if a.creator != b.creator:
        return Ordering.LESS if a.creator < b.creator else Ordering.GREATER
    a_in_b = a.sting in b.antistings
    b_in_a = b.sting in a.antistings
    if a_in_b and not b_in_a:
        return Ordering.LESS
    if b_in_a and not a_in_b:
        return Ordering.GREATER
    return Ordering.INCOMPARABLE


def label_le(a: Label, b: Label) -> bool:
    return cmp_label(a, b) in (Ordering.LESS, Ordering.EQUAL)


def cancels(canceller: Label, target: Label) -> bool:
    """Whether `canceller` invalidates `target`: incomparable labels cancel
    each other's standing, and a same-creator greater label supersedes."""
    rel = cmp_label(target, canceller)
    if rel is Ordering.INCOMPARABLE:
        return True
    return rel is Ordering.LESS and canceller.creator == target.creator


def next_label(params: SchemeParams, creator: int, inputs: Iterable[Label]) -> Label:
    """Mint a label greater than every input label of the same creator.

    The new antistings absorb every input sting (padded to size k with the
    smallest free domain members); the new sting is the smallest domain member
    outside both the new antistings and all input antistings. |inputs| <= k
    guarantees such a sting exists.
    """
    inputs = list(inputs)
    if len(inputs) > params.k:
        raise ValueError(f"next_label got {len(inputs)} inputs, max is k={params.k}")
    anti = {lab.sting for lab in inputs}
    union_anti = set()
    for lab in inputs:
        union_anti.update(lab.antistings)
    for x in params.domain():
        if len(anti) >= params.k:
            break
        if x not in anti:
            anti.add(x)
    sting = None
    for x in params.domain():
        if x not in union_anti and x not in anti:
            sting = x
            break
    if sting is None:
        # With exactly k inputs of disjoint footprints the preferred rule can
        # exhaust the domain. A sting inside our own antistings still makes
        # the result greater than every input (their stings are absorbed, our
        # sting avoids their antistings), so only those stay excluded.
        frozen_anti = frozenset(anti)
        for x in params.domain():
            if x in union_anti:
                continue
            cand = Label(creator, x, frozen_anti)
            if all(cand != lab for lab in inputs):
                sting = x
                break
    if sting is None:  # unreachable: |union_anti| <= k*k < |D|
        raise RuntimeError("sting domain exhausted")
    return Label(creator, sting, frozenset(anti))
