"""
Labeling functions from output space to letters, built from axis-aligned
boxes, with epsilon-deflated and epsilon-inflated variants.
"""

import itertools
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import DimensionMismatch, OutOfRange
from core.speclang.automata import FRESH_LETTER, letter_name, powerset_alphabet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Closed box [lo, hi] in R^q."""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise DimensionMismatch(f"Box bounds have lengths {len(lo)} and {len(hi)}")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"Box lower bound {lo} exceeds upper bound {hi}")
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> 'Box':
        """Box from per-axis [lo, hi] pairs."""
        return cls(lo=[iv[0] for iv in intervals], hi=[iv[1] for iv in intervals])

    def intervals(self) -> List[List[float]]:
        return [[a, b] for a, b in zip(self.lo, self.hi)]

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def is_degenerate(self) -> bool:
        return any(a == b for a, b in zip(self.lo, self.hi))

    def contains(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(y >= self.lo) and np.all(y <= self.hi))

    def depth(self, y) -> float:
        """Smallest slack to a face; negative outside the box."""
        y = np.asarray(y, dtype=float)
        return float(min(np.min(y - np.asarray(self.lo)), np.min(np.asarray(self.hi) - y)))

    def distance(self, y) -> float:
        """Euclidean distance from y to the box (0 inside)."""
        y = np.asarray(y, dtype=float)
        gap = np.maximum(np.asarray(self.lo) - y, 0.0) + np.maximum(y - np.asarray(self.hi), 0.0)
        return float(np.linalg.norm(gap))

    def deflate(self, epsilon: float) -> Optional['Box']:
        """[lo + eps, hi - eps], or None when empty."""
        lo = tuple(a + epsilon for a in self.lo)
        hi = tuple(b - epsilon for b in self.hi)
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def inflate(self, epsilon: float) -> 'Box':
        return Box(tuple(a - epsilon for a in self.lo), tuple(b + epsilon for b in self.hi))

    def intersects(self, other: 'Box') -> bool:
        return all(a1 <= b2 and a2 <= b1 for a1, b1, a2, b2 in zip(self.lo, self.hi, other.lo, other.hi))

    def includes(self, other: 'Box') -> bool:
        return all(a <= a2 and b2 <= b for a, b, a2, b2 in zip(self.lo, self.hi, other.lo, other.hi))


def _warn_degenerate(owner: str, boxes: Iterable[Box]):
    for box in boxes:
        if box.is_degenerate:
            logger.warning("%s has a measure-zero box %s", owner, box.intervals())


@dataclass(frozen=True, eq=False)
class LabeledPartition:
    """
    Letter-valued labeling: each letter owns a union of boxes; points outside
    every box get ``default``. Boxes of distinct letters must be disjoint.
    """
    regions: Mapping[str, Tuple[Box, ...]]
    default: str

    def __post_init__(self):
        regions = {letter: tuple(boxes) for letter, boxes in self.regions.items()}
        object.__setattr__(self, 'regions', regions)
        if self.default in regions:
            raise ValueError(f"Default letter '{self.default}' also owns a region")
        dims = {box.dim for boxes in regions.values() for box in boxes}
        if len(dims) > 1:
            raise DimensionMismatch(f"Region boxes have mixed dimensions {sorted(dims)}")
        for (la, boxes_a), (lb, boxes_b) in itertools.combinations(regions.items(), 2):
            for a in boxes_a:
                for b in boxes_b:
                    if a.intersects(b):
                        raise ValueError(f"Regions '{la}' and '{lb}' overlap")
        for letter, boxes in regions.items():
            _warn_degenerate(f"Region '{letter}'", boxes)

    @property
    def letters(self) -> Tuple[str, ...]:
        return tuple(self.regions) + (self.default,)

    def label(self, y) -> str:
        for letter, boxes in self.regions.items():
            if any(box.contains(y) for box in boxes):
                return letter
        return self.default

    def deflate(self, epsilon: float) -> 'LabeledPartition':
        regions = {}
        for letter, boxes in self.regions.items():
            shrunk = [b for b in (box.deflate(epsilon) for box in boxes) if b is not None]
            if shrunk:
                regions[letter] = tuple(shrunk)
        return LabeledPartition(regions=regions, default=FRESH_LETTER)

    def inflate(self, epsilon: float) -> 'InflatedPartition':
        return InflatedPartition(self, float(epsilon))


@dataclass(frozen=True, eq=False)
class InflatedPartition:
    """Multi-labeling y -> letters whose epsilon-inflated region contains y."""
    base: LabeledPartition
    epsilon: float

    def letters(self, y) -> FrozenSet[str]:
        found = set()
        interior = False
        for letter, boxes in self.base.regions.items():
            for box in boxes:
                if box.inflate(self.epsilon).contains(y):
                    found.add(letter)
                if box.depth(y) >= self.epsilon:
                    interior = True
        if not interior:
            found.add(self.base.default)
        return frozenset(found)


@dataclass(frozen=True, eq=False)
class PropositionLabeling:
    """
    Letters are sets of propositions: y gets the letter naming every
    proposition whose box union contains it.

    With ``margin`` > 0 the labeling is the deflated one: y keeps its letter
    only if it lies at depth >= margin inside a box of every included
    proposition and at distance >= margin from every box of the excluded
    ones; otherwise it gets the fresh letter.
    """
    props: Mapping[str, Tuple[Box, ...]]
    margin: float = 0.0

    def __post_init__(self):
        props = {name: tuple(boxes) for name, boxes in self.props.items()}
        object.__setattr__(self, 'props', props)
        empty = [name for name, boxes in props.items() if not boxes]
        if empty:
            raise ValueError(f"Propositions {empty} have no boxes")
        if self.margin < 0:
            raise ValueError(f"Deflation margin must be non-negative, got {self.margin}")
        dims = {box.dim for boxes in props.values() for box in boxes}
        if len(dims) > 1:
            raise DimensionMismatch(f"Proposition boxes have mixed dimensions {sorted(dims)}")
        if self.margin == 0:
            for name, boxes in props.items():
                _warn_degenerate(f"Proposition '{name}'", boxes)

    def alphabet(self) -> Dict[str, FrozenSet[str]]:
        return powerset_alphabet(self.props)

    def holding(self, y) -> FrozenSet[str]:
        return frozenset(name for name, boxes in self.props.items() if any(b.contains(y) for b in boxes))

    def label(self, y) -> str:
        inside = self.holding(y)
        if self.margin > 0:
            for name, boxes in self.props.items():
                if name in inside:
                    if max(b.depth(y) for b in boxes) < self.margin:
                        return FRESH_LETTER
                elif min(b.distance(y) for b in boxes) < self.margin:
                    return FRESH_LETTER
        return letter_name(inside)

    def deflate(self, epsilon: float) -> 'PropositionLabeling':
        return replace(self, margin=float(epsilon))

    def inflate(self, epsilon: float) -> 'InflatedPropositions':
        return InflatedPropositions(self, float(epsilon))


@dataclass(frozen=True, eq=False)
class InflatedPropositions:
    """
    Possible letters within distance epsilon of y: propositions surely in,
    surely out, or uncertain, and every combination of the uncertain ones.
    """
    base: PropositionLabeling
    epsilon: float

    def letters(self, y) -> FrozenSet[str]:
        sure, uncertain = set(), []
        for name, boxes in self.base.props.items():
            if any(b.contains(y) and b.depth(y) >= self.epsilon for b in boxes):
                sure.add(name)
            elif any(b.distance(y) <= self.epsilon for b in boxes):
                uncertain.append(name)
        found = set()
        for size in range(len(uncertain) + 1):
            for extra in itertools.combinations(uncertain, size):
                found.add(letter_name(sure | set(extra)))
        return frozenset(found)


def label_trajectory(labeling, ys) -> List[str]:
    """Pointwise labeling of an output sequence (rows of ``ys``)."""
    return [labeling.label(y) for y in np.asarray(ys, dtype=float).reshape(len(ys), -1)] if len(ys) else []


def multi_label_trajectory(inflated, ys) -> List[FrozenSet[str]]:
    return [inflated.letters(y) for y in np.asarray(ys, dtype=float).reshape(len(ys), -1)] if len(ys) else []


def deflate_labeling(labeling, epsilon: float):
    """Epsilon-deflated labeling; uncertain margins map to the fresh letter."""
    if epsilon <= 0:
        raise OutOfRange(f"Deflation needs epsilon > 0, got {epsilon}")
    return labeling.deflate(epsilon)


def inflate_labeling(labeling, epsilon: float):
    """Epsilon-inflated multi-labeling."""
    if epsilon < 0:
        raise OutOfRange(f"Inflation needs epsilon >= 0, got {epsilon}")
    return labeling.inflate(epsilon)


class Direction(str, Enum):
    LOWER = 'lower'
    UPPER = 'upper'


def transfer_probability(p_hat: float, delta: float, direction: Direction) -> float:
    """
    Bound on the concrete satisfaction probability from the abstract one:
    lower = max(0, p_hat - delta), upper = min(1, p_hat + delta).

    Raises:
        OutOfRange: p_hat or delta outside [0, 1]
    """
    for name, value in (('p_hat', p_hat), ('delta', delta)):
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"{name} must lie in [0, 1], got {value}")
    if Direction(direction) == Direction.LOWER:
        return max(0.0, p_hat - delta)
    return min(1.0, p_hat + delta)
