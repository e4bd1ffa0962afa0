"""
Deterministic finite automata over finite words for scLTL specifications.

Letters are names; an alphabet maps every letter to the set of atomic
propositions it makes true. ``compile_dfa`` builds an obligation-set NFA from
the formula and determinizes it by subset construction. Accepted words are
the good prefixes of the formula, so the accepting location is absorbing.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
from networkx.algorithms.isomorphism import DiGraphMatcher

from core.exceptions import DimensionMismatch, LetterClash, StateBlowup, UnknownLetter
from core.reports.rendering import render_text
from core.speclang.scltl import And, Atom, Eventually, Formula, NegAtom, Next, Or, TrueNode, Until, atoms

logger = logging.getLogger(__name__)

MAX_STATES = 2 ** 16
FRESH_LETTER = 'phi_circ'

Alphabet = Mapping[str, FrozenSet[str]]


def letter_name(props: Iterable[str]) -> str:
    """Canonical letter for a set of propositions, e.g. '{o1,s}' or '{}'."""
    return '{' + ','.join(sorted(props)) + '}'


def powerset_alphabet(props: Iterable[str]) -> Dict[str, FrozenSet[str]]:
    """Every subset of ``props`` as a letter."""
    props = sorted(set(props))
    alphabet = {}
    for size in range(len(props) + 1):
        for subset in itertools.combinations(props, size):
            alphabet[letter_name(subset)] = frozenset(subset)
    return alphabet


@dataclass(frozen=True, eq=False)
class Dfa:
    """
    Locations are 0..size-1; ``table[q][letter]`` is the successor of q.
    """
    size: int
    initial: int
    alphabet: Tuple[str, ...]
    accepting: FrozenSet[int]
    table: Tuple[Mapping[str, int], ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'alphabet', tuple(self.alphabet))
        object.__setattr__(self, 'accepting', frozenset(self.accepting))
        object.__setattr__(self, 'table', tuple(dict(row) for row in self.table))
        if not self.names:
            object.__setattr__(self, 'names', tuple(f"q{i}" for i in range(self.size)))
        if len(self.table) != self.size or len(self.names) != self.size:
            raise DimensionMismatch(f"DFA with {self.size} locations has {len(self.table)} transition rows")
        if not 0 <= self.initial < self.size:
            raise ValueError(f"Initial location {self.initial} is not a location")
        if not self.accepting <= set(range(self.size)):
            raise ValueError("Accepting locations must be locations")
        letters = set(self.alphabet)
        for q, row in enumerate(self.table):
            if set(row) != letters:
                raise ValueError(f"Transition function is not total at location {self.names[q]}")
            if any(not 0 <= target < self.size for target in row.values()):
                raise ValueError(f"Transition from {self.names[q]} leaves the location set")

    def step(self, q: int, letter: str) -> int:
        try:
            return self.table[q][letter]
        except KeyError:
            raise UnknownLetter(f"Letter '{letter}' is not in the alphabet") from None


# Obligation-set tableau: each alternative is (literals, next obligations),
# literals being (proposition, polarity) pairs.

Literal = Tuple[str, bool]
Alternative = Tuple[FrozenSet[Literal], FrozenSet[Formula]]

EMPTY: FrozenSet = frozenset()


def _product(left: List[Alternative], right: List[Alternative]) -> List[Alternative]:
    result = []
    for lits_a, next_a in left:
        for lits_b, next_b in right:
            lits = lits_a | lits_b
            if any((name, not sign) in lits for name, sign in lits):
                continue
            result.append((lits, next_a | next_b))
    return result


@lru_cache(maxsize=None)
def _alternatives(formula: Formula) -> Tuple[Alternative, ...]:
    if isinstance(formula, TrueNode):
        return ((EMPTY, EMPTY),)
    if isinstance(formula, Atom):
        return ((frozenset({(formula.name, True)}), EMPTY),)
    if isinstance(formula, NegAtom):
        return ((frozenset({(formula.name, False)}), EMPTY),)
    if isinstance(formula, And):
        return tuple(_product(list(_alternatives(formula.left)), list(_alternatives(formula.right))))
    if isinstance(formula, Or):
        return _alternatives(formula.left) + _alternatives(formula.right)
    if isinstance(formula, Next):
        return ((EMPTY, frozenset({formula.child})),)
    if isinstance(formula, Until):
        waiting = tuple((lits, nxt | {formula}) for lits, nxt in _alternatives(formula.left))
        return _alternatives(formula.right) + waiting
    if isinstance(formula, Eventually):
        return _alternatives(formula.child) + ((EMPTY, frozenset({formula})),)
    raise TypeError(f"Unsupported formula node {type(formula).__name__}")


@lru_cache(maxsize=None)
def _obligation_alternatives(obligations: FrozenSet[Formula]) -> Tuple[Alternative, ...]:
    result = [(EMPTY, EMPTY)]
    for formula in sorted(obligations, key=str):
        result = _product(result, list(_alternatives(formula)))
        if not result:
            break
    return tuple(set(result))


def _satisfies(props: FrozenSet[str], literals: FrozenSet[Literal]) -> bool:
    return all((name in props) == sign for name, sign in literals)


def nfa_successors(obligations: FrozenSet[Formula], props: FrozenSet[str]) -> FrozenSet[FrozenSet[Formula]]:
    """NFA transition of one obligation set on a letter."""
    return frozenset(nxt for lits, nxt in _obligation_alternatives(obligations) if _satisfies(props, lits))


def _normalize_alphabet(alphabet: Union[Alphabet, Sequence[str]]) -> Dict[str, FrozenSet[str]]:
    if isinstance(alphabet, Mapping):
        return {letter: frozenset(props) for letter, props in alphabet.items()}
    return powerset_alphabet(alphabet)


def compile_dfa(formula: Formula, alphabet: Union[Alphabet, Sequence[str]],
                max_states: int = MAX_STATES) -> Dfa:
    """
    Determinize the obligation-set NFA of ``formula``.

    Subsets containing the discharged (empty) obligation set collapse into one
    absorbing accepting location; the empty subset is the rejecting sink.

    Args:
        formula: parsed scLTL formula
        alphabet: letter -> propositions mapping, or a list of propositions
            whose power set is the alphabet
        max_states: cap on reachable subset states

    Raises:
        StateBlowup: more than ``max_states`` subset states
    """
    alphabet = _normalize_alphabet(alphabet)
    letters = tuple(alphabet)
    unknown = atoms(formula) - set().union(*alphabet.values()) if alphabet else atoms(formula)
    if unknown:
        logger.warning("Propositions %s never hold on any letter", sorted(unknown))

    accept_key = 'accept'
    sink_key = frozenset()
    start = frozenset({frozenset({formula})})

    def key_of(subset):
        return accept_key if EMPTY in subset else subset

    index = {}
    order = []
    queue = deque()

    def locate(key):
        if key not in index:
            if len(index) >= max_states:
                raise StateBlowup(f"Subset construction exceeded {max_states} states")
            index[key] = len(order)
            order.append(key)
            queue.append(key)
        return index[key]

    locate(key_of(start))
    rows: Dict[int, Dict[str, int]] = {}
    while queue:
        key = queue.popleft()
        q = index[key]
        if key == accept_key or key == sink_key:
            rows[q] = {letter: q for letter in letters}
            continue
        row = {}
        for letter in letters:
            successor = frozenset().union(*(nfa_successors(obl, alphabet[letter]) for obl in key))
            row[letter] = locate(key_of(successor))
        rows[q] = row

    accepting = {index[accept_key]} if accept_key in index else set()
    names = []
    for i, key in enumerate(order):
        if key == accept_key:
            names.append(f"q{i}_acc")
        elif key == sink_key:
            names.append(f"q{i}_sink")
        else:
            names.append(f"q{i}")
    dfa = Dfa(size=len(order), initial=0, alphabet=letters, accepting=accepting,
              table=[rows[q] for q in range(len(order))], names=tuple(names))
    logger.debug("Compiled '%s' into a DFA with %d locations over %d letters", formula, dfa.size, len(letters))
    return dfa


def absorb_dfa(dfa: Dfa, letter: str = FRESH_LETTER) -> Dfa:
    """
    Add an absorbing non-accepting location reached from every location on
    the fresh letter.

    Raises:
        LetterClash: the fresh letter is already in the alphabet
    """
    if letter in dfa.alphabet:
        raise LetterClash(f"Letter '{letter}' is already in the alphabet")
    absorbing = dfa.size
    table = [dict(row, **{letter: absorbing}) for row in dfa.table]
    table.append({a: absorbing for a in dfa.alphabet + (letter,)})
    return Dfa(size=dfa.size + 1, initial=dfa.initial, alphabet=dfa.alphabet + (letter,),
               accepting=dfa.accepting, table=table, names=dfa.names + ('q_abs',))


def run_word(dfa: Dfa, word: Sequence[str], horizon: Optional[int] = None) -> bool:
    """
    Without ``horizon``: the location after the whole word is accepting.
    With ``horizon``: some prefix of length <= horizon + 1 is accepted.

    Raises:
        UnknownLetter
    """
    q = dfa.initial
    if horizon is None:
        for letter in word:
            q = dfa.step(q, letter)
        return q in dfa.accepting
    if q in dfa.accepting:
        return True
    for letter in word[:horizon + 1]:
        q = dfa.step(q, letter)
        if q in dfa.accepting:
            return True
    return False


def run_multiword(dfa: Dfa, multiword: Sequence[Iterable[str]], horizon: Optional[int] = None) -> bool:
    """
    Existential run over a word whose positions are sets of possible letters:
    true iff some choice of letters yields an accepted prefix (within
    ``horizon`` + 1 letters when given, of the whole word otherwise).
    """
    current = {dfa.initial}
    positions = multiword if horizon is None else multiword[:horizon + 1]
    if horizon is not None and current & dfa.accepting:
        return True
    for choices in positions:
        choices = list(choices)
        if not choices:
            return False
        current = {dfa.step(q, letter) for q in current for letter in choices}
        if horizon is not None and current & dfa.accepting:
            return True
    return bool(current & dfa.accepting)


def reach_avoid_dfa() -> Dfa:
    """
    Reach-avoid automaton for (a U b) over letters a, b, c: stay in q0 on a,
    accept on b, fall into the sink q1 on c; q2 moves on to q3.
    """
    letters = ('a', 'b', 'c')
    table = [
        {'a': 0, 'b': 2, 'c': 1},
        {a: 1 for a in letters},
        {a: 3 for a in letters},
        {a: 3 for a in letters},
    ]
    return Dfa(size=4, initial=0, alphabet=letters, accepting={2}, table=table)


def reachable(dfa: Dfa) -> List[int]:
    seen = [dfa.initial]
    visited = {dfa.initial}
    queue = deque([dfa.initial])
    while queue:
        q = queue.popleft()
        for letter in dfa.alphabet:
            target = dfa.table[q][letter]
            if target not in visited:
                visited.add(target)
                seen.append(target)
                queue.append(target)
    return seen


def minimize_dfa(dfa: Dfa, prefix_closed: bool = True) -> Dfa:
    """
    Canonical form: reachable part, optionally every location reachable from
    an accepting one marked accepting, then Moore partition refinement.
    """
    keep = reachable(dfa)
    accepting = set(dfa.accepting) & set(keep)
    if prefix_closed:
        frontier = deque(accepting)
        while frontier:
            q = frontier.popleft()
            for letter in dfa.alphabet:
                target = dfa.table[q][letter]
                if target not in accepting:
                    accepting.add(target)
                    frontier.append(target)

    block = {q: int(q in accepting) for q in keep}
    while True:
        signatures = {q: (block[q],) + tuple(block[dfa.table[q][a]] for a in dfa.alphabet) for q in keep}
        renumber = {}
        refined = {}
        for q in keep:
            refined[q] = renumber.setdefault(signatures[q], len(renumber))
        if len(renumber) == len(set(block.values())):
            block = refined
            break
        block = refined

    count = len(set(block.values()))
    table = [None] * count
    for q in keep:
        if table[block[q]] is None:
            table[block[q]] = {a: block[dfa.table[q][a]] for a in dfa.alphabet}
    return Dfa(size=count, initial=block[dfa.initial], alphabet=dfa.alphabet,
               accepting={block[q] for q in accepting}, table=table)


def to_graph(dfa: Dfa) -> nx.DiGraph:
    """Labelled digraph: one edge per (source, target) with the letter set."""
    graph = nx.DiGraph()
    for q in range(dfa.size):
        graph.add_node(q, accepting=q in dfa.accepting, initial=q == dfa.initial)
    for q, row in enumerate(dfa.table):
        for letter, target in row.items():
            if graph.has_edge(q, target):
                graph[q][target]['letters'] = graph[q][target]['letters'] | {letter}
            else:
                graph.add_edge(q, target, letters=frozenset({letter}))
    return graph


def dfa_isomorphic(first: Dfa, second: Dfa) -> bool:
    """Graph isomorphism preserving letters, initial and accepting locations."""
    if set(first.alphabet) != set(second.alphabet) or first.size != second.size:
        return False
    matcher = DiGraphMatcher(
        to_graph(first),
        to_graph(second),
        node_match=lambda a, b: a['accepting'] == b['accepting'] and a['initial'] == b['initial'],
        edge_match=lambda a, b: a['letters'] == b['letters'],
    )
    return matcher.is_isomorphic()


def equivalent(first: Dfa, second: Dfa) -> bool:
    """Language equivalence of the prefix-closed canonical forms."""
    return dfa_isomorphic(minimize_dfa(first), minimize_dfa(second))


def to_dot(dfa: Dfa) -> str:
    """DOT text with parallel letters merged onto one edge."""
    graph = to_graph(dfa)
    edges = [
        {'source': dfa.names[u], 'target': dfa.names[v], 'label': ', '.join(sorted(data['letters']))}
        for u, v, data in sorted(graph.edges(data=True))
    ]
    locations = [
        {'name': dfa.names[q], 'accepting': q in dfa.accepting}
        for q in range(dfa.size)
    ]
    return render_text('core/reports/dfa.dot', {
        'locations': locations,
        'initial': dfa.names[dfa.initial],
        'edges': edges,
    })
