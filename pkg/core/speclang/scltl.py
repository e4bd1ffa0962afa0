"""
Syntactically co-safe LTL: abstract syntax and a recursive-descent parser.

Grammar (loosest binding first)::

    or      := and ('|' and)*
    and     := until ('&' until)*
    until   := unary ('U' until)?            right associative
    unary   := '!' atom | 'X' unary | 'F' unary | 'G' '[' INT ']' unary
             | primary
    primary := 'true' | IDENT | '(' or ')'

Negation is only allowed directly on an atom. ``G[k] f`` is bounded
always: the conjunction of X^j f for j = 0..k.
"""

import re
from dataclasses import dataclass
from typing import List, Tuple, Union

from core.exceptions import NegationNotOnAtom, ScltlSyntaxError

MAX_EXPANSION = 64
KEYWORDS = {'true', 'X', 'F', 'G', 'U'}


@dataclass(frozen=True)
class TrueNode:
    def __str__(self):
        return 'true'


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class NegAtom:
    name: str

    def __str__(self):
        return f"!{self.name}"


@dataclass(frozen=True)
class And:
    left: 'Formula'
    right: 'Formula'

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or:
    left: 'Formula'
    right: 'Formula'

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Next:
    child: 'Formula'

    def __str__(self):
        return f"X {self.child}"


@dataclass(frozen=True)
class Until:
    left: 'Formula'
    right: 'Formula'

    def __str__(self):
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Eventually:
    child: 'Formula'

    def __str__(self):
        return f"F {self.child}"


Formula = Union[TrueNode, Atom, NegAtom, And, Or, Next, Until, Eventually]


def atoms(formula: Formula) -> set:
    """Atomic proposition names occurring in a formula."""
    if isinstance(formula, (Atom, NegAtom)):
        return {formula.name}
    if isinstance(formula, (And, Or, Until)):
        return atoms(formula.left) | atoms(formula.right)
    if isinstance(formula, (Next, Eventually)):
        return atoms(formula.child)
    return set()


def depth(formula: Formula) -> int:
    if isinstance(formula, (And, Or, Until)):
        return 1 + max(depth(formula.left), depth(formula.right))
    if isinstance(formula, (Next, Eventually)):
        return 1 + depth(formula.child)
    return 0


def always_within(formula: Formula, horizon: int) -> Formula:
    """
    f & X f & X X f & ... & X^horizon f.

    Raises:
        ValueError: horizon is negative or exceeds MAX_EXPANSION
    """
    if horizon < 0 or horizon > MAX_EXPANSION:
        raise ValueError(f"Bounded always horizon must be in [0, {MAX_EXPANSION}], got {horizon}")
    result = formula
    for _ in range(horizon):
        result = And(formula, Next(result))
    return result


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<int>\d+)|(?P<sym>[!&|()\[\]]))")


def tokenize(text: str) -> List[Tuple[str, str, int]]:
    """(kind, value, position) triples, terminated by ('end', '', len(text))."""
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == '':
            break
        match = _TOKEN.match(text, pos)
        if not match:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ScltlSyntaxError(f"Unexpected character '{text[start]}'", start)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(('end', '', len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, value: str):
        kind, tok, pos = self.current
        if tok != value or kind == 'end':
            found = 'end of input' if kind == 'end' else f"'{tok}'"
            raise ScltlSyntaxError(f"Expected '{value}', found {found}", pos)
        return self.advance()

    def parse(self) -> Formula:
        formula = self.parse_or()
        kind, tok, pos = self.current
        if kind != 'end':
            raise ScltlSyntaxError(f"Unexpected '{tok}'", pos)
        return formula

    def parse_or(self) -> Formula:
        left = self.parse_and()
        while self.current[1] == '|':
            self.advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> Formula:
        left = self.parse_until()
        while self.current[1] == '&':
            self.advance()
            left = And(left, self.parse_until())
        return left

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        if self.current[0] == 'ident' and self.current[1] == 'U':
            self.advance()
            return Until(left, self.parse_until())
        return left

    def parse_unary(self) -> Formula:
        kind, tok, pos = self.current
        if tok == '!':
            self.advance()
            nkind, ntok, npos = self.current
            if nkind == 'ident' and ntok not in KEYWORDS:
                self.advance()
                return NegAtom(ntok)
            if nkind == 'ident' and ntok == 'true':
                raise NegationNotOnAtom("Negation of 'true' is not co-safe", pos)
            if nkind == 'end':
                raise ScltlSyntaxError("Expected an atom after '!'", npos)
            raise NegationNotOnAtom("Negation may only be applied to an atomic proposition", pos)
        if kind == 'ident' and tok == 'X':
            self.advance()
            return Next(self.parse_unary())
        if kind == 'ident' and tok == 'F':
            self.advance()
            return Eventually(self.parse_unary())
        if kind == 'ident' and tok == 'G':
            self.advance()
            self.expect('[')
            ikind, itok, ipos = self.current
            if ikind != 'int':
                raise ScltlSyntaxError("Bounded always needs an integer horizon", ipos)
            self.advance()
            self.expect(']')
            horizon = int(itok)
            if horizon > MAX_EXPANSION:
                raise ScltlSyntaxError(f"Bounded always horizon {horizon} exceeds {MAX_EXPANSION}", ipos)
            return always_within(self.parse_unary(), horizon)
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        kind, tok, pos = self.current
        if tok == '(':
            self.advance()
            inner = self.parse_or()
            self.expect(')')
            return inner
        if kind == 'ident':
            if tok == 'true':
                self.advance()
                return TrueNode()
            if tok in KEYWORDS:
                raise ScltlSyntaxError(f"Operator '{tok}' is missing an operand", pos)
            self.advance()
            return Atom(tok)
        if kind == 'end':
            raise ScltlSyntaxError("Unexpected end of input", pos)
        raise ScltlSyntaxError(f"Unexpected '{tok}'", pos)


def parse_scltl(text: str) -> Formula:
    """
    Parse an scLTL formula.

    Raises:
        ScltlSyntaxError: malformed input, with the offending position
        NegationNotOnAtom: '!' applied to anything but an atom
    """
    if not text or not text.strip():
        raise ScltlSyntaxError("Empty formula", 0)
    return _Parser(text).parse()
