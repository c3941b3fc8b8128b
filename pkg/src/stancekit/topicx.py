"""Heuristic topic extraction from bracketed constituency parses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .errors import EmptyInput, UnbalancedParens

CLAUSE_LABELS = frozenset({"S", "SINV", "SQ", "SBAR", "SBARQ", "FRAG"})
WRAPPER_LABELS = frozenset({"", "TOP", "ROOT"})


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: tuple["ParseTree", ...] = ()
    token: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.token is None) == (len(self.children) == 0):
            raise ValueError("a node is either a leaf with a token or has children")

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.token]
        out: list[str] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def yield_text(self) -> str:
        return " ".join(self.leaves())


def _tokenize(text: str) -> Iterator[str]:
    buf: list[str] = []
    for ch in text:
        if ch in "()":
            if buf:
                yield "".join(buf)
                buf.clear()
            yield ch
        elif ch.isspace():
            if buf:
                yield "".join(buf)
                buf.clear()
        else:
            buf.append(ch)
    if buf:
        yield "".join(buf)


def parse_bracketed(text: str) -> ParseTree:
    """Read one Penn-style bracketed tree from ``text``.

    Accepts an empty root label, as in "( (S ...))".
    """
    tokens = list(_tokenize(text))
    if not tokens:
        raise EmptyInput("no tree in input")
    pos = 0

    def parse_node() -> ParseTree:
        nonlocal pos
        if tokens[pos] != "(":
            raise UnbalancedParens(f"expected '(' at token {pos}")
        pos += 1
        if pos >= len(tokens):
            raise UnbalancedParens("input ends inside a node")
        if tokens[pos] not in "()":
            label = tokens[pos]
            pos += 1
        else:
            label = ""
        children: list[ParseTree] = []
        words: list[str] = []
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                children.append(parse_node())
            else:
                words.append(tokens[pos])
                pos += 1
        if pos >= len(tokens):
            raise UnbalancedParens("missing closing parenthesis")
        pos += 1  # consume ')'
        if children and words:
            raise UnbalancedParens(f"node {label!r} mixes tokens and children")
        if not children:
            if len(words) != 1:
                raise UnbalancedParens(f"leaf {label!r} must hold exactly one token")
            return ParseTree(label=label, token=words[0])
        return ParseTree(label=label, children=tuple(children))

    tree = parse_node()
    if pos != len(tokens):
        raise UnbalancedParens("trailing tokens after the tree closes")
    return tree


def print_bracketed(tree: ParseTree) -> str:
    """Canonical printer; parse_bracketed(print_bracketed(t)) == t."""
    if tree.is_leaf:
        return f"({tree.label} {tree.token})"
    inner = " ".join(print_bracketed(c) for c in tree.children)
    return f"({tree.label} {inner})"


def _main_clause(tree: ParseTree) -> Optional[ParseTree]:
    """Clause whose first VP child is the main verb phrase.

    Descends through wrapper nodes and, for clause coordination, into the
    first clause conjunct until a clause with a direct VP child is found.
    """
    node = tree
    while True:
        if node.is_leaf:
            return None
        if node.label in CLAUSE_LABELS and any(c.label == "VP" for c in node.children):
            return node
        next_node = None
        for child in node.children:
            if child.label in CLAUSE_LABELS or child.label in WRAPPER_LABELS:
                next_node = child
                break
        if next_node is None:
            return node if node.label in CLAUSE_LABELS else None
        node = next_node


def extract_candidate_topics(tree: ParseTree) -> list[str]:
    """Noun phrases in subject or object position of the main verb.

    Subjects are NP children of the clause preceding its first VP child;
    objects are direct NP children along that VP's auxiliary chain. Nested
    noun phrases are not emitted separately.
    """
    clause = _main_clause(tree)
    if clause is None:
        return []
    main_vp = None
    subjects: list[ParseTree] = []
    for child in clause.children:
        if child.label == "VP":
            main_vp = child
            break
        if child.label == "NP":
            subjects.append(child)
    if main_vp is None:
        return []
    objects: list[ParseTree] = []
    vp = main_vp
    while vp is not None:
        next_vp = None
        for child in vp.children:
            if child.label == "NP":
                objects.append(child)
            elif child.label == "VP" and next_vp is None:
                next_vp = child
        vp = next_vp
    return [np.yield_text() for np in subjects + objects]


def fallback_category_topics(categories: Sequence[str]) -> list[str]:
    """Keep categories with no capitalized token (proper-noun heuristic)."""
    kept = []
    for cat in categories:
        tokens = cat.split()
        if tokens and all(not t[0].isupper() for t in tokens):
            kept.append(cat)
    return kept
