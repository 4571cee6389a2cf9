"""Parse and render the pipe-indented textual decision-tree format.

The canonical layout is one bar per depth level with a ``|-`` marker::

    |- petal width (cm) <= 0.80
    | |- class: setosa
    |- petal width (cm) > 0.80
    | |- petal width (cm) <= 1.75
    | | |- class: versicolor
    | |- petal width (cm) > 1.75
    | | |- class: virginica

Each inner node is a pair of sibling lines holding complementary
conditions, each followed by the lines of its subtree one level deeper.
The parser is lenient about dash counts, spacing, and comparator
spellings (see ``templates/grammar.ebnf``), and never crashes on
arbitrary input: every rejection raises :class:`TreeParseError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .schema import DatasetSchema, normalize_token
from .tree import DecisionTree, Leaf, Node, Predicate, Split

BAD_INDENT = "bad-indent"
BAD_COMPARATOR = "bad-comparator"
MISSING_SIBLING = "missing-sibling"
NON_COMPLEMENTARY_SIBLING = "non-complementary-sibling"
DANGLING_BRANCH = "dangling-branch"
BAD_LEAF = "bad-leaf"

MAX_DEPTH = 100  # guards the recursive parser against pathological indent runs

_LINE = re.compile(r"^(?P<bars>(?:\|[ \t]*)*)\|(?P<dashes>-+)[ \t]*(?P<content>.*?)[ \t]*$")
_LEAF = re.compile(r"^class\s*:\s*(?P<label>.*)$", re.IGNORECASE)
_SPLIT = re.compile(r"^(?P<feature>.+?)\s*(?P<op><=|>=|==|!=|<|>|=)\s*(?P<value>.+)$")
_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)$")


class TreeParseError(ValueError):
    """Typed rejection of tree text; ``kind`` names the grammar rule that failed."""

    def __init__(self, line_number: int, kind: str, message: str):
        super().__init__(f"line {line_number}: {kind}: {message}")
        self.line_number = line_number
        self.kind = kind
        self.message = message


@dataclass(frozen=True)
class _Line:
    number: int
    depth: int
    is_leaf: bool
    # leaf: label; split: (feature, op, value)
    label: Optional[str] = None
    predicate: Optional[Predicate] = None


def parse_value(token: str) -> Union[int, float, str]:
    """Integer or decimal literal if it looks like one, else a category string."""
    token = token.strip()
    if _NUMBER.match(token):
        if "." in token:
            return float(token)
        return int(token)
    return token


def _parse_line(number: int, raw: str, schema: DatasetSchema) -> _Line:
    match = _LINE.match(raw.rstrip())
    if not match:
        raise TreeParseError(number, BAD_INDENT, f"line does not start with a bar marker: {raw!r}")
    if len(match.group("dashes")) > 3:
        raise TreeParseError(number, BAD_INDENT, "more than three dashes in branch marker")
    depth = match.group("bars").count("|")
    if depth > MAX_DEPTH:
        raise TreeParseError(number, BAD_INDENT, f"indent deeper than {MAX_DEPTH} levels")
    content = match.group("content")

    leaf = _LEAF.match(content)
    if leaf:
        label = leaf.group("label").strip()
        if not label:
            raise TreeParseError(number, BAD_LEAF, "leaf has an empty class label")
        return _Line(number, depth, True, label=schema.resolve_label(label) or label)

    split = _SPLIT.match(content)
    if not split:
        raise TreeParseError(
            number, BAD_COMPARATOR, f"no comparator or class label found in {content!r}"
        )
    op = split.group("op")
    if op == "=":
        op = "=="
    token = split.group("feature").strip()
    spec = schema.resolve_feature(token)
    feature = spec.name if spec is not None else token
    return _Line(
        number, depth, False, predicate=Predicate(feature, op, parse_value(split.group("value")))
    )


def _values_equal(a, b) -> bool:
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return float(a) == float(b)
    if not a_num and not b_num:
        return normalize_token(str(a)) == normalize_token(str(b))
    return False


def _is_complement(first: Predicate, second: Predicate) -> bool:
    return (
        normalize_token(first.feature) == normalize_token(second.feature)
        and second.op == first.complement().op
        and _values_equal(first.value, second.value)
    )


def parse_tree(text: str, schema: DatasetSchema) -> DecisionTree:
    """Parse tree text into a :class:`DecisionTree`.

    Feature tokens and leaf labels are canonicalized against the schema when
    they match (case-insensitively, trailing bracket annotation stripped);
    unknown names are kept verbatim for ``validate`` to flag.
    """
    lines: list[_Line] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        lines.append(_parse_line(number, raw, schema))
    if not lines:
        raise TreeParseError(0, DANGLING_BRANCH, "no tree lines found")

    def parse_branch(index: int, depth: int, parent: _Line) -> tuple[Node, int]:
        """Subtree hanging off a split line (one level deeper than the split)."""
        if index >= len(lines) or lines[index].depth <= parent.depth:
            raise TreeParseError(
                parent.number, DANGLING_BRANCH, "branch condition has no subtree lines"
            )
        if lines[index].depth != depth:
            raise TreeParseError(
                lines[index].number,
                BAD_INDENT,
                f"expected indent depth {depth}, found {lines[index].depth}",
            )
        return parse_subtree(index, depth)

    def parse_subtree(index: int, depth: int) -> tuple[Node, int]:
        line = lines[index]
        if line.depth != depth:
            raise TreeParseError(
                line.number, BAD_INDENT, f"expected indent depth {depth}, found {line.depth}"
            )
        if line.is_leaf:
            return Leaf(line.label), index + 1

        true_child, index = parse_branch(index + 1, depth + 1, line)

        if index >= len(lines) or lines[index].depth < depth:
            raise TreeParseError(
                line.number, MISSING_SIBLING, f"no complement line for {line.predicate!r}"
            )
        sibling = lines[index]
        if sibling.depth > depth:
            raise TreeParseError(
                sibling.number, BAD_INDENT, f"expected sibling at depth {depth}"
            )
        if sibling.is_leaf or not _is_complement(line.predicate, sibling.predicate):
            raise TreeParseError(
                sibling.number,
                NON_COMPLEMENTARY_SIBLING,
                f"sibling does not complement {line.predicate!r}",
            )
        false_child, index = parse_branch(index + 1, depth + 1, sibling)
        return Split(line.predicate, true_child, false_child), index

    root, consumed = parse_subtree(0, 0)
    if consumed != len(lines):
        raise TreeParseError(
            lines[consumed].number, BAD_INDENT, "unexpected extra line after complete tree"
        )
    return DecisionTree(root)


def format_value(value: Union[int, float, str]) -> str:
    """Canonical literal: ints bare, floats positional with >= 2 decimals."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = np.format_float_positional(value, unique=True)
        head, _, frac = text.partition(".")
        return f"{head}.{frac.ljust(2, '0')}"
    return str(value)


def render_tree(tree: DecisionTree) -> str:
    """Canonical textual form; ``parse_tree(render_tree(t), schema) == t``."""
    out: list[str] = []

    def line(depth: int, content: str) -> None:
        out.append("| " * depth + "|- " + content)

    def walk(node: Node, depth: int) -> None:
        if isinstance(node, Leaf):
            line(depth, f"class: {node.label}")
            return
        pred = node.predicate
        line(depth, f"{pred.feature} {pred.op} {format_value(pred.value)}")
        walk(node.true_child, depth + 1)
        comp = pred.complement()
        line(depth, f"{comp.feature} {comp.op} {format_value(comp.value)}")
        walk(node.false_child, depth + 1)

    walk(tree.root, 0)
    return "\n".join(out)


def extract_tree_block(text: str) -> str:
    """First maximal run of bar-prefixed lines in a chat response.

    Providers tend to wrap the tree in prose, fences, or a repeated
    'Decision tree:' header; only the tree lines themselves start with a bar.
    """
    block: list[str] = []
    for raw in text.splitlines():
        if raw.lstrip().startswith("|"):
            block.append(raw)
        elif block:
            break
    return "\n".join(block)
