import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import IRIS_TEXT, make_rich_schema, random_tree
from zerotree.text_format import (
    TreeParseError,
    extract_tree_block,
    format_value,
    parse_tree,
    render_tree,
)
from zerotree.tree import DecisionTree, Leaf


class TestParseBasics:
    def test_listing_tree_shape(self, iris_schema):
        tree = parse_tree(IRIS_TEXT, iris_schema)
        assert tree.inner_node_count() == 2
        assert tree.leaf_count() == 3
        assert tree.depth() == 2

    def test_single_leaf(self, iris_schema):
        tree = parse_tree("|- class: virginica", iris_schema)
        assert tree.root == Leaf("virginica")
        assert tree.inner_node_count() == 0

    def test_dash_count_variants(self, iris_schema):
        text = "|-- petal width (cm) <= 0.80\n| |--- class: setosa\n|- petal width (cm) > 0.80\n| |- class: virginica"
        tree = parse_tree(text, iris_schema)
        assert tree.inner_node_count() == 1

    def test_equals_reads_as_double_equals(self):
        schema = make_rich_schema()
        text = "|- color = red\n| |- class: alpha\n|- color != red\n| |- class: beta"
        tree = parse_tree(text, schema)
        assert tree.root.predicate.op == "=="

    def test_feature_names_canonicalized_case_insensitively(self, iris_schema):
        text = "|- PETAL WIDTH (CM) <= 0.80\n| |- class: SETOSA\n|- Petal Width (cm) > 0.8\n| |- class: virginica"
        tree = parse_tree(text, iris_schema)
        assert tree.root.predicate.feature == "petal width (cm)"
        assert tree.root.true_child.label == "setosa"

    def test_annotation_stripped_names_resolve(self):
        schema = make_rich_schema()  # schema name is bare "weight"
        text = "|- weight (kg) <= 70.00\n| |- class: alpha\n|- weight (kg) > 70.00\n| |- class: beta"
        tree = parse_tree(text, schema)
        assert tree.root.predicate.feature == "weight"

    def test_unknown_feature_token_kept_verbatim(self, iris_schema):
        text = "|- petal wdth <= 0.80\n| |- class: setosa\n|- petal wdth > 0.80\n| |- class: virginica"
        tree = parse_tree(text, iris_schema)  # not a parse error; validate's problem
        assert tree.root.predicate.feature == "petal wdth"

    def test_complement_values_may_differ_in_spelling(self, iris_schema):
        text = "|- petal width (cm) <= 0.80\n| |- class: setosa\n|- petal width (cm) > 0.8\n| |- class: virginica"
        assert parse_tree(text, iris_schema).inner_node_count() == 1

    def test_numeric_literal_forms(self, iris_schema):
        for literal, value in [("+1.5", 1.5), (".5", 0.5), ("-2", -2), ("35", 35)]:
            text = (
                f"|- petal width (cm) <= {literal}\n| |- class: setosa\n"
                f"|- petal width (cm) > {literal}\n| |- class: virginica"
            )
            assert parse_tree(text, iris_schema).root.predicate.value == value

    def test_non_numeric_literal_becomes_category(self):
        schema = make_rich_schema()
        text = "|- color == 1,000\n| |- class: alpha\n|- color != 1,000\n| |- class: beta"
        assert parse_tree(text, schema).root.predicate.value == "1,000"

    def test_blank_lines_skipped(self, iris_schema):
        text = "\n|- class: setosa\n\n"
        assert parse_tree(text, iris_schema).root == Leaf("setosa")


def expect_error(text, schema, kind):
    with pytest.raises(TreeParseError) as info:
        parse_tree(text, schema)
    assert info.value.kind == kind
    return info.value


class TestParseErrors:
    def test_no_bar_marker(self, iris_schema):
        expect_error("petal width <= 1", iris_schema, "bad-indent")

    def test_too_many_dashes(self, iris_schema):
        expect_error("|---- class: setosa", iris_schema, "bad-indent")

    def test_root_over_indented(self, iris_schema):
        expect_error("| |- class: setosa", iris_schema, "bad-indent")

    def test_depth_jump_in_subtree(self, iris_schema):
        text = "|- petal width (cm) <= 1\n| | |- class: setosa"
        expect_error(text, iris_schema, "bad-indent")

    def test_extra_line_after_complete_tree(self, iris_schema):
        text = "|- class: setosa\n|- class: virginica"
        expect_error(text, iris_schema, "bad-indent")

    def test_no_comparator(self, iris_schema):
        expect_error("|- petal width 0.80", iris_schema, "bad-comparator")

    def test_empty_leaf_label(self, iris_schema):
        expect_error("|- class:", iris_schema, "bad-leaf")
        expect_error("|- class:   ", iris_schema, "bad-leaf")

    def test_dangling_branch_at_end(self, iris_schema):
        expect_error("|- petal width (cm) <= 0.80", iris_schema, "dangling-branch")

    def test_dangling_branch_before_sibling(self, iris_schema):
        text = "|- petal width (cm) <= 0.80\n|- petal width (cm) > 0.80\n| |- class: setosa"
        expect_error(text, iris_schema, "dangling-branch")

    def test_empty_input(self, iris_schema):
        expect_error("", iris_schema, "dangling-branch")
        expect_error("\n  \n", iris_schema, "dangling-branch")

    def test_missing_sibling_at_eof(self, iris_schema):
        text = "|- petal width (cm) <= 0.80\n| |- class: setosa"
        expect_error(text, iris_schema, "missing-sibling")

    def test_sibling_with_wrong_value(self, iris_schema):
        text = (
            "|- petal width (cm) <= 0.80\n| |- class: setosa\n"
            "|- petal width (cm) > 2.00\n| |- class: virginica"
        )
        expect_error(text, iris_schema, "non-complementary-sibling")

    def test_sibling_with_wrong_comparator(self, iris_schema):
        text = (
            "|- petal width (cm) <= 0.80\n| |- class: setosa\n"
            "|- petal width (cm) >= 0.80\n| |- class: virginica"
        )
        expect_error(text, iris_schema, "non-complementary-sibling")

    def test_sibling_with_wrong_feature(self, iris_schema):
        text = (
            "|- petal width (cm) <= 0.80\n| |- class: setosa\n"
            "|- petal length (cm) > 0.80\n| |- class: virginica"
        )
        expect_error(text, iris_schema, "non-complementary-sibling")

    def test_sibling_is_a_leaf(self, iris_schema):
        text = "|- petal width (cm) <= 0.80\n| |- class: setosa\n|- class: virginica"
        expect_error(text, iris_schema, "non-complementary-sibling")

    def test_error_carries_line_number(self, iris_schema):
        err = expect_error(
            "|- petal width (cm) <= 0.80\n| |- class: setosa\n|- class: virginica",
            iris_schema,
            "non-complementary-sibling",
        )
        assert err.line_number == 3


class TestRender:
    def test_iris_tree_renders_exactly(self, iris_schema):
        tree = parse_tree(IRIS_TEXT, iris_schema)
        assert render_tree(tree) == IRIS_TEXT

    def test_single_leaf_line(self):
        assert render_tree(DecisionTree(Leaf("A"))) == "|- class: A"

    def test_format_value_pads_floats_to_two_decimals(self):
        assert format_value(0.8) == "0.80"
        assert format_value(1.75) == "1.75"
        assert format_value(35.0) == "35.00"
        assert format_value(-0.5) == "-0.50"
        assert format_value(0.125) == "0.125"
        assert format_value(35) == "35"
        assert format_value("red") == "red"

    def test_round_trip_on_random_trees(self):
        rng = np.random.default_rng(23)
        schema = make_rich_schema()
        for _ in range(200):
            tree = random_tree(rng, schema)
            assert parse_tree(render_tree(tree), schema) == tree

    def test_render_parse_render_is_idempotent(self, iris_schema):
        messy = (
            "|-- PETAL WIDTH (CM) <= 0.8\n|  |--- class: Setosa\n"
            "|- petal width (cm) > 0.80\n| |- class: virginica"
        )
        once = render_tree(parse_tree(messy, iris_schema))
        assert render_tree(parse_tree(once, iris_schema)) == once

    def test_indent_depth_matches_node_depth(self):
        rng = np.random.default_rng(29)
        schema = make_rich_schema()

        def expected_depths(node, depth=0):
            if isinstance(node, Leaf):
                return [depth]
            return (
                [depth]
                + expected_depths(node.true_child, depth + 1)
                + [depth]
                + expected_depths(node.false_child, depth + 1)
            )

        for _ in range(20):
            tree = random_tree(rng, schema)
            lines = render_tree(tree).split("\n")
            depths = [line.count("|") - 1 for line in lines]
            assert depths == expected_depths(tree.root)


class TestExtractTreeBlock:
    def test_picks_block_out_of_prose(self):
        response = (
            "Sure! Here is the tree you asked for.\n\nDecision tree:\n"
            "|- x <= 1\n| |- class: a\n|- x > 1\n| |- class: b\n\nHope this helps."
        )
        assert extract_tree_block(response) == "|- x <= 1\n| |- class: a\n|- x > 1\n| |- class: b"

    def test_handles_code_fences(self):
        response = "```\n|- x <= 1\n| |- class: a\n|- x > 1\n| |- class: b\n```"
        assert extract_tree_block(response).startswith("|- x <= 1")

    def test_first_block_wins(self):
        response = "|- class: a\n\n|- class: b"
        assert extract_tree_block(response) == "|- class: a"

    def test_no_bars_gives_empty(self):
        assert extract_tree_block("no tree here") == ""


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=400))
def test_fuzz_arbitrary_text_never_crashes(text):
    schema = make_rich_schema()
    try:
        result = parse_tree(text, schema)
        assert isinstance(result, DecisionTree)
    except TreeParseError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="|- <=>!:.\nclaseto0189weight", max_size=300))
def test_fuzz_grammar_like_text_never_crashes(text):
    schema = make_rich_schema()
    try:
        result = parse_tree(text, schema)
        assert isinstance(result, DecisionTree)
    except TreeParseError:
        pass
