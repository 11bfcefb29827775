"""
Tests for prefix graphs, coordinate sequences, metrics and constructors.
"""

import random

import numpy as np
import pytest

from models.errors import GraphValidationError, MergeRuleError, SequenceValidationError
from utils.legality import random_walk
from utils.prefix_graph import (
    CONSTRUCTORS,
    Coordinate,
    CoordinateSequence,
    PrefixGraph,
    brent_kung,
    check_sequence,
    depth,
    design_key,
    graph_from_json,
    graph_to_json,
    graph_to_sequence,
    kogge_stone,
    levels,
    max_sequence_length,
    min_depth,
    resolve_parents,
    ripple,
    sequence_from_json,
    sequence_to_graph,
    sequence_to_json,
    size,
    sklansky,
    validate,
)


class TestSixBitExample:
    def test_metrics(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence)
        assert size(graph) == 8
        assert depth(graph) == 4

    def test_sequence_is_scan_order(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence)
        assert graph_to_sequence(graph) == six_bit_sequence

    def test_parents(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence)
        assert resolve_parents(graph, (5, 0)) == (Coordinate(5, 4), Coordinate(3, 0))
        assert resolve_parents(graph, (4, 2)) == (Coordinate(4, 4), Coordinate(3, 2))

    def test_levels(self, six_bit_sequence):
        level = levels(sequence_to_graph(six_bit_sequence))
        assert level[Coordinate(4, 0)] == 3
        assert level[Coordinate(2, 0)] == 2
        assert all(level[Coordinate(i, i)] == 0 for i in range(6))


class TestConstructors:
    def test_sklansky_16(self):
        graph = sklansky(16)
        assert (size(graph), depth(graph)) == (32, 5)

    def test_kogge_stone_16(self):
        graph = kogge_stone(16)
        assert (size(graph), depth(graph)) == (49, 5)

    def test_brent_kung_16_size(self):
        assert size(brent_kung(16)) == 26

    @pytest.mark.parametrize("n", [2, 3, 8, 16])
    def test_ripple(self, n):
        graph = ripple(n)
        assert (size(graph), depth(graph)) == (n - 1, n)

    @pytest.mark.parametrize("name", sorted(CONSTRUCTORS))
    @pytest.mark.parametrize("n", [2, 5, 8, 13, 16, 32])
    def test_constructors_are_valid(self, name, n):
        assert validate(CONSTRUCTORS[name](n)).valid

    def test_width_below_two_rejected(self):
        with pytest.raises(GraphValidationError):
            sklansky(1)


class TestValidate:
    def test_merge_violation_is_reported(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence).with_toggled(5, 1)
        report = validate(graph)
        assert not report.valid
        assert report.rules() == ["merge"]
        assert report.violations[0].coordinates == [[5, 1]]

    def test_missing_input_bit(self):
        graph = ripple(4).with_toggled(2, 2)
        report = validate(graph)
        assert "input" in report.rules()
        assert any(v.message == "input rule violated at bit 2" for v in report.violations)

    def test_missing_output(self):
        graph = ripple(4).with_toggled(3, 0)
        report = validate(graph)
        assert any(v.message == "output rule violated at row 3" for v in report.violations)

    def test_toggling_a_merge_node_only_breaks_merges(self):
        rng = random.Random(3)
        for _ in range(50):
            graph = sequence_to_graph(random_walk(8, rng))
            row = rng.randrange(2, 8)
            col = rng.randrange(1, row)
            report = validate(graph.with_toggled(row, col))
            assert set(report.rules()) <= {"merge"}

    def test_resolve_parents_raises_on_broken_merge(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence).with_toggled(5, 1)
        with pytest.raises(MergeRuleError):
            resolve_parents(graph, (5, 1))

    def test_graph_to_sequence_rejects_invalid(self):
        with pytest.raises(GraphValidationError):
            graph_to_sequence(ripple(4).with_toggled(3, 0))

    def test_entries_above_diagonal_rejected(self):
        with pytest.raises(GraphValidationError):
            PrefixGraph.from_nodes(4, [(1, 2)])
        with pytest.raises(GraphValidationError):
            PrefixGraph.from_matrix(np.triu(np.ones((4, 4), dtype=bool)))


class TestCheckSequence:
    def test_must_start_at_origin(self):
        with pytest.raises(SequenceValidationError) as info:
            check_sequence(CoordinateSequence.of(3, [(1, 1), (1, 0)]), require_complete=False)
        assert info.value.index == 0

    def test_row_must_advance_to_next_diagonal(self):
        with pytest.raises(SequenceValidationError) as info:
            check_sequence(CoordinateSequence.of(3, [(0, 0), (1, 0)]), require_complete=False)
        assert info.value.index == 1

    def test_merge_rule(self):
        seq = CoordinateSequence.of(4, [(0, 0), (1, 1), (1, 0), (2, 2), (2, 0), (3, 3), (3, 1)])
        with pytest.raises(SequenceValidationError) as info:
            check_sequence(seq, require_complete=False)
        assert info.value.index == 6

    def test_missing_terminal(self):
        seq = CoordinateSequence.of(3, [(0, 0), (1, 1), (1, 0)])
        with pytest.raises(SequenceValidationError) as info:
            check_sequence(seq)
        assert info.value.index == 3
        check_sequence(seq, require_complete=False)

    def test_random_walks_convert_to_valid_graphs(self):
        rng = random.Random(11)
        for n in (2, 4, 8, 16):
            for _ in range(50):
                seq = random_walk(n, rng)
                graph = sequence_to_graph(seq)
                assert validate(graph).valid
                assert graph_to_sequence(graph) == seq
                assert len(seq) <= max_sequence_length(n)


class TestHelpers:
    def test_min_depth(self):
        assert min_depth(16) == 5
        assert min_depth(6) == 4
        assert min_depth(2) == 2

    def test_max_sequence_length(self):
        assert max_sequence_length(16) == 136

    def test_design_key_matches_sequence_key(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence)
        assert design_key(graph) == six_bit_sequence.key()
        assert design_key(graph) != design_key(ripple(6))

    def test_json_interchange(self, six_bit_sequence):
        graph = sequence_to_graph(six_bit_sequence)
        assert graph_from_json(graph_to_json(graph)) == graph
        assert sequence_from_json(sequence_to_json(six_bit_sequence)) == six_bit_sequence

    def test_matrix_round_trip(self):
        graph = kogge_stone(8)
        assert PrefixGraph.from_matrix(graph.to_matrix()) == graph
