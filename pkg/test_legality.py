"""
Tests for legality masks, masked sampling and the random walk.
"""

import logging
import random

import pytest
import torch

from models.errors import SamplingError, SequenceValidationError
from utils.legality import (
    SequenceBuilder,
    legal_mask,
    legal_mask_batched,
    masked_distribution,
    masked_sample_step,
    random_walk,
)
from utils.prefix_graph import Coordinate, CoordinateSequence, check_sequence, sequence_to_graph, validate


def random_partials(n: int, count: int, seed: int):
    rng = random.Random(seed)
    partials = []
    while len(partials) < count:
        seq = random_walk(n, rng)
        cut = rng.randrange(1, len(seq))
        partials.append(CoordinateSequence(n, seq.coords[:cut]))
    return partials


class TestScalarMask:
    def test_finished_row_moves_to_next_diagonal(self):
        partial = CoordinateSequence.of(6, [(0, 0), (1, 1), (1, 0)])
        assert legal_mask(partial, 6).valid_coordinates() == [Coordinate(2, 2)]

    def test_open_row_uses_columns_of_previous_row(self, six_bit_sequence):
        partial = CoordinateSequence(6, six_bit_sequence.coords[:6])
        assert partial.last == (3, 3)
        assert legal_mask(partial, 6).valid_coordinates() == [Coordinate(3, 0), Coordinate(3, 2)]

    def test_polarity(self):
        mask = legal_mask(CoordinateSequence.of(4, [(0, 0)]), 4)
        assert mask.row_mask == (True, False, True, True)
        assert mask.col_mask == (True, False, True, True)

    def test_complete_sequence_has_no_successor(self, six_bit_sequence):
        with pytest.raises(SequenceValidationError):
            legal_mask(six_bit_sequence, 6)

    def test_invalid_partial_rejected(self):
        with pytest.raises(SequenceValidationError):
            legal_mask(CoordinateSequence.of(4, [(0, 0), (1, 0)]), 4)

    def test_every_admitted_coordinate_extends_legally(self):
        for partial in random_partials(8, 200, seed=5):
            for coord in legal_mask(partial, 8).valid_coordinates():
                check_sequence(CoordinateSequence(8, partial.coords + (coord,)), require_complete=False)


class TestBatchedMask:
    def test_matches_scalar(self):
        partials = random_partials(16, 500, seed=1)
        for partial, batched in zip(partials, legal_mask_batched(partials, 16)):
            assert batched == legal_mask(partial, 16)

    @pytest.mark.slow
    def test_matches_scalar_ten_thousand_states(self):
        partials = random_partials(16, 10_000, seed=2)
        for partial, batched in zip(partials, legal_mask_batched(partials, 16)):
            assert batched == legal_mask(partial, 16)

    def test_empty_batch(self):
        assert legal_mask_batched([], 8) == []


class TestMaskedSampling:
    def test_distribution_zeroes_invalid_entries(self):
        logits = torch.randn(3, 6, generator=torch.Generator().manual_seed(0))
        invalid = torch.tensor([[True, False, True, False, True, True]] * 3)
        probs = masked_distribution(logits, invalid, temperature=0.8)
        assert torch.all(probs[invalid] == 0)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(3, dtype=probs.dtype))

    def test_samples_only_valid_coordinates(self):
        partial = CoordinateSequence.of(6, [(0, 0), (1, 1), (1, 0), (2, 2), (2, 0), (3, 3)])
        mask = legal_mask(partial, 6)
        generator = torch.Generator().manual_seed(0)
        uniform = [1.0 / 6] * 6
        seen = {masked_sample_step(uniform, uniform, mask, 0.8, generator) for _ in range(200)}
        assert seen == {Coordinate(3, 0), Coordinate(3, 2)}

    def test_uniform_probabilities_split_evenly(self):
        partial = CoordinateSequence.of(6, [(0, 0), (1, 1), (1, 0), (2, 2), (2, 0), (3, 3)])
        mask = legal_mask(partial, 6)
        generator = torch.Generator().manual_seed(0)
        uniform = [1.0 / 6] * 6
        draws = [masked_sample_step(uniform, uniform, mask, 1.0, generator) for _ in range(10_000)]
        share = draws.count(Coordinate(3, 0)) / len(draws)
        assert draws.count(Coordinate(3, 0)) + draws.count(Coordinate(3, 2)) == 10_000
        assert share == pytest.approx(0.5, abs=0.02)

    @pytest.mark.parametrize("cols", [
        [0.001, 0.001, 0.001, 0.995, 0.001, 0.001],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    ])
    def test_mass_on_invalid_column_is_never_sampled(self, cols):
        partial = CoordinateSequence.of(6, [(0, 0), (1, 1), (1, 0), (2, 2), (2, 0), (3, 3)])
        mask = legal_mask(partial, 6)
        generator = torch.Generator().manual_seed(1)
        rows = [1.0 / 6] * 6
        seen = {masked_sample_step(rows, cols, mask, 1.0, generator) for _ in range(500)}
        assert seen <= {Coordinate(3, 0), Coordinate(3, 2)}
        assert all(coord.col != 3 for coord in seen)

    def test_degenerate_mass_falls_back_to_uniform(self, caplog):
        mask = legal_mask(CoordinateSequence.of(4, [(0, 0), (1, 1), (1, 0)]), 4)
        probabilities = [1.0, 0.0, 0.0, 0.0]
        with caplog.at_level(logging.WARNING):
            coord = masked_sample_step(probabilities, probabilities, mask)
        assert coord == (2, 2)
        assert "Degenerate" in caplog.text

    def test_degenerate_mass_raises_without_fallback(self):
        mask = legal_mask(CoordinateSequence.of(4, [(0, 0)]), 4)
        with pytest.raises(SamplingError):
            masked_sample_step([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], mask, fallback=False)

    def test_rejects_bad_temperature(self):
        mask = legal_mask(CoordinateSequence.of(4, [(0, 0)]), 4)
        with pytest.raises(SamplingError):
            masked_sample_step([0.25] * 4, [0.25] * 4, mask, temperature=0.0)


class TestRandomWalk:
    @pytest.mark.parametrize("n", [2, 3, 4, 8, 16])
    def test_walks_are_valid(self, n):
        rng = random.Random(n)
        for _ in range(100):
            seq = random_walk(n, rng)
            assert seq.coords[0] == (0, 0)
            assert seq.last == (n - 1, 0)
            assert validate(sequence_to_graph(seq)).valid

    def test_seeded_walks_repeat(self):
        first = [random_walk(8, random.Random(42)) for _ in range(3)]
        second = [random_walk(8, random.Random(42)) for _ in range(3)]
        assert first == second

    def test_builder_candidates_follow_mask(self, six_bit_sequence):
        builder = SequenceBuilder(6)
        for coord in six_bit_sequence.coords[1:6]:
            builder.append(coord)
        assert sorted(builder.candidates()) == [(3, 0), (3, 2)]
        assert not builder.done
