"""
Tests for the JSONL design database.
"""

import random
import threading

import pytest

from models.errors import DatabaseError
from services.design_db import DesignDatabase, adp_sort_key, make_record, proxy_record
from utils.legality import random_walk
from utils.prefix_graph import CONSTRUCTORS, design_key, graph_to_sequence, ripple, sklansky


def walks(n: int, count: int, seed: int):
    rng = random.Random(seed)
    return [random_walk(n, rng) for _ in range(count)]


class TestInsert:
    def test_duplicate_key_is_ignored(self, tmp_path, six_bit_sequence):
        database = DesignDatabase(str(tmp_path / "db.jsonl"))
        assert database.insert(proxy_record(six_bit_sequence, iteration=1))
        assert not database.insert(proxy_record(six_bit_sequence, iteration=2))
        assert len(database) == 1
        assert database.get(six_bit_sequence.key()).iteration == 1
        assert len((tmp_path / "db.jsonl").read_text().splitlines()) == 1

    def test_seeded_sklansky_is_top_one(self, tmp_path):
        database = DesignDatabase(str(tmp_path / "db.jsonl"))
        assert database.seed(CONSTRUCTORS[name](16) for name in sorted(CONSTRUCTORS)) == 4
        best = database.top_k_by_adp(1)[0]
        assert best.key == design_key(sklansky(16))
        assert (best.source, best.iteration) == ("seeded", 0)

    def test_top_k_matches_sort_oracle(self):
        database = DesignDatabase()
        database.insert_many(proxy_record(s, iteration=i) for i, s in enumerate(walks(8, 200, 0)))
        expected = sorted(database.records(), key=lambda r: (r.area * r.delay, r.size, r.iteration))
        for k in (1, 5, 17, 1000):
            assert database.top_k_by_adp(k) == expected[:k]
        assert database.top_k_by_adp(0) == []

    def test_width_filter(self):
        database = DesignDatabase()
        database.seed([sklansky(8), sklansky(16), ripple(8)])
        assert {r.width for r in database.top_k_by_adp(5, width=8)} == {8}
        assert len(database.records(16)) == 1

    def test_rejects_mismatched_metrics(self, six_bit_sequence):
        record = proxy_record(six_bit_sequence).model_copy(update={"size": 9})
        with pytest.raises(DatabaseError):
            DesignDatabase().insert(record)

    def test_rejects_mismatched_key(self, six_bit_sequence):
        record = proxy_record(six_bit_sequence).model_copy(update={"key": "0" * 64})
        with pytest.raises(DatabaseError):
            DesignDatabase().insert(record)

    def test_reward_is_negative_area_delay(self, six_bit_sequence):
        record = make_record(six_bit_sequence, 2.5, 4.0, reward_mode="external")
        assert record.reward == -10.0
        assert record.adp == 10.0
        assert adp_sort_key(record) == (10.0, 8, 0)


class TestPersistence:
    def test_reload_keeps_records(self, tmp_path):
        path = str(tmp_path / "db.jsonl")
        database = DesignDatabase(path)
        database.insert_many(proxy_record(s, iteration=3) for s in walks(8, 30, 1))
        reloaded = DesignDatabase(path)
        assert len(reloaded) == len(database)
        assert reloaded.records() == database.records()

    def test_dedupe_rewrites_file(self, tmp_path, six_bit_sequence):
        path = tmp_path / "db.jsonl"
        first = proxy_record(six_bit_sequence, iteration=1).model_dump_json()
        second = proxy_record(six_bit_sequence, iteration=5).model_dump_json()
        other = proxy_record(graph_to_sequence(ripple(6)), iteration=2).model_dump_json()
        path.write_text("\n".join([first, other, second]) + "\n")

        database = DesignDatabase(str(path))
        assert len(database) == 2
        assert database.dedupe() == 1
        assert path.read_text().splitlines() == [first, other]
        assert database.get(six_bit_sequence.key()).iteration == 1

    def test_corrupt_line(self, tmp_path):
        path = tmp_path / "db.jsonl"
        path.write_text('{"key": "abc"}\n')
        with pytest.raises(DatabaseError) as info:
            DesignDatabase(str(path))
        assert info.value.details["line"] == 1

    def test_in_memory_dedupe_is_noop(self):
        assert DesignDatabase().dedupe() == 0


class TestConcurrency:
    def test_threaded_inserts(self, tmp_path):
        path = str(tmp_path / "db.jsonl")
        database = DesignDatabase(path)
        sequences = walks(8, 120, 2)

        def worker(offset: int) -> None:
            for seq in sequences[offset::4] + sequences[:30]:
                database.insert(proxy_record(seq))

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        unique = {s.key() for s in sequences}
        assert len(database) == len(unique)
        lines = (tmp_path / "db.jsonl").read_text().splitlines()
        assert len(lines) == len(unique)
