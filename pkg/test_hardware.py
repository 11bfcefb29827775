"""
Tests for adder simulation, netlist export and the synthesis hook.
"""

import random
import re

import numpy as np
import pytest

from models.errors import GraphValidationError, SynthesisError, SynthesisTimeoutError
from services.hardware_service import (
    SynthesisService,
    evaluation_order,
    export_netlist,
    simulate_add,
    simulate_add_batch,
    synthesize_external,
)
from models.config import SYNTH_CMD_ENV
from utils.legality import random_walk
from utils.prefix_graph import CONSTRUCTORS, levels, ripple, sequence_to_graph, size, sklansky


class TestSimulation:
    @pytest.mark.parametrize("name", sorted(CONSTRUCTORS))
    def test_exhaustive_four_bit(self, name):
        graph = CONSTRUCTORS[name](4)
        a, b = np.meshgrid(np.arange(16), np.arange(16))
        a, b = a.ravel(), b.ravel()
        sums, carries = simulate_add_batch(graph, a, b)
        total = a + b
        assert np.array_equal(sums, (total & 0xF).astype(np.uint64))
        assert np.array_equal(carries, total >= 16)

    def test_random_walk_graphs_eight_bit(self):
        rng = random.Random(0)
        operands = np.random.default_rng(0)
        for _ in range(100):
            graph = sequence_to_graph(random_walk(8, rng))
            a = operands.integers(0, 256, size=5000)
            b = operands.integers(0, 256, size=5000)
            sums, carries = simulate_add_batch(graph, a, b)
            assert np.array_equal(sums, ((a + b) & 0xFF).astype(np.uint64))
            assert np.array_equal(carries, (a + b) >= 256)

    def test_sixty_four_bit(self):
        graph = sklansky(64)
        a, b = 2**64 - 1, 1
        assert simulate_add(graph, a, b) == (0, True)
        assert simulate_add(graph, 12345678901234, 98765432109876) == (111111111011110, False)

    def test_six_bit_example(self, six_bit_sequence):
        assert simulate_add(sequence_to_graph(six_bit_sequence), 13, 9) == (22, False)
        assert simulate_add(sequence_to_graph(six_bit_sequence), 63, 1) == (0, True)

    def test_invalid_graph_rejected(self):
        with pytest.raises(GraphValidationError):
            simulate_add(ripple(4).with_toggled(3, 0), 1, 2)

    def test_operand_out_of_range(self):
        with pytest.raises(ValueError):
            simulate_add(ripple(4), 16, 0)

    def test_mismatched_batches(self):
        with pytest.raises(ValueError):
            simulate_add_batch(ripple(4), [1, 2], [3])

    def test_evaluation_order_respects_levels(self):
        graph = sklansky(16)
        level = levels(graph)
        order = [level[node] for node in evaluation_order(graph)]
        assert order == sorted(order)
        assert len(order) == size(graph)


class TestNetlist:
    def test_structure(self):
        graph = sklansky(8)
        netlist = export_netlist(graph, "sk8")
        assert "module sk8 (a, b, sum, cout);" in netlist
        assert len(re.findall(r"^\s+pf_merge_cell m_", netlist, flags=re.M)) == size(graph)
        assert len(re.findall(r"^\s+pf_input_cell in_", netlist, flags=re.M)) == 8
        assert "assign cout = g_7_0;" in netlist
        assert "xor s_7 (sum[7], p_7_7, g_6_0);" in netlist

    def test_header_reports_metrics(self):
        assert export_netlist(ripple(4), "rca4").startswith("// prefix adder: width=4 size=3 depth=4")

    def test_invalid_module_name(self):
        with pytest.raises(ValueError):
            export_netlist(ripple(4), "4bad name")

    def test_invalid_graph(self):
        with pytest.raises(GraphValidationError):
            export_netlist(ripple(4).with_toggled(2, 2), "bad")


class TestSynthesisHook:
    def test_parses_area_and_delay(self, stub_hook):
        command = stub_hook("""
            import json, sys
            assert open(sys.argv[1]).read().startswith("// prefix adder")
            print(json.dumps({"area": 1.0, "delay": 2.0}))
        """)
        result = synthesize_external(export_netlist(ripple(4), "rca4"), command)
        assert (result.area, result.delay) == (1.0, 2.0)

    def test_uses_last_line_after_tool_chatter(self, stub_hook):
        command = stub_hook("""
            print("reading design ...")
            print('{"area": 3.5, "delay": 0.25}')
        """)
        result = synthesize_external("module m; endmodule\n", command)
        assert (result.area, result.delay) == (3.5, 0.25)
        assert "reading design" in result.tool_log

    def test_nonzero_exit(self, stub_hook):
        command = stub_hook("""
            import sys
            print("license error", file=sys.stderr)
            sys.exit(3)
        """)
        with pytest.raises(SynthesisError) as info:
            synthesize_external("module m; endmodule\n", command)
        assert "license error" in info.value.tool_log

    def test_malformed_output(self, stub_hook):
        command = stub_hook('print("area=1 delay=2")')
        with pytest.raises(SynthesisError):
            synthesize_external("module m; endmodule\n", command)

    def test_missing_field(self, stub_hook):
        command = stub_hook('print(\'{"area": 1.0}\')')
        with pytest.raises(SynthesisError):
            synthesize_external("module m; endmodule\n", command)

    def test_timeout(self, stub_hook):
        command = stub_hook("""
            import time
            time.sleep(10)
        """)
        with pytest.raises(SynthesisTimeoutError):
            synthesize_external("module m; endmodule\n", command, timeout=0.5)

    def test_no_command(self):
        with pytest.raises(SynthesisError):
            synthesize_external("module m; endmodule\n", None)

    def test_service_reads_environment(self, stub_hook, monkeypatch):
        command = stub_hook('print(\'{"area": 2.0, "delay": 4.0}\')')
        monkeypatch.setenv(SYNTH_CMD_ENV, command)
        service = SynthesisService()
        assert service.configured
        assert service.synthesize(ripple(4)).area == 2.0

    def test_synthesize_many_returns_failures(self, stub_hook):
        command = stub_hook("""
            import json, sys
            text = open(sys.argv[1]).read()
            if "width=4" in text:
                sys.exit(1)
            print(json.dumps({"area": 5.0, "delay": 1.0}))
        """)
        results = SynthesisService(command, max_workers=2).synthesize_many([ripple(4), ripple(6), sklansky(8)])
        assert isinstance(results[0], SynthesisError)
        assert [r.area for r in results[1:]] == [5.0, 5.0]
