"""
Hardware semantics of a prefix graph: generate/propagate simulation,
structural Verilog export and the external synthesis hook.
"""

import json
import logging
import os
import re
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from models.config import SYNTH_CMD_ENV
from models.errors import GraphValidationError, SynthesisError, SynthesisTimeoutError
from models.schemas import SynthesisResult
from utils.prefix_graph import Coordinate, PrefixGraph, depth, levels, resolve_parents, size, validate

log = logging.getLogger(__name__)

DEFAULT_SYNTH_TIMEOUT = 300.0
MAX_SIM_WIDTH = 64

_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")


def _require_valid(graph: PrefixGraph) -> None:
    report = validate(graph)
    if not report.valid:
        first = report.violations[0]
        raise GraphValidationError(first.message, first.rule, [tuple(c) for c in first.coordinates])


def evaluation_order(graph: PrefixGraph) -> List[Coordinate]:
    """Merge nodes by level, ties broken by scan order."""
    level = levels(graph)
    merges = graph.merge_nodes()
    scan_index = {node: i for i, node in enumerate(merges)}
    return sorted(merges, key=lambda node: (level[node], scan_index[node]))


# -----------------------------------------------------------------------------
# Simulation
# -----------------------------------------------------------------------------
def simulate_add_batch(
    graph: PrefixGraph,
    a: Sequence[int],
    b: Sequence[int],
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized adder evaluation; returns (sums uint64[batch], carry_out bool[batch])."""
    _require_valid(graph)
    n = graph.width
    if n > MAX_SIM_WIDTH:
        raise ValueError(f"simulation supports widths up to {MAX_SIM_WIDTH}, got {n}")

    a_words = np.asarray(a, dtype=np.uint64).reshape(-1)
    b_words = np.asarray(b, dtype=np.uint64).reshape(-1)
    if a_words.shape != b_words.shape:
        raise ValueError(f"operand batches differ in length: {a_words.shape} vs {b_words.shape}")
    if n < 64:
        limit = np.uint64(1 << n)
        if (a_words >= limit).any() or (b_words >= limit).any():
            raise ValueError(f"operands must be {n}-bit words")

    shifts = np.arange(n, dtype=np.uint64)
    a_bits = ((a_words[:, None] >> shifts) & np.uint64(1)).astype(bool)
    b_bits = ((b_words[:, None] >> shifts) & np.uint64(1)).astype(bool)

    gen: Dict[Coordinate, np.ndarray] = {}
    prop: Dict[Coordinate, np.ndarray] = {}
    for i in range(n):
        node = Coordinate(i, i)
        gen[node] = a_bits[:, i] & b_bits[:, i]
        prop[node] = a_bits[:, i] ^ b_bits[:, i]

    for node in evaluation_order(graph):
        msp, lsp = resolve_parents(graph, node)
        gen[node] = gen[msp] | (prop[msp] & gen[lsp])
        prop[node] = prop[msp] & prop[lsp]

    sums = prop[Coordinate(0, 0)].astype(np.uint64)
    for j in range(1, n):
        bit = prop[Coordinate(j, j)] ^ gen[Coordinate(j - 1, 0)]
        sums |= bit.astype(np.uint64) << np.uint64(j)
    return sums, gen[Coordinate(n - 1, 0)].copy()


def simulate_add(graph: PrefixGraph, a: int, b: int) -> Tuple[int, bool]:
    sums, carries = simulate_add_batch(graph, [a], [b])
    return int(sums[0]), bool(carries[0])


# -----------------------------------------------------------------------------
# Netlist export
# -----------------------------------------------------------------------------
INPUT_CELL = "pf_input_cell"
MERGE_CELL = "pf_merge_cell"

_CELL_LIBRARY = f"""module {INPUT_CELL} (a, b, g, p);
  input a, b;
  output g, p;
  and u_g (g, a, b);
  xor u_p (p, a, b);
endmodule

module {MERGE_CELL} (g_hi, p_hi, g_lo, p_lo, g, p);
  input g_hi, p_hi, g_lo, p_lo;
  output g, p;
  wire t;
  and u_t (t, p_hi, g_lo);
  or u_g (g, g_hi, t);
  and u_p (p, p_hi, p_lo);
endmodule
"""


def _wire(kind: str, node: Tuple[int, int]) -> str:
    return f"{kind}_{node[0]}_{node[1]}"


def export_netlist(graph: PrefixGraph, name: str) -> str:
    """
    Structural Verilog for the adder.

    One input cell per bit, one merge cell per merge node, one XOR per
    sum bit. Wire ``g_j_i`` / ``p_j_i`` carries the span j:i.
    """
    _require_valid(graph)
    if not _IDENTIFIER.match(name):
        raise ValueError(f"invalid module name: {name!r}")
    n = graph.width
    merges = evaluation_order(graph)

    lines = [
        f"// prefix adder: width={n} size={size(graph)} depth={depth(graph)}",
        _CELL_LIBRARY,
        f"module {name} (a, b, sum, cout);",
        f"  input [{n - 1}:0] a;",
        f"  input [{n - 1}:0] b;",
        f"  output [{n - 1}:0] sum;",
        "  output cout;",
    ]
    for node in graph.nodes():
        lines.append(f"  wire {_wire('g', node)}, {_wire('p', node)};")

    for i in range(n):
        node = (i, i)
        lines.append(
            f"  {INPUT_CELL} in_{i} (.a(a[{i}]), .b(b[{i}]), "
            f".g({_wire('g', node)}), .p({_wire('p', node)}));"
        )
    for node in merges:
        msp, lsp = resolve_parents(graph, node)
        lines.append(
            f"  {MERGE_CELL} m_{node.row}_{node.col} ("
            f".g_hi({_wire('g', msp)}), .p_hi({_wire('p', msp)}), "
            f".g_lo({_wire('g', lsp)}), .p_lo({_wire('p', lsp)}), "
            f".g({_wire('g', node)}), .p({_wire('p', node)}));"
        )

    lines.append(f"  xor s_0 (sum[0], {_wire('p', (0, 0))}, 1'b0);")
    for j in range(1, n):
        lines.append(f"  xor s_{j} (sum[{j}], {_wire('p', (j, j))}, {_wire('g', (j - 1, 0))});")
    lines.append(f"  assign cout = {_wire('g', (n - 1, 0))};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# -----------------------------------------------------------------------------
# External synthesis hook
# -----------------------------------------------------------------------------
def _as_text(data: Union[str, bytes, None]) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    return data


def _parse_hook_output(stdout: str) -> dict:
    try:
        payload = json.loads(stdout)
    except json.JSONDecodeError:
        lines = [line for line in stdout.splitlines() if line.strip()]
        if not lines:
            raise
        payload = json.loads(lines[-1])
    if not isinstance(payload, dict):
        raise ValueError("hook output is not a JSON object")
    return payload


def synthesize_external(
    netlist: str,
    hook_command: Optional[str],
    timeout: float = DEFAULT_SYNTH_TIMEOUT,
) -> SynthesisResult:
    """Run ``<command> <netlist-path>`` and parse {"area", "delay"} from its stdout."""
    if not hook_command:
        raise SynthesisError(f"No synthesis hook configured (set {SYNTH_CMD_ENV})")

    with tempfile.TemporaryDirectory(prefix="prefixforge-") as workdir:
        path = Path(workdir) / "design.v"
        path.write_text(netlist, encoding="utf-8")
        argv = shlex.split(hook_command) + [str(path)]
        try:
            completed = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            tool_log = _as_text(exc.stdout) + _as_text(exc.stderr)
            raise SynthesisTimeoutError(
                f"Synthesis hook timed out after {timeout}s", tool_log, hook_command
            ) from exc
        except OSError as exc:
            raise SynthesisError(f"Could not launch synthesis hook: {exc}", "", hook_command) from exc

    tool_log = completed.stdout + completed.stderr
    if completed.returncode != 0:
        raise SynthesisError(
            f"Synthesis hook exited with status {completed.returncode}", tool_log, hook_command
        )
    try:
        payload = _parse_hook_output(completed.stdout)
        return SynthesisResult(area=payload["area"], delay=payload["delay"], tool_log=tool_log)
    except (ValueError, KeyError, TypeError, ValidationError) as exc:
        raise SynthesisError(f"Malformed synthesis hook output: {exc}", tool_log, hook_command) from exc


class SynthesisService:
    """Runs the synthesis hook for graphs, several child processes at a time."""

    def __init__(
        self,
        command: Optional[str] = None,
        timeout: float = DEFAULT_SYNTH_TIMEOUT,
        max_workers: int = 4,
    ):
        self.command = command or os.environ.get(SYNTH_CMD_ENV)
        self.timeout = timeout
        self.max_workers = max_workers

    @property
    def configured(self) -> bool:
        return bool(self.command)

    def synthesize(self, graph: PrefixGraph, name: str = "prefix_adder") -> SynthesisResult:
        netlist = export_netlist(graph, name)
        result = synthesize_external(netlist, self.command, self.timeout)
        log.debug(f"Synthesized width-{graph.width} design: area={result.area} delay={result.delay}")
        return result

    def synthesize_many(
        self, graphs: Sequence[PrefixGraph]
    ) -> List[Union[SynthesisResult, SynthesisError]]:
        """Results in input order; failures are returned, not raised."""

        def run(graph: PrefixGraph) -> Union[SynthesisResult, SynthesisError]:
            try:
                return self.synthesize(graph)
            except SynthesisError as exc:
                log.warning(f"Synthesis failed: {exc}")
                return exc

        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(run, graphs))
