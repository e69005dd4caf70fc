"""Deterministic generation-by-generation scenario execution.

One scenario = one graph + one application (forwarding baseline, coded
recovery, consensus averaging, neural training, or a custom function
assignment) + seeded randomness.
Every message is metered per arc as payload symbols plus the
application's header: coded packets carry their N-symbol coding vector
in band, average decomposition carries one count symbol (materialized in
the packet), neural messages carry a generation tag, and raw forwarding
is charged payload only. Identical scenarios (same seed) produce
identical results, byte for byte.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from nfcsim.afc import FunctionAssignment, decompose_average, install_functions
from nfcsim.errors import MismatchedScenarios, ScenarioError
from nfcsim.field import FieldSpec
from nfcsim.graph import NfcGraph, NodeRole, TopologyConfig, build_graph
from nfcsim.learning.consensus import ConsensusState, consensus_step
from nfcsim.learning.neural import (
    FailureModel,
    NeuralTreeNetwork,
    nn_train,
    separable_dataset,
)
from nfcsim.rlnc import run_recovery_experiment

# "custom" runs a caller-supplied FunctionAssignment; the file-based CLI
# drives the four named applications.
APPLICATIONS = ("forwarding", "rlnc", "consensus", "neural", "custom")

# Per-message header symbols on top of the payload. Forwarding is charged
# payload only; the coded-recovery header is the N-symbol coding vector.
NEURAL_MESSAGE_SYMBOLS = 2  # activity (or gradient contribution) + generation tag

TRAJECTORY_COLUMNS = ("generation", "value", "dropped_nodes", "lost_messages")
ARC_COLUMNS = ("src", "dst", "messages", "symbols")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Named substream: independent draws per (seed, purpose, ...) key.

    Each randomness source (source data, weight init, dropout, message
    loss) draws from its own substream, so enabling or disabling one
    never perturbs another's draws.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class DataModel:
    """Synthetic source statistics for real-domain applications.

    Digital applications draw uniform field symbols instead; the domain
    selector is the scenario's field section."""

    mean: float = 0.0
    std: float = 1.0


@dataclass(frozen=True)
class EtaSchedule:
    kind: str = "constant"  # "constant" | "harmonic"
    value: float = 0.5

    def at(self, t: int) -> float:
        if self.kind == "harmonic":
            return 1.0 / (t + 1)
        return self.value


@dataclass(frozen=True)
class NeuralParams:
    samples: int = 32
    epochs: int = 10
    margin: float = 0.5


@dataclass(frozen=True)
class Scenario:
    """Fully resolved run description; validates per-application needs."""

    topology: TopologyConfig
    application: str
    seed: int = 0
    generations: int = 0
    packet_length: int = 1
    field: FieldSpec | None = None
    n_prime: int | None = None
    trials: int | None = None
    failures: FailureModel = FailureModel()
    data: DataModel = DataModel()
    eta: EtaSchedule = EtaSchedule()
    neural: NeuralParams = NeuralParams()
    assignment: FunctionAssignment | None = None  # custom application only

    def validation_errors(self) -> list[str]:
        problems: list[str] = []
        if self.application not in APPLICATIONS:
            problems.append(f"unknown application {self.application!r}")
            return problems
        if self.packet_length < 1:
            problems.append("packet_length must be >= 1")
        if self.application == "rlnc":
            if self.field is None:
                problems.append("rlnc requires a field section (digital domain)")
            if self.n_prime is None or self.n_prime < 0:
                problems.append("rlnc requires n_prime >= 0")
            if not self.trials:
                problems.append("rlnc requires trials >= 1")
            if self.failures.node_dropout_p or self.failures.message_loss_p:
                problems.append("rlnc scenarios run without failure injection")
        if self.application in ("consensus", "neural"):
            if self.field is not None:
                problems.append(f"{self.application} runs on the real domain, not a field")
        if self.application in ("forwarding", "consensus", "custom") and self.generations < 0:
            problems.append("generations must be >= 0")
        if self.application == "neural":
            if self.neural.samples < 1 or self.neural.epochs < 1:
                problems.append("neural requires samples >= 1 and epochs >= 1")
            if self.packet_length != 1:
                problems.append("neural scenarios use scalar activities (packet_length 1)")
        if self.application == "custom" and self.assignment is None:
            problems.append("custom application requires a FunctionAssignment")
        if self.application == "forwarding" and self.failures.message_loss_p:
            problems.append("forwarding has no downward messages to lose")
        return problems

    def validate(self) -> None:
        problems = self.validation_errors()
        if problems:
            raise ScenarioError("; ".join(problems))

    @property
    def effective_generations(self) -> int:
        if self.application == "rlnc":
            return int(self.trials or 0)
        if self.application == "neural":
            return self.neural.samples * self.neural.epochs
        return self.generations


class Metrics:
    """Per-arc message/symbol meters plus run-level counters.

    Totals always equal the sum of the per-arc counters; wall-clock time
    is informational and never serialized.
    """

    def __init__(self) -> None:
        self.arc_messages: dict[tuple[int, int], int] = {}
        self.arc_symbols: dict[tuple[int, int], int] = {}
        self.dropped_nodes = 0
        self.lost_messages = 0
        self.stale_skips = 0
        self.wall_clock = 0.0

    def record(self, arc: tuple[int, int], symbols: int, messages: int = 1) -> None:
        self.arc_messages[arc] = self.arc_messages.get(arc, 0) + messages
        self.arc_symbols[arc] = self.arc_symbols.get(arc, 0) + symbols * messages

    @property
    def total_symbols(self) -> int:
        return sum(self.arc_symbols.values())

    @property
    def total_messages(self) -> int:
        return sum(self.arc_messages.values())

    def arc_rows(self, g: NfcGraph) -> list[dict[str, object]]:
        rows = []
        by_name = sorted(self.arc_symbols, key=lambda arc: (g.names[arc[0]], g.names[arc[1]]))
        for u, v in by_name:
            rows.append(
                {
                    "src": g.names[u],
                    "dst": g.names[v],
                    "messages": self.arc_messages[(u, v)],
                    "symbols": self.arc_symbols[(u, v)],
                }
            )
        return rows


@dataclass(frozen=True)
class ScenarioResult:
    """Everything a run produced: meters, tables, and a headline stat."""

    scenario: Scenario
    graph: NfcGraph
    metrics: Metrics
    headline: Mapping[str, object]
    tables: Mapping[str, tuple[tuple[str, ...], list[dict[str, object]]]]

    def summary_line(self) -> str:
        parts = [f"application={self.scenario.application}"]
        parts.append(f"generations={self.scenario.effective_generations}")
        parts.append(f"total_symbols={self.metrics.total_symbols}")
        parts.append(f"total_messages={self.metrics.total_messages}")
        for key, value in self.headline.items():
            parts.append(f"{key}={value}")
        return " ".join(parts)


class GenerationBarrier:
    """Per-node input buffers keyed by (child, generation).

    A node may evaluate generation t only once every non-dropped child's
    generation-t batch is buffered (an alive child with nothing to relay
    still completes the generation with an empty batch); ``events``
    records delivery and evaluation order for auditing.
    """

    def __init__(self, audit: bool = False):
        self.buffers: dict[tuple[int, int], dict[int, list[object]]] = {}
        self.events: list[tuple] | None = [] if audit else None

    def deliver(self, child: int, node: int, generation: int, messages: list[object]) -> None:
        slot = self.buffers.setdefault((node, generation), {})
        slot.setdefault(child, []).extend(messages)
        if self.events is not None:
            self.events.append(("deliver", child, node, generation))

    def ready(self, node: int, generation: int, expected: set[int]) -> bool:
        slot = self.buffers.get((node, generation), {})
        return expected.issubset(slot.keys())

    def take(self, node: int, generation: int) -> dict[int, list[object]]:
        if self.events is not None:
            self.events.append(("evaluate", node, generation))
        return self.buffers.pop((node, generation), {})


def _draw_dropped(
    g: NfcGraph, failures: FailureModel, rng: np.random.Generator
) -> frozenset[int]:
    if failures.node_dropout_p == 0.0:
        return frozenset()
    candidates = [v for v in range(g.n_nodes) if g.roles[v] is not NodeRole.DESTINATION]
    hits = rng.random(len(candidates)) < failures.node_dropout_p
    return frozenset(v for v, hit in zip(candidates, hits) if hit)


# -- application runners ----------------------------------------------------

def _run_forwarding(s: Scenario, g: NfcGraph, metrics: Metrics, audit: bool):
    """Raw delivery: every packet is forwarded hop by hop to the root."""
    length = s.packet_length
    data_rng = substream(s.seed, 0)
    dropout_rng, _ = s.failures.streams()
    dest = g.destinations[0]
    barrier = GenerationBarrier(audit=audit)
    rows: list[dict[str, object]] = []
    delivered_total = 0
    for t in range(s.generations):
        dropped = _draw_dropped(g, s.failures, dropout_rng)
        metrics.dropped_nodes += len(dropped)
        for v in g.topo_order:
            if v in dropped:
                continue
            role = g.roles[v]
            if role is NodeRole.SOURCE:
                if s.field is not None:
                    packet = s.field.random_elements(data_rng, length)
                else:
                    packet = data_rng.normal(s.data.mean, s.data.std, size=length)
                outbox = [(v, packet)]
            elif role is NodeRole.ATOMIC:
                expected = {c for c in g.in_neighbors[v] if c not in dropped}
                assert barrier.ready(v, t, expected), "barrier violation"
                inbox = barrier.take(v, t)
                outbox = [m for msgs in inbox.values() for m in msgs]
            else:
                continue
            for w in g.out_neighbors[v]:
                barrier.deliver(v, w, t, outbox)
                if outbox:
                    metrics.record((v, w), length, messages=len(outbox))
        delivered = sum(len(m) for m in barrier.take(dest, t).values())
        delivered_total += delivered
        rows.append(
            {
                "generation": t,
                "value": delivered,
                "dropped_nodes": len(dropped),
                "lost_messages": 0,
            }
        )
    headline = {"delivered_packets": delivered_total}
    tables = {
        "trajectory": (TRAJECTORY_COLUMNS, rows),
        "arcs": (ARC_COLUMNS, metrics.arc_rows(g)),
    }
    return headline, tables, barrier.events


def _run_consensus(s: Scenario, g: NfcGraph, metrics: Metrics, audit: bool):
    """Average decomposition feeding the harmonic-step estimator."""
    network = install_functions(g, decompose_average(g))
    data_rng = substream(s.seed, 0)
    dropout_rng, _ = s.failures.streams()
    dest = g.destinations[0]
    state = ConsensusState(estimate=np.zeros(s.packet_length), generation=0)
    rows: list[dict[str, object]] = []
    events: list[tuple] | None = [] if audit else None
    for t in range(s.generations):
        dropped = _draw_dropped(g, s.failures, dropout_rng)
        metrics.dropped_nodes += len(dropped)
        values = data_rng.normal(s.data.mean, s.data.std, size=(g.n_sources, s.packet_length))
        inputs = {src: values[i] for i, src in enumerate(g.sources)}
        evaluation = network.evaluate(inputs, dropped=dropped)
        for (u, v), message in evaluation.messages.items():
            metrics.record((u, v), len(message))
            if events is not None:
                events.append(("deliver", u, v, t))
        if events is not None:
            events.append(("evaluate", dest, t))
        delivered = evaluation.destination_outputs.get(dest)
        if delivered is not None and not isinstance(delivered, list):
            state = consensus_step(state, np.asarray(delivered))
        rows.append(
            {
                "generation": t,
                "value": float(np.asarray(state.estimate).ravel()[0]),
                "dropped_nodes": len(dropped),
                "lost_messages": 0,
            }
        )
    headline = {"final_estimate": float(np.asarray(state.estimate).ravel()[0])}
    tables = {
        "trajectory": (TRAJECTORY_COLUMNS, rows),
        "arcs": (ARC_COLUMNS, metrics.arc_rows(g)),
    }
    return headline, tables, events


def _run_custom(s: Scenario, g: NfcGraph, metrics: Metrics, audit: bool):
    """Caller-supplied assignment evaluated generation by generation."""
    assert s.assignment is not None
    network = install_functions(g, s.assignment)
    data_rng = substream(s.seed, 0)
    dropout_rng, _ = s.failures.streams()
    dest = g.destinations[0]
    rows: list[dict[str, object]] = []
    events: list[tuple] | None = [] if audit else None
    last_output = None
    for t in range(s.generations):
        dropped = _draw_dropped(g, s.failures, dropout_rng)
        metrics.dropped_nodes += len(dropped)
        if s.field is not None:
            values = s.field.random_elements(data_rng, (g.n_sources, s.packet_length))
        else:
            values = data_rng.normal(
                s.data.mean, s.data.std, size=(g.n_sources, s.packet_length)
            )
        inputs = {src: values[i] for i, src in enumerate(g.sources)}
        evaluation = network.evaluate(inputs, dropped=dropped)
        for (u, v), message in evaluation.messages.items():
            metrics.record((u, v), len(message))
            if events is not None:
                events.append(("deliver", u, v, t))
        if events is not None:
            events.append(("evaluate", dest, t))
        delivered = evaluation.destination_outputs.get(dest)
        if isinstance(delivered, list):
            delivered = delivered[0] if delivered else None
        value = float("nan")
        if delivered is not None:
            last_output = np.asarray(delivered)
            value = float(last_output.ravel()[0])
        rows.append(
            {
                "generation": t,
                "value": value,
                "dropped_nodes": len(dropped),
                "lost_messages": 0,
            }
        )
    headline = {
        "final_value": float(last_output.ravel()[0]) if last_output is not None else float("nan")
    }
    tables = {
        "trajectory": (TRAJECTORY_COLUMNS, rows),
        "arcs": (ARC_COLUMNS, metrics.arc_rows(g)),
    }
    return headline, tables, events


def _run_rlnc(s: Scenario, g: NfcGraph, metrics: Metrics, audit: bool):
    """Coded recovery experiment; each trial is one data generation."""
    assert s.field is not None and s.n_prime is not None and s.trials is not None
    stats = run_recovery_experiment(
        g,
        s.field,
        n_prime=s.n_prime,
        trials=s.trials,
        seed=s.seed,
        payload_length=s.packet_length,
    )
    per_message = s.packet_length + stats.n_sources  # coding vector rides in band
    for arc in g.arcs:
        metrics.record(arc, per_message, messages=stats.messages_per_arc)
    headline = {"probability": stats.probability}
    tables = {
        "stats": (stats.CSV_COLUMNS, [stats.csv_row()]),
        "arcs": (ARC_COLUMNS, metrics.arc_rows(g)),
    }
    return headline, tables, None


def _run_neural(s: Scenario, g: NfcGraph, metrics: Metrics, audit: bool):
    """Distributed training; meters upward activities and downward
    gradient contributions (lost messages are transmitted, then lost)."""
    data_rng = substream(s.seed, 0)
    dataset = separable_dataset(
        g.n_sources, s.neural.samples, data_rng, margin=s.neural.margin
    )
    network = NeuralTreeNetwork(g, init_rng=substream(s.seed, 2))
    result = nn_train(
        network,
        dataset,
        epochs=s.neural.epochs,
        eta_schedule=s.eta.at,
        failures=s.failures,
    )
    for arc, count in result.arc_messages.items():
        metrics.record(arc, NEURAL_MESSAGE_SYMBOLS, messages=count)
    metrics.stale_skips += result.stale_skips
    metrics.lost_messages += sum(result.lost_per_step)
    rows = result.csv_rows()
    final_loss = float(np.mean(result.losses[-len(dataset):]))
    headline = {"final_loss": final_loss}
    tables = {
        "trajectory": (TRAJECTORY_COLUMNS, rows),
        "arcs": (ARC_COLUMNS, metrics.arc_rows(g)),
    }
    return headline, tables, None


_RUNNERS: dict[str, Callable] = {
    "forwarding": _run_forwarding,
    "consensus": _run_consensus,
    "rlnc": _run_rlnc,
    "neural": _run_neural,
    "custom": _run_custom,
}


def run_scenario(s: Scenario, audit: bool = False) -> ScenarioResult:
    """Execute a validated scenario deterministically.

    ``audit=True`` additionally records barrier events (delivery and
    evaluation order) where the application routes messages generation
    by generation; the audit never changes results.
    """
    s.validate()
    g = build_graph(s.topology)
    metrics = Metrics()
    started = time.perf_counter()
    headline, tables, events = _RUNNERS[s.application](s, g, metrics, audit)
    metrics.wall_clock = time.perf_counter() - started
    result = ScenarioResult(
        scenario=s, graph=g, metrics=metrics, headline=headline, tables=tables
    )
    if audit and events is not None:
        object.__setattr__(result, "_audit_events", events)
    return result


def audit_events(result: ScenarioResult) -> list[tuple] | None:
    return getattr(result, "_audit_events", None)


# -- cost comparison ---------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    """Forwarding-vs-NFC symbol accounting on a shared graph."""

    ratio: float  # forwarding_total / nfc_total
    nfc_total: int
    forwarding_total: int
    arc_rows: list[dict[str, object]]

    ARC_COLUMNS = ("src", "dst", "nfc_symbols", "forwarding_symbols")


def compare_costs(nfc: ScenarioResult, forwarding: ScenarioResult) -> CostReport:
    """Ratio of forwarded to in-network symbols for the same workload."""
    if forwarding.scenario.application != "forwarding":
        raise MismatchedScenarios("baseline scenario must run the forwarding application")
    if nfc.scenario.topology != forwarding.scenario.topology:
        raise MismatchedScenarios("scenarios run on different graphs")
    if nfc.scenario.packet_length != forwarding.scenario.packet_length:
        raise MismatchedScenarios("scenarios use different packet lengths")
    if nfc.scenario.effective_generations != forwarding.scenario.effective_generations:
        raise MismatchedScenarios("scenarios cover different generation counts")
    nfc_total = nfc.metrics.total_symbols
    fwd_total = forwarding.metrics.total_symbols
    rows = []
    arcs = sorted(set(nfc.metrics.arc_symbols) | set(forwarding.metrics.arc_symbols))
    for arc in arcs:
        rows.append(
            {
                "src": nfc.graph.names[arc[0]],
                "dst": nfc.graph.names[arc[1]],
                "nfc_symbols": nfc.metrics.arc_symbols.get(arc, 0),
                "forwarding_symbols": forwarding.metrics.arc_symbols.get(arc, 0),
            }
        )
    ratio = fwd_total / nfc_total if nfc_total else float("inf")
    return CostReport(
        ratio=ratio, nfc_total=nfc_total, forwarding_total=fwd_total, arc_rows=rows
    )
