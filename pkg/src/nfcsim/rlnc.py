"""Random linear network coding over a rooted tree.

Sources emit their packet with a unit coding vector; every relay draws
fresh local coefficients uniformly over the field (zero included) and
forwards the combined payload together with updated global coefficients;
the destination decodes by Gaussian elimination once it has collected
enough pairs. Repeating the upward pass with fresh randomness yields the
extra equations needed for recovery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nfcsim.errors import InconsistentDimensions, NotATree, RankDeficient
from nfcsim.field import FieldSpec, gaussian_solve
from nfcsim.graph import NfcGraph, NodeRole


@dataclass(frozen=True)
class CodedPacket:
    """Payload in F^L plus its global coding vector in F^N."""

    payload: np.ndarray
    coding_vector: np.ndarray


def source_encode(
    source_index: int, payload: np.ndarray, n_sources: int, field: FieldSpec
) -> CodedPacket:
    """Leaf rule: unit coding vector at the source's own index."""
    payload = field.validate_array(payload)
    vector = np.zeros(n_sources, dtype=field.dtype)
    vector[source_index] = 1
    return CodedPacket(payload=payload, coding_vector=vector)


def atomic_recode(
    children: list[CodedPacket], rng: np.random.Generator, field: FieldSpec
) -> CodedPacket:
    """Combine child packets under fresh uniform local coefficients.

    The local coefficients are drawn independently of the payloads; the
    global coding vector is updated with the same coefficients, keeping
    the payload the matching combination of the original source packets.
    """
    if not children:
        raise InconsistentDimensions("recode needs at least one child packet")
    lengths = {len(p.payload) for p in children}
    widths = {len(p.coding_vector) for p in children}
    if len(lengths) != 1 or len(widths) != 1:
        raise InconsistentDimensions(
            f"child packets disagree on dimensions: L={sorted(lengths)}, N={sorted(widths)}"
        )
    local = field.random_elements(rng, len(children))
    payloads = np.stack([p.payload for p in children])
    vectors = np.stack([p.coding_vector for p in children])
    return CodedPacket(
        payload=field.combine(local, payloads),
        coding_vector=field.combine(local, vectors),
    )


class DecoderState:
    """Collected (payload, coding vector) pairs with an online rank.

    The coding vectors are kept in reduced row-echelon form, so rank is
    non-decreasing as pairs arrive and never exceeds min(pairs, N).
    """

    def __init__(self, field: FieldSpec, n_sources: int):
        self.field = field
        self.n_sources = n_sources
        self.collected: list[CodedPacket] = []
        self._matrix = np.zeros((n_sources, n_sources), dtype=field.dtype)
        self._pivot_cols = np.zeros(n_sources, dtype=np.int64)
        self._rank = 0

    def reset(self) -> None:
        self.collected.clear()
        self._matrix[:] = 0
        self._rank = 0

    @property
    def rank(self) -> int:
        return self._rank

    def add(self, packet: CodedPacket) -> int:
        """Collect one pair; returns the updated rank."""
        if len(packet.coding_vector) != self.n_sources:
            raise InconsistentDimensions(
                f"coding vector length {len(packet.coding_vector)} != N={self.n_sources}"
            )
        self.collected.append(packet)
        return self.add_vector(packet.coding_vector)

    def add_vector(self, vector: np.ndarray) -> int:
        """Rank bookkeeping only, for callers that keep payloads elsewhere."""
        field = self.field
        k = self._rank
        if k == self.n_sources:
            return k
        row = vector.copy()
        if k:
            factors = row[self._pivot_cols[:k]]
            row = field.add_arrays(row, field.combine(factors, self._matrix[:k]))
        nonzero = np.nonzero(row)[0]
        if nonzero.size == 0:
            return k
        col = int(nonzero[0])
        inv = field.inv(int(row[col]))
        if inv != 1:
            row = field.scale(inv, row)
        if k:  # keep existing rows reduced against the new pivot
            above = self._matrix[:k, col].copy()
            hit = above != 0
            if hit.any():
                self._matrix[:k][hit] = field.add_arrays(
                    self._matrix[:k][hit], field.mul_arrays(above[hit, None], row)
                )
        self._matrix[k] = row
        self._pivot_cols[k] = col
        self._rank = k + 1
        return self._rank


@dataclass(frozen=True)
class DecodeOutcome:
    """Either all N source packets exactly, or Insufficient(rank)."""

    success: bool
    rank: int
    packets: np.ndarray | None  # (N, L) on success

    @classmethod
    def insufficient(cls, rank: int) -> "DecodeOutcome":
        return cls(success=False, rank=rank, packets=None)


def destination_decode(state: DecoderState) -> DecodeOutcome:
    """Solve the collected linear system; exact recovery or Insufficient."""
    if not state.collected:
        return DecodeOutcome.insufficient(0)
    a = np.stack([p.coding_vector for p in state.collected])
    b = np.stack([p.payload for p in state.collected])
    try:
        result = gaussian_solve(state.field, a, b)
    except RankDeficient as exc:
        return DecodeOutcome.insufficient(exc.rank)
    return DecodeOutcome(success=True, rank=result.rank, packets=result.solution)


class RlncNetwork:
    """Compiled upward-pass plan for one tree: node order and child lists."""

    def __init__(self, graph: NfcGraph, field: FieldSpec, payload_length: int = 1):
        if graph.mode != "tree":
            raise NotATree("coded recovery runs on tree-mode graphs")
        if len(graph.destinations) != 1:
            raise NotATree("coded recovery requires a single destination")
        self.graph = graph
        self.field = field
        self.payload_length = payload_length
        self.source_ids = list(graph.sources)
        self.destination = graph.destinations[0]
        self.atomic_order = [
            v for v in graph.topo_order if graph.roles[v] is NodeRole.ATOMIC
        ]
        self.child_index = {
            a: np.array(graph.in_neighbors[a], dtype=np.int64) for a in self.atomic_order
        }
        self.dest_children = list(graph.in_neighbors[self.destination])
        # Flat layout of one pass's local coefficient draws, node by node.
        self.coeff_slices: list[tuple[int, np.ndarray, int, int]] = []
        offset = 0
        for a in self.atomic_order:
            kids = self.child_index[a]
            self.coeff_slices.append((a, kids, offset, offset + len(kids)))
            offset += len(kids)
        self.coeffs_per_pass = offset

    @property
    def n_sources(self) -> int:
        return len(self.source_ids)

    def random_source_payloads(self, rng: np.random.Generator) -> np.ndarray:
        return self.field.random_elements(rng, (self.n_sources, self.payload_length))

    def fresh_state(self, payloads: np.ndarray) -> np.ndarray:
        """Per-node message buffer, payload and coding vector fused.

        Row v holds node v's message: columns [0, L) are the payload,
        columns [L, L+N) the global coding vector. Source rows are
        filled; atomic rows are produced by passes.
        """
        n = self.n_sources
        state = np.zeros(
            (self.graph.n_nodes, self.payload_length + n), dtype=self.field.dtype
        )
        for i, s in enumerate(self.source_ids):
            state[s, : self.payload_length] = payloads[i]
            state[s, self.payload_length + i] = 1
        return state

    def run_pass(
        self,
        state: np.ndarray,
        rng: np.random.Generator | None = None,
        coeffs: np.ndarray | None = None,
    ) -> None:
        """Recode every atomic node in topological order, in place.

        Local coefficients come either from ``rng`` (one draw per node)
        or from a pre-drawn flat ``coeffs`` block of length
        ``coeffs_per_pass``. Combining the fused row updates payload and
        coding vector with the same coefficients, which is exactly the
        global-coefficient propagation rule.
        """
        field = self.field
        combine = field.combine
        for a, kids, lo, hi in self.coeff_slices:
            if coeffs is None:
                assert rng is not None
                local = field.random_elements(rng, hi - lo)
            else:
                local = coeffs[lo:hi]
            state[a] = combine(local, state[kids])

    def packet_at(self, state: np.ndarray, node: int) -> CodedPacket:
        return CodedPacket(
            payload=state[node, : self.payload_length].copy(),
            coding_vector=state[node, self.payload_length :].copy(),
        )

    def pass_once(
        self, payloads: np.ndarray, rng: np.random.Generator
    ) -> dict[int, CodedPacket]:
        """One upward pass; returns every node's emitted packet.

        ``payloads`` is the (N, L) matrix of source packets, reused
        across sequential passes while the local coefficients are
        redrawn each pass.
        """
        state = self.fresh_state(payloads)
        self.run_pass(state, rng)
        nodes = self.source_ids + self.atomic_order
        return {v: self.packet_at(state, v) for v in nodes}

    def destination_pairs(self, packets: dict[int, CodedPacket]) -> list[CodedPacket]:
        return [packets[c] for c in self.dest_children]


@dataclass(frozen=True)
class SuccessStats:
    """Recovery experiment summary; one CSV row per experiment."""

    field_order: int
    n_sources: int
    n_prime: int
    trials: int
    successes: int
    probability: float
    seed: int
    success_by_pass: tuple[int, ...]  # successes had the run stopped after pass k+1
    messages_per_arc: int  # upward messages each arc carried over the experiment

    CSV_COLUMNS = (
        "field_order",
        "N",
        "N_prime",
        "trials",
        "successes",
        "probability",
        "seed",
    )

    def csv_row(self) -> dict[str, object]:
        return {
            "field_order": self.field_order,
            "N": self.n_sources,
            "N_prime": self.n_prime,
            "trials": self.trials,
            "successes": self.successes,
            "probability": self.probability,
            "seed": self.seed,
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent, reproducible substream for one trial."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def run_recovery_experiment(
    graph: NfcGraph,
    field: FieldSpec,
    n_prime: int,
    trials: int,
    seed: int,
    payload_length: int = 1,
) -> SuccessStats:
    """Empirical probability that rank reaches N within n_prime passes.

    Each trial draws fresh source packets, then repeats the upward pass
    n_prime times with fresh local coefficients, feeding the
    destination's incoming pairs into the decoder state. All n_prime
    passes run regardless of when full rank is reached (the protocol has
    no feedback), and per-trial substreams make results reproducible and
    nested in n_prime for a fixed seed.
    """
    net = RlncNetwork(graph, field, payload_length)
    n = net.n_sources
    successes = 0
    success_by_pass = [0] * n_prime
    dest_children = net.dest_children
    state = net.fresh_state(np.zeros((n, payload_length), dtype=field.dtype))
    source_rows = np.array(net.source_ids, dtype=np.int64)
    decoder = DecoderState(field=field, n_sources=n)
    n_payload_draws = n * payload_length
    per_pass = net.coeffs_per_pass
    draws_per_trial = n_payload_draws + n_prime * per_pass
    for trial in range(trials):
        rng = trial_rng(seed, trial)
        # One block per trial: source payloads first, then the local
        # coefficients pass by pass (keeps runs nested in n_prime).
        block = field.random_elements(rng, draws_per_trial)
        state[source_rows, :payload_length] = block[:n_payload_draws].reshape(
            n, payload_length
        )
        decoder.reset()
        first_full_rank: int | None = None
        offset = n_payload_draws
        for k in range(n_prime):
            net.run_pass(state, coeffs=block[offset : offset + per_pass])
            offset += per_pass
            for c in dest_children:
                decoder.add_vector(state[c, payload_length:])
            if first_full_rank is None and decoder.rank == n:
                first_full_rank = k
        if first_full_rank is not None:
            successes += 1
            for later in range(first_full_rank, n_prime):
                success_by_pass[later] += 1
    return SuccessStats(
        field_order=field.order,
        n_sources=n,
        n_prime=n_prime,
        trials=trials,
        successes=successes,
        probability=successes / trials if trials else 0.0,
        seed=seed,
        messages_per_arc=trials * n_prime,
        success_by_pass=tuple(success_by_pass),
    )
