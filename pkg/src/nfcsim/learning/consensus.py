"""Consensus averaging: stochastic-gradient estimation of a global mean.

Each generation the network delivers the sample mean of the source
values through the sum/count decomposition, and the destination applies
the harmonic-step update

    w(t+1) = t/(t+1) * w(t) + 1/(t+1) * mean_t,

which makes w(t) the exact running average of the delivered means,
independent of the initial estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from nfcsim.afc import ConfiguredNetwork, decompose_average, install_functions
from nfcsim.graph import NfcGraph


@dataclass(frozen=True)
class ConsensusState:
    """Current estimate and generation counter."""

    estimate: float | np.ndarray
    generation: int = 0


def consensus_step(state: ConsensusState, sample_mean: float | np.ndarray) -> ConsensusState:
    """One harmonic-step update with the network-delivered mean.

    Written in the gradient-step form w - (w - mean)/(t+1), which equals
    t/(t+1)*w + mean/(t+1) algebraically but keeps constant means an
    exact fixed point in floating point. The first step returns the mean
    itself: the initializer carries zero weight.
    """
    t = state.generation
    if t == 0:
        new = np.asarray(sample_mean, dtype=np.float64).copy()
        if new.ndim == 0:
            new = float(new)
    else:
        new = state.estimate + (sample_mean - state.estimate) / (t + 1)
    return ConsensusState(estimate=new, generation=t + 1)


@dataclass(frozen=True)
class ConsensusTrajectory:
    """Per-generation estimates and the means that produced them."""

    states: tuple[ConsensusState, ...]  # states[t] is the estimate after t generations
    means: tuple[float, ...]

    @property
    def final(self) -> ConsensusState:
        return self.states[-1]

    def csv_rows(self) -> list[dict[str, object]]:
        return [
            {"generation": t, "value": float(np.asarray(s.estimate).ravel()[0])}
            for t, s in enumerate(self.states[1:], start=1)
        ]


def _mean_network(g: NfcGraph) -> ConfiguredNetwork:
    return install_functions(g, decompose_average(g))


def consensus_run(
    g: NfcGraph,
    samples: Iterable[np.ndarray],
    generations: int,
    initial_estimate: float | np.ndarray = 0.0,
) -> ConsensusTrajectory:
    """Drive the averaging network for a number of generations.

    ``samples`` yields one (N,) or (N, L) array per generation, ordered
    like ``g.sources``. The recorded trajectory starts at the initial
    estimate and has one state per generation.
    """
    network = _mean_network(g)
    source_ids = g.sources
    state = ConsensusState(estimate=initial_estimate, generation=0)
    states = [state]
    means: list[float] = []
    sample_iter: Iterator[np.ndarray] = iter(samples)
    dest = g.destinations[0]
    for _ in range(generations):
        values = np.asarray(next(sample_iter), dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        inputs: Mapping[int, np.ndarray] = {
            s: values[i] for i, s in enumerate(source_ids)
        }
        evaluation = network.evaluate(inputs)
        mean = np.asarray(evaluation.destination_outputs[dest])
        if mean.size == 1:
            mean = float(mean.ravel()[0])
        state = consensus_step(state, mean)
        states.append(state)
        means.append(float(np.asarray(mean).ravel()[0]))
    return ConsensusTrajectory(states=tuple(states), means=tuple(means))
