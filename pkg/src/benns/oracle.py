"""Online-evaluator interface and a synthetic reference network that measures latency.

The reference network stands in for an emulator: latency is flat while CPU and
bandwidth demand stay below their knees and rises sharply past them. Memory
demand has no effect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .demand import DemandArrays, DemandModel, Traffic
from .errors import InvalidArgumentError
from .netmodel import Embedding
from .predictors import UsageModel


@dataclass(frozen=True)
class OracleConfig:
    base_proc_ms: float = 10.0
    cpu_knee: float = 1.0
    bw_knee: float = 175.0
    cpu_gain: float = 100.0  # ms per unit of CPU demand past the knee
    bw_gain: float = 1.0  # ms per unit of bandwidth demand past the knee
    sharpness: float = 0.05
    noise_std_ms: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.cpu_knee <= 0 or self.bw_knee <= 0 or self.sharpness <= 0:
            raise InvalidArgumentError("knees and sharpness must be positive")
        if self.noise_std_ms < 0:
            raise InvalidArgumentError("noise std must be non-negative")


def softplus_sharp(x, sharpness: float = 0.05):
    x = np.asarray(x, dtype=float)
    return sharpness * np.logaddexp(0.0, x / sharpness)


def oracle_latency(alpha, beta, delta_ms, config: OracleConfig = OracleConfig(), rng: np.random.Generator | None = None):
    """Measured latency in ms for demand maxima ``alpha``/``beta`` and delay ``delta_ms``.

    Noise is added only when ``rng`` is given and ``noise_std_ms > 0``.
    """
    alpha, beta, delta_ms = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (alpha, beta, delta_ms)))
    if (alpha < 0).any() or (beta < 0).any() or (delta_ms < 0).any():
        raise InvalidArgumentError("demands and delay must be non-negative")
    latency = (
        delta_ms
        + config.base_proc_ms
        + config.cpu_gain * softplus_sharp(alpha - config.cpu_knee, config.sharpness)
        + config.bw_gain * softplus_sharp(beta - config.bw_knee, config.sharpness)
    )
    if rng is not None and config.noise_std_ms > 0:
        latency = latency + rng.normal(0.0, config.noise_std_ms, size=latency.shape)
    return latency if latency.ndim else float(latency)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Per-(deployed SFC, slot) latencies. ``latency_ms`` has shape (n_deployed, T)."""

    sfc_ids: tuple[int, ...]
    latency_ms: np.ndarray
    demands: DemandArrays | None = None

    @property
    def empty(self) -> bool:
        return self.latency_ms.size == 0

    @property
    def average_ms(self) -> float:
        return float(self.latency_ms.mean()) if not self.empty else float("nan")


class OnlineEvaluator(Protocol):
    def measure(self, embedding: Embedding, traffic: Traffic, key: Sequence[int] = ()) -> Measurement: ...


class SimulatedNetwork:
    """Reference network. ``usage`` is the resource model actually consumed by VNFs.

    Noise draws come from a stream keyed by ``(config.seed, *key)`` so concurrent
    callers with distinct keys stay reproducible.
    """

    def __init__(self, usage: UsageModel, config: OracleConfig = OracleConfig()):
        self.usage = usage
        self.config = config
        self._models: dict = {}
        self.n_measurements = 0

    def demand_model(self, embedding: Embedding, traffic: Traffic) -> DemandModel:
        key = (id(embedding.topology), id(traffic), embedding.gateway, tuple(e.request for e in embedding.sfcs))
        model = self._models.get(key)
        if model is None:
            if len(self._models) > 32:
                self._models.clear()
            model = DemandModel(embedding.topology, [e.graph for e in embedding.sfcs], self.usage, traffic, embedding.gateway)
            # keep referents alive so ids stay unique while cached
            self._models[key] = model
            model._pinned = (embedding.topology, traffic)
        return model

    def measure(self, embedding: Embedding, traffic: Traffic, key: Sequence[int] = ()) -> Measurement:
        arrays = self.demand_model(embedding, traffic).evaluate_embedding(embedding)
        self.n_measurements += 1
        return self.measure_arrays(arrays, [e.request.id for e in embedding.sfcs], key)

    def measure_arrays(self, arrays: DemandArrays, sfc_ids: Sequence[int], key: Sequence[int] = ()) -> Measurement:
        dep = np.flatnonzero(arrays.deployed)
        rng = np.random.default_rng([self.config.seed, *[int(k) for k in key]])
        alpha = arrays.per_slot(arrays.alpha[dep])
        beta = arrays.per_slot(arrays.beta[dep])
        delta = np.broadcast_to(arrays.delta[dep][:, None], alpha.shape)
        latency = oracle_latency(alpha, beta, delta, self.config, rng) if dep.size else np.zeros((0, arrays.n_slots))
        return Measurement(tuple(sfc_ids[s] for s in dep), np.asarray(latency), arrays)


def simulate_measure(
    embedding: Embedding,
    predictors: UsageModel,
    traffic: Traffic,
    config: OracleConfig = OracleConfig(),
    key: Sequence[int] = (),
) -> Measurement:
    return SimulatedNetwork(predictors, config).measure(embedding, traffic, key)
