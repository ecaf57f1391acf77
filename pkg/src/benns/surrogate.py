"""Latency surrogate: training-data generation, preprocessing, the approximator,
and embedding-level fitness approximation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .demand import DemandArrays, DemandModel, Traffic
from .errors import EmptyDatasetError, InvalidArgumentError
from .evolution import AR_ZERO_LATENCY_MS, random_genome
from .netmodel import Embedding, SfcRequest, Topology, build_fat_tree, decode_embedding, genome_shape, make_sfcrs
from .oracle import Measurement, OnlineEvaluator
from .predictors import UsageModel
from .traffic import TrafficSeries, linear_ramp

REGIME_THRESHOLD_MS = 150.0
APPROXIMATOR_LAYERS = (2, 16, 16, 1)

DATA_GEN_MEMORY_MB = 5 * 1024.0
DATA_GEN_DELAY_MS = 1.0
DATA_GEN_EMBEDDINGS = 20
DATA_GEN_COPIES = 8


@dataclass(frozen=True)
class DataGenExperiment:
    id: int
    cpus_per_host: float
    bandwidth_mbps: float
    ramp: tuple[float, float, int]  # start rps, end rps, duration s

    def traffic(self) -> TrafficSeries:
        return linear_ramp(*self.ramp)

    def topology(self, k: int = 4) -> Topology:
        return build_fat_tree(k, self.cpus_per_host, DATA_GEN_MEMORY_MB, self.bandwidth_mbps, DATA_GEN_DELAY_MS)


_LONG = (1.0, 50.0, 300)
DATA_GEN_EXPERIMENTS: tuple[DataGenExperiment, ...] = (
    DataGenExperiment(1, 1.0, 5.0, _LONG),
    DataGenExperiment(2, 0.5, 20.0, _LONG),
    DataGenExperiment(3, 0.5, 5.0, _LONG),
    DataGenExperiment(4, 1.0, 20.0, _LONG),
    DataGenExperiment(5, 4.0, 100.0, (1.0, 25.0, 60)),
    DataGenExperiment(6, 0.2, 50.0, (20.0, 25.0, 30)),
    DataGenExperiment(7, 0.2, 5.0, (20.0, 25.0, 30)),
    DataGenExperiment(8, 1.0, 50.0, (20.0, 25.0, 30)),
    DataGenExperiment(9, 0.5, 5.0, (20.0, 25.0, 30)),
    DataGenExperiment(10, 0.2, 20.0, (20.0, 25.0, 30)),
    DataGenExperiment(11, 1.0, 20.0, (20.0, 25.0, 30)),
)


@dataclass(eq=False)
class RawRows:
    """One row per (experiment, embedding, deployed SFC, slot)."""

    exp: np.ndarray
    embedding: np.ndarray
    sfc: np.ndarray
    slot: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    latency: np.ndarray
    n_evaluations: int = 0

    def __len__(self) -> int:
        return self.exp.size

    @classmethod
    def concat(cls, parts: Sequence["RawRows"]) -> "RawRows":
        names = ("exp", "embedding", "sfc", "slot", "alpha", "beta", "delta", "latency")
        return cls(
            *(np.concatenate([getattr(p, n) for p in parts]) for n in names),
            n_evaluations=sum(p.n_evaluations for p in parts),
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["exp", "embedding", "sfc", "slot", "alpha", "beta", "delta_ms", "latency_ms"])
            for row in zip(self.exp, self.embedding, self.sfc, self.slot, self.alpha, self.beta, self.delta, self.latency):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), int(row[3])] + [repr(float(v)) for v in row[4:]])


def rows_from_measurement(exp_id: int, emb_id: int, features: DemandArrays, meas: Measurement, sfc_ids: Sequence[int]) -> RawRows:
    dep = np.flatnonzero(features.deployed)
    if [sfc_ids[s] for s in dep] != list(meas.sfc_ids):
        raise InvalidArgumentError("measurement SFCs do not match the embedding")
    T = features.n_slots
    n = dep.size * T
    return RawRows(
        exp=np.full(n, exp_id),
        embedding=np.full(n, emb_id),
        sfc=np.repeat(np.asarray(sfc_ids)[dep], T),
        slot=np.tile(np.arange(T), dep.size),
        alpha=features.per_slot(features.alpha[dep]).ravel(),
        beta=features.per_slot(features.beta[dep]).ravel(),
        delta=np.repeat(features.delta[dep], T),
        latency=meas.latency_ms.ravel(),
        n_evaluations=1,
    )


def generate_training_data(
    experiments: Sequence[DataGenExperiment],
    sfcrs: Sequence[SfcRequest],
    predictors: UsageModel,
    evaluator: OnlineEvaluator,
    seed: int = 0,
    n_embeddings: int = DATA_GEN_EMBEDDINGS,
    p_deploy: float = 0.9,
    gateway: int = 0,
) -> RawRows:
    """Measure ``n_embeddings`` random embeddings per experiment.

    Demand features come from ``predictors``; latency comes from ``evaluator``.
    """
    parts = []
    sfc_ids = [s.id for s in sfcrs]
    for exp in experiments:
        topology = exp.topology()
        traffic = exp.traffic()
        features = DemandModel(topology, sfcrs, predictors, traffic, gateway)
        rng = np.random.default_rng([seed, exp.id])
        shape = genome_shape(sfcrs, topology)
        for m in range(n_embeddings):
            genome = random_genome(shape, p_deploy, rng)
            embedding = decode_embedding(genome, sfcrs, topology, gateway, features.graphs)
            meas = evaluator.measure(embedding, traffic, key=(exp.id, m))
            parts.append(rows_from_measurement(exp.id, m, features.evaluate_embedding(embedding), meas, sfc_ids))
    return RawRows.concat(parts)


def data_gen_sfcrs() -> list[SfcRequest]:
    return make_sfcrs(4 * DATA_GEN_COPIES)


TRAIN, VAL, TEST = 0, 1, 2
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
DATASET_CSV_HEADER = ["exp", "embedding", "sfc", "bin", "alpha", "beta", "target_ms", "delta_ms", "split"]


@dataclass(eq=False)
class LatencyDataset:
    exp: np.ndarray
    embedding: np.ndarray
    sfc: np.ndarray
    bin: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    target: np.ndarray  # latency minus propagation delay
    delta: np.ndarray
    split: np.ndarray
    n_outliers: int = 0

    def __len__(self) -> int:
        return self.exp.size

    def mask(self, split: int) -> np.ndarray:
        return self.split == split

    def inputs(self, split: int | None = None) -> np.ndarray:
        m = slice(None) if split is None else self.mask(split)
        return np.column_stack([self.alpha[m], self.beta[m]])

    def targets(self, split: int | None = None) -> np.ndarray:
        m = slice(None) if split is None else self.mask(split)
        return self.target[m].reshape(-1, 1)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DATASET_CSV_HEADER)
            for i in range(len(self)):
                w.writerow([
                    int(self.exp[i]), int(self.embedding[i]), int(self.sfc[i]), int(self.bin[i]),
                    repr(float(self.alpha[i])), repr(float(self.beta[i])),
                    repr(float(self.target[i])), repr(float(self.delta[i])), int(self.split[i]),
                ])

    @classmethod
    def read_csv(cls, path: str | Path) -> "LatencyDataset":
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        if header != DATASET_CSV_HEADER:
            raise InvalidArgumentError(f"{path}: unexpected dataset header {header}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        ints = lambda c: data[:, c].astype(np.int64)  # noqa: E731
        return cls(ints(0), ints(1), ints(2), ints(3), data[:, 4], data[:, 5], data[:, 6], data[:, 7], ints(8))


def iqr_fence(values: np.ndarray, factor: float = 1.5) -> tuple[float, float]:
    q1, q3 = np.percentile(values, [25, 75])
    iqr = q3 - q1
    return q1 - factor * iqr, q3 + factor * iqr


def stratified_split(groups: np.ndarray, seed: int, fractions=SPLIT_FRACTIONS) -> np.ndarray:
    """Seeded split with exact global proportions, interleaved within each group.

    Rows of each group are shuffled and given evenly spaced ranks in (0, 1);
    sorting all rows by rank and cutting at the global fractions spreads every
    group across all three splits.
    """
    n = groups.size
    rng = np.random.default_rng(seed)
    rank = np.empty(n)
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        rank[rng.permutation(idx)] = (np.arange(idx.size) + 0.5) / idx.size
    order = np.lexsort((np.arange(n), rank))
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    split = np.full(n, TEST, dtype=np.int64)
    split[order[:n_train]] = TRAIN
    split[order[n_train:n_train + n_val]] = VAL
    return split


def preprocess(raw: RawRows, bin_width: int = 20, iqr_factor: float = 1.5, seed: int = 0) -> LatencyDataset:
    """Delay subtraction, IQR outlier removal, time binning with medians, split.

    Bins cover slots ``[b*bin_width, (b+1)*bin_width)`` of one
    (experiment, embedding, SFC) series; a trailing partial bin is kept.
    """
    if len(raw) == 0:
        raise EmptyDatasetError("no raw rows")
    target = raw.latency - raw.delta
    lo, hi = iqr_fence(target, iqr_factor)
    keep = (target >= lo) & (target <= hi)
    if not keep.any():
        raise EmptyDatasetError("every row was an outlier")

    exp, emb, sfc = raw.exp[keep], raw.embedding[keep], raw.sfc[keep]
    b = raw.slot[keep] // bin_width
    cols = [raw.alpha[keep], raw.beta[keep], target[keep], raw.delta[keep]]

    order = np.lexsort((raw.slot[keep], b, sfc, emb, exp))
    keys = np.column_stack([exp, emb, sfc, b])[order]
    starts = np.flatnonzero(np.r_[True, (keys[1:] != keys[:-1]).any(axis=1)])
    ends = np.r_[starts[1:], keys.shape[0]]
    sorted_cols = [c[order] for c in cols]
    medians = np.array([[np.median(c[s:e]) for c in sorted_cols] for s, e in zip(starts, ends)])
    k = keys[starts]
    split = stratified_split(k[:, 0], seed)
    return LatencyDataset(
        k[:, 0], k[:, 1], k[:, 2], k[:, 3],
        medians[:, 0], medians[:, 1], medians[:, 2], medians[:, 3], split,
        n_outliers=int((~keep).sum()),
    )


@dataclass(eq=False)
class Approximator:
    """[2, 16, 16, 1] sigmoid network mapping (alpha, beta) to latency minus delay."""

    model: nn.MlpModel

    def __post_init__(self):
        m = self.model
        if m.layer_sizes != APPROXIMATOR_LAYERS or m.hidden_activation != nn.SIGMOID:
            raise InvalidArgumentError("approximator must be a [2,16,16,1] sigmoid network")
        if m.x_norm is None or m.y_norm is None:
            raise InvalidArgumentError("approximator is untrained (no normalization statistics)")

    def predict_target(self, alpha, beta) -> np.ndarray:
        a = np.asarray(alpha, dtype=float)
        x = np.column_stack([a.ravel(), np.asarray(beta, dtype=float).ravel()])
        return self.model.predict(x).reshape(a.shape)

    def save(self, path: str | Path) -> None:
        nn.save_model(self.model, path)

    @classmethod
    def load(cls, path: str | Path) -> "Approximator":
        return cls(nn.load_model(path))


def approximate_latency(approximator: Approximator, alpha, beta, delta_ms):
    out = approximator.predict_target(alpha, beta) + np.asarray(delta_ms, dtype=float)
    return out if np.ndim(out) else float(out)


@dataclass
class MaeReport:
    overall: float
    low: float  # measured latency < 150 ms
    high: float
    n_low: int
    n_high: int
    low_target_range: float
    history: nn.TrainHistory = field(default_factory=nn.TrainHistory, repr=False)

    def as_dict(self) -> dict:
        return {
            "mae_overall_ms": self.overall,
            "mae_below_150ms": self.low,
            "mae_at_or_above_150ms": self.high,
            "n_below_150ms": self.n_low,
            "n_at_or_above_150ms": self.n_high,
            "target_range_below_150ms": self.low_target_range,
        }


def train_approximator(
    dataset: LatencyDataset, seed: int = 0, config: nn.TrainConfig | None = None
) -> tuple[Approximator, MaeReport]:
    for split in (TRAIN, VAL, TEST):
        if not dataset.mask(split).any():
            raise EmptyDatasetError(f"split {split} is empty")
    config = config or nn.TrainConfig(seed=seed)
    x_tr, y_tr = dataset.inputs(TRAIN), dataset.targets(TRAIN)
    model = nn.init_mlp(APPROXIMATOR_LAYERS, nn.SIGMOID, nn.GLOROT_NORMAL, seed)
    model.x_norm = nn.fit_normalizer(x_tr)
    model.y_norm = nn.fit_normalizer(y_tr)
    model, history = nn.train(
        model,
        model.x_norm.apply(x_tr),
        model.y_norm.apply(y_tr),
        model.x_norm.apply(dataset.inputs(VAL)),
        model.y_norm.apply(dataset.targets(VAL)),
        config,
    )
    approx = Approximator(model)
    report = evaluate_approximator(approx, dataset, TEST)
    report.history = history
    return approx, report


def evaluate_approximator(approx: Approximator, dataset: LatencyDataset, split: int = TEST) -> MaeReport:
    m = dataset.mask(split)
    pred = approx.predict_target(dataset.alpha[m], dataset.beta[m])
    err = np.abs(pred - dataset.target[m])
    low = (dataset.target[m] + dataset.delta[m]) < REGIME_THRESHOLD_MS
    mean = lambda e: float(e.mean()) if e.size else float("nan")  # noqa: E731
    tl = dataset.target[m][low]
    return MaeReport(
        overall=mean(err),
        low=mean(err[low]),
        high=mean(err[~low]),
        n_low=int(low.sum()),
        n_high=int((~low).sum()),
        low_target_range=float(tl.max() - tl.min()) if tl.size else float("nan"),
    )


class Surrogate:
    """Approximated (acceptance ratio, average latency) for genomes of one problem."""

    def __init__(self, approximator: Approximator, demand_model: DemandModel):
        self.approximator = approximator
        self.demand = demand_model
        self.n_evaluations = 0

    def _latency_terms(self, arrays: DemandArrays) -> np.ndarray:
        dep = arrays.deployed
        return self.approximator.predict_target(arrays.alpha[dep], arrays.beta[dep]) + arrays.delta[dep][:, None]

    def evaluate(self, genomes: Sequence[np.ndarray]) -> np.ndarray:
        """(n, 2) array of (acceptance ratio, average latency ms).

        Each genome gets its own forward pass, so a genome's score never
        depends on which other genomes share the call.
        """
        out = np.empty((len(genomes), 2))
        S = self.demand.n_sfcs
        counts = self.demand.counts
        T = counts.sum()
        for i, genome in enumerate(genomes):
            arrays = self.demand.evaluate_genome(genome)
            n = int(arrays.deployed.sum())
            out[i, 0] = n / S
            if n == 0:
                out[i, 1] = AR_ZERO_LATENCY_MS
                continue
            lat = self._latency_terms(arrays)
            out[i, 1] = float((lat @ counts).sum() / (n * T))
        self.n_evaluations += len(genomes)
        return out

    def per_slot_latency(self, arrays: DemandArrays) -> np.ndarray:
        return arrays.per_slot(self._latency_terms(arrays))


class SurrogateEvaluator:
    """Online-evaluator adapter that answers with the surrogate itself."""

    def __init__(self, approximator: Approximator, usage: UsageModel):
        self.approximator = approximator
        self.usage = usage

    def measure(self, embedding: Embedding, traffic: Traffic, key: Sequence[int] = ()) -> Measurement:
        dm = DemandModel(embedding.topology, [e.graph for e in embedding.sfcs], self.usage, traffic, embedding.gateway)
        arrays = dm.evaluate_embedding(embedding)
        lat = Surrogate(self.approximator, dm).per_slot_latency(arrays)
        ids = tuple(e.request.id for e in embedding.sfcs if e.deployed)
        return Measurement(ids, lat, arrays)


def approximate_fitness(
    approximator: Approximator,
    predictors: UsageModel,
    genome: np.ndarray,
    sfcrs: Sequence[SfcRequest],
    topology: Topology,
    traffic: Traffic,
    gateway: int = 0,
) -> tuple[float, float]:
    dm = DemandModel(topology, sfcrs, predictors, traffic, gateway)
    ar, lat = Surrogate(approximator, dm).evaluate([np.asarray(genome)])[0]
    return float(ar), float(lat)


LANDSCAPE_HEADER = ["alpha", "beta", "latency_ms"]


def fitness_landscape_scan(
    approximator: Approximator,
    n_points: int,
    alpha_range: tuple[float, float] = (0.0, 2.0),
    beta_range: tuple[float, float] = (0.0, 350.0),
    seed: int = 0,
    path: str | Path | None = None,
    chunk: int = 100_000,
) -> int | np.ndarray:
    """Score uniform random (alpha, beta) pairs at zero propagation delay.

    With ``path`` the rows are streamed to CSV in chunks and the row count is
    returned; without it an (n, 3) array is returned.
    """
    rng = np.random.default_rng(seed)
    fh = open(path, "w", newline="") if path is not None else None
    blocks = []
    try:
        if fh:
            fh.write(",".join(LANDSCAPE_HEADER) + "\n")
        done = 0
        while done < n_points:
            m = min(chunk, n_points - done)
            # one (alpha, beta) pair per draw keeps the stream independent of ``chunk``
            u = rng.random((m, 2))
            a = alpha_range[0] + u[:, 0] * (alpha_range[1] - alpha_range[0])
            b = beta_range[0] + u[:, 1] * (beta_range[1] - beta_range[0])
            block = np.column_stack([a, b, approximator.predict_target(a, b)])
            if fh:
                np.savetxt(fh, block, delimiter=",", fmt="%.10g")
            else:
                blocks.append(block)
            done += m
    finally:
        if fh:
            fh.close()
    return n_points if fh else (np.concatenate(blocks) if blocks else np.zeros((0, 3)))
