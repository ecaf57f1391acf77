"""Synthetic VNF profiling and per-VNF CPU/memory usage predictors."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from . import nn
from .errors import EmptyDatasetError, InvalidArgumentError, MissingPredictorError
from .netmodel import VnfType
from .traffic import linear_ramp

CPU = "cpu"
MEMORY = "memory"
RESOURCES = (CPU, MEMORY)

V = VnfType
# Layer sizes per (VNF, resource).
ARCHITECTURES: dict[tuple[VnfType, str], tuple[int, ...]] = {
    (V.WebApplicationFirewall, CPU): (1, 32, 32, 1),
    (V.WebApplicationFirewall, MEMORY): (1, 32, 32, 64, 1),
    (V.LoadBalancer, CPU): (1, 4, 24, 1),
    (V.LoadBalancer, MEMORY): (1, 32, 64, 64, 128, 1),
    (V.IntrusionDetectionSystem, CPU): (1, 8, 32, 32, 1),
    (V.IntrusionDetectionSystem, MEMORY): (1, 64, 64, 256, 1),
    (V.IntrusionPreventionSystem, CPU): (1, 8, 16, 16, 1),
    (V.IntrusionPreventionSystem, MEMORY): (1, 64, 64, 128, 1),
    (V.TrafficMonitor, CPU): (1, 16, 16, 32, 1),
    (V.TrafficMonitor, MEMORY): (1, 64, 64, 64, 1),
    (V.DeepPacketInspection, CPU): (1, 4, 4, 1),
    (V.DeepPacketInspection, MEMORY): (1, 64, 128, 128, 1),
    (V.HttpAccelerator, CPU): (1, 64, 64, 128, 1),
    (V.HttpAccelerator, MEMORY): (1, 150, 150, 256, 1),
}

PROFILE_DURATION_S = 300
PROFILE_INTERVAL_S = 2
PROFILE_MIN_RPS = 1.0
PROFILE_MAX_RPS = 500.0
NOISE_FRACTION = 0.02


@dataclass(frozen=True)
class UsageCurve:
    """Ground-truth usage of one VNF.

    cpu(r) = cpu_per_rps * r / (1 + r / cpu_sat_rps)
    mem(r) = mem_base_mb + mem_per_rps * min(r, mem_cap_rps)
    """

    cpu_per_rps: float
    cpu_sat_rps: float
    mem_base_mb: float
    mem_per_rps: float
    mem_cap_rps: float

    def cpu(self, r):
        r = np.asarray(r, dtype=float)
        return self.cpu_per_rps * r / (1.0 + r / self.cpu_sat_rps)

    def memory(self, r):
        r = np.asarray(r, dtype=float)
        return self.mem_base_mb + self.mem_per_rps * np.minimum(r, self.mem_cap_rps)


GROUND_TRUTH: dict[VnfType, UsageCurve] = {
    V.WebApplicationFirewall: UsageCurve(0.012, 250.0, 120.0, 0.15, 300.0),
    V.LoadBalancer: UsageCurve(0.004, 400.0, 60.0, 0.05, 400.0),
    V.IntrusionDetectionSystem: UsageCurve(0.015, 200.0, 200.0, 0.30, 250.0),
    V.IntrusionPreventionSystem: UsageCurve(0.016, 200.0, 210.0, 0.30, 250.0),
    V.TrafficMonitor: UsageCurve(0.006, 350.0, 80.0, 0.08, 300.0),
    V.DeepPacketInspection: UsageCurve(0.020, 150.0, 250.0, 0.40, 200.0),
    V.HttpAccelerator: UsageCurve(0.008, 300.0, 150.0, 0.25, 350.0),
}


class UsageModel(Protocol):
    def cpu_pred(self, vnf: VnfType, requests): ...

    def mem_pred(self, vnf: VnfType, requests): ...


class GroundTruthUsage:
    """Noise-free synthetic usage curves (what the reference network actually consumes)."""

    def cpu_pred(self, vnf, requests):
        return GROUND_TRUTH[vnf].cpu(requests)

    def mem_pred(self, vnf, requests):
        return GROUND_TRUTH[vnf].memory(requests)


class StubUsage:
    """cpu = 0.01 r cores, memory = r MB, for hand-checkable demand math."""

    def cpu_pred(self, vnf, requests):
        return 0.01 * np.asarray(requests, dtype=float)

    def mem_pred(self, vnf, requests):
        return 1.0 * np.asarray(requests, dtype=float)


@dataclass(frozen=True, eq=False)
class VnfProfile:
    vnf: VnfType
    requests_per_s: np.ndarray
    cpu_used: np.ndarray
    memory_used_mb: np.ndarray

    def __len__(self) -> int:
        return self.requests_per_s.size

    def usage(self, resource: str) -> np.ndarray:
        return self.cpu_used if resource == CPU else self.memory_used_mb


def synth_profile(vnf: VnfType, seed: int = 0) -> VnfProfile:
    """Sample the 1 -> 500 rps profiling ramp every 2 s for 5 minutes."""
    rates = linear_ramp(PROFILE_MIN_RPS, PROFILE_MAX_RPS, PROFILE_DURATION_S).rates[::PROFILE_INTERVAL_S]
    rng = np.random.default_rng([seed, vnf.code])
    curve = GROUND_TRUTH[vnf]
    cpu = curve.cpu(rates) * (1.0 + NOISE_FRACTION * rng.standard_normal(rates.size))
    mem = curve.memory(rates) * (1.0 + NOISE_FRACTION * rng.standard_normal(rates.size))
    return VnfProfile(vnf, rates.copy(), np.maximum(cpu, 0.0), np.maximum(mem, 0.0))


def write_profile_csv(profile: VnfProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["requests", "cpu", "memory_mb"])
        for r, c, m in zip(profile.requests_per_s, profile.cpu_used, profile.memory_used_mb):
            w.writerow([repr(float(r)), repr(float(c)), repr(float(m))])


def read_profile_csv(vnf: VnfType, path: str | Path) -> VnfProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return VnfProfile(vnf, data[:, 0], data[:, 1], data[:, 2])


@dataclass(eq=False)
class UsagePredictor:
    vnf: VnfType
    resource: str
    model: nn.MlpModel

    def __call__(self, requests):
        r = np.asarray(requests, dtype=float)
        out = self.model.predict(r.reshape(-1, 1)).reshape(r.shape)
        return np.maximum(out, 0.0)


def architecture(vnf: VnfType, resource: str) -> tuple[int, ...]:
    try:
        return ARCHITECTURES[(vnf, resource)]
    except KeyError:
        raise InvalidArgumentError(f"no architecture for ({vnf}, {resource})") from None


def holdout_split(n: int, seed: int, val_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_predictor(
    profile: VnfProfile,
    resource: str,
    seed: int = 0,
    config: nn.TrainConfig | None = None,
    max_attempts: int = 8,
    accept_ratio: float = 0.5,
) -> UsagePredictor:
    """Fit the fixed architecture for (VNF, resource) on 80% of the profile.

    Narrow ReLU stacks fed [0, 1] inputs can start with every unit dead, so
    training restarts from a fresh initialization until the held-out MAE drops
    below ``accept_ratio`` times the constant-mean baseline. The best attempt
    is returned if none qualifies.
    """
    if not isinstance(profile.vnf, VnfType):
        raise InvalidArgumentError(f"unknown VNF type {profile.vnf!r}")
    if len(profile) < 2:
        raise EmptyDatasetError("profile has fewer than two samples")
    x = profile.requests_per_s.reshape(-1, 1)
    y = profile.usage(resource).reshape(-1, 1)
    tr, va = holdout_split(len(profile), seed)
    baseline = float(np.abs(y[va] - y[tr].mean()).mean())

    best, best_mae = None, np.inf
    for attempt in range(max_attempts):
        run_seed = int(np.random.SeedSequence([seed, profile.vnf.code, RESOURCES.index(resource), attempt]).generate_state(1)[0])
        run_config = replace(config, seed=run_seed) if config else nn.TrainConfig(seed=run_seed)
        model = nn.init_mlp(architecture(profile.vnf, resource), nn.RELU, nn.HE_NORMAL, run_seed)
        model.x_norm = nn.fit_normalizer(x[tr])
        model.y_norm = nn.fit_normalizer(y[tr])
        model, _ = nn.train(
            model,
            model.x_norm.apply(x[tr]),
            model.y_norm.apply(y[tr]),
            model.x_norm.apply(x[va]),
            model.y_norm.apply(y[va]),
            run_config,
        )
        pred = UsagePredictor(profile.vnf, resource, model)
        mae = float(np.abs(pred(x[va]) - y[va]).mean())
        if mae < best_mae:
            best, best_mae = pred, mae
        if mae <= accept_ratio * baseline:
            break
    return best


class PredictorSet:
    """Trained CPU and memory predictors, looked up by VNF type."""

    def __init__(self, predictors: dict[tuple[VnfType, str], UsagePredictor]):
        self.predictors = dict(predictors)

    def _get(self, vnf: VnfType, resource: str) -> UsagePredictor:
        try:
            return self.predictors[(vnf, resource)]
        except KeyError:
            raise MissingPredictorError(f"no {resource} predictor for {vnf.name}") from None

    def cpu_pred(self, vnf: VnfType, requests):
        return self._get(vnf, CPU)(requests)

    def mem_pred(self, vnf: VnfType, requests):
        return self._get(vnf, MEMORY)(requests)

    def save(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for (vnf, resource), pred in sorted(self.predictors.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            path = directory / model_filename(vnf, resource)
            nn.save_model(pred.model, path)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory: str | Path) -> "PredictorSet":
        directory = Path(directory)
        found = {}
        for vnf in VnfType:
            for resource in RESOURCES:
                path = directory / model_filename(vnf, resource)
                if path.exists():
                    found[(vnf, resource)] = UsagePredictor(vnf, resource, nn.load_model(path))
        if not found:
            raise MissingPredictorError(f"no predictor files in {directory}")
        return cls(found)


def model_filename(vnf: VnfType, resource: str) -> str:
    return f"{vnf.value}_{resource}.model"


def cpu_pred(predictors: UsageModel, vnf: VnfType, requests):
    return predictors.cpu_pred(vnf, requests)


def mem_pred(predictors: UsageModel, vnf: VnfType, requests):
    return predictors.mem_pred(vnf, requests)


def train_all(seed: int = 0, config: nn.TrainConfig | None = None) -> tuple[dict[VnfType, VnfProfile], PredictorSet]:
    """Profile every VNF and train all 14 predictors."""
    profiles = {vnf: synth_profile(vnf, seed) for vnf in VnfType}
    preds = {
        (vnf, resource): train_predictor(profiles[vnf], resource, seed, config)
        for vnf in VnfType
        for resource in RESOURCES
    }
    return profiles, PredictorSet(preds)
