"""One test per acceptance criterion; each prints a PASS/FAIL line and the summary repeats them."""

import csv
import io
import itertools
import time

import networkx as nx
import numpy as np
import pytest

import brute
from benns import cli, nn
from benns import config as cfg
from benns.demand import DemandModel, host_cpu_demand, host_mem_demand, link_bw_demand, total_prop_delay
from benns.evolution import fast_non_dominated_sort
from benns.netmodel import SfcRequest, VnfType, build_fat_tree, shortest_path
from benns.predictors import CPU, MEMORY, PredictorSet, architecture, holdout_split, read_profile_csv, synth_profile
from benns.surrogate import approximate_latency
from benns.traffic import TrafficSeries
from test_demand import STUB, check_against_brute, embed, routed, two_host_line
from test_nn import max_relative_error, numeric_grads
from test_predictors import TABLE

V = VnfType


def test_c01_demand_matches_brute_force(criterion):
    with criterion(1, "demand math equals exhaustive brute force") as info:
        start = time.perf_counter()
        n = 150
        for seed in range(n):
            check_against_brute(seed)
        elapsed = time.perf_counter() - start
        info["detail"] = f"{n} instances within 1e-9 in {elapsed:.2f}s"
        assert elapsed < 10.0


def test_c02_hand_cases(criterion):
    with criterion(2, "hand-derived demand cases") as info:
        topo = two_host_line()
        traffic = TrafficSeries([10.0])
        emb = embed(topo, [SfcRequest(0, (V.LoadBalancer, V.WebApplicationFirewall))], [0, 0, 0])
        cpu = host_cpu_demand(emb, STUB, 0, 0, traffic)
        mem = host_mem_demand(emb, STUB, 0, 0, traffic)
        r20 = TrafficSeries([20.0])
        bw1 = link_bw_demand(routed(topo, SfcRequest(0, (V.TrafficMonitor,)), (1,), ((0,), ())), 0, 0, r20)
        two = routed(topo, SfcRequest(0, (V.LoadBalancer, V.TrafficMonitor)), (0, 1, 1), ((), (0,), (0,), (), ()))
        bw2 = link_bw_demand(two, 0, 0, r20)
        d1 = total_prop_delay(routed(topo, SfcRequest(0, (V.TrafficMonitor,)), (1,), ((0, 1), ())), 0)
        d2 = total_prop_delay(routed(topo, SfcRequest(0, (V.TrafficMonitor, V.LoadBalancer)), (0, 0), ((), (), (0, 1), ())), 0)
        got = dict(cpu=cpu, mem=mem, bw_level1=bw1, bw_level2=bw2, delay_level1=d1, delay_level2=d2)
        want = dict(cpu=0.2, mem=1.0, bw_level1=4.0, bw_level2=4.0, delay_level1=4.0, delay_level2=2.0)
        info["detail"] = ", ".join(f"{k}={v:g}" for k, v in got.items())
        for k in want:
            assert abs(got[k] - want[k]) <= 1e-12, k
        vec = DemandModel(topo, [two.sfcs[0].request], STUB, r20).evaluate_embedding(two)
        assert abs(vec.beta[0, 0] - 4.0) <= 1e-12 and abs(vec.delta[0] - 2.0) <= 1e-12  # two level-2 hops over one 1 ms link


def test_c03_fat_tree(criterion):
    with criterion(3, "k=4 fat-tree structure") as info:
        topo = build_fat_tree(4, 1.0, 1.0, 1.0, 1.0)
        lengths = [len(shortest_path(topo, a, b)) for a, b in itertools.combinations(range(topo.n_hosts), 2)]
        info["detail"] = f"{topo.n_hosts} hosts, {len(topo.switches)} switches, {len(topo.links)} links, max path {max(lengths)}"
        assert (topo.n_hosts, len(topo.switches), len(topo.links)) == (16, 20, 48)
        assert nx.is_connected(topo.graph) and min(lengths) >= 2 and max(lengths) == 6


def test_c04_nn_gradients_and_adamax(criterion):
    with criterion(4, "gradient check and Adamax hand step") as info:
        rng = np.random.default_rng(0)
        shapes = [[2, 8, 8, 1], [1, 8, 1], [2, 1], [1, 3, 5, 1], [2, 8, 1]]
        worst = 0.0
        for i in range(30):
            sizes = shapes[i % len(shapes)]
            act = (nn.SIGMOID, nn.RELU)[(i // len(shapes)) % 2]
            model = nn.init_mlp(sizes, act, nn.GLOROT_NORMAL, i)
            for b in model.biases:
                b[:] = rng.normal(0, 0.1, b.shape)
            x, y = rng.random((6, sizes[0])), rng.random((6, 1))
            worst = max(worst, max_relative_error(nn.backward(model, x, y), numeric_grads(model, x, y)))
        m = nn.init_mlp([1, 1])
        m.weights[0][:] = 0.0
        m.biases[0][:] = 0.0
        new, state = nn.adamax_step(m, [np.ones((1, 1)), np.zeros(1)], nn.AdamaxState.fresh(m), 0.05)
        theta = new.weights[0][0, 0]
        info["detail"] = f"worst relative error {worst:.1e} over 30 models; theta={theta:.10f}"
        assert worst < 1e-4
        assert abs(theta - (-(0.05 / (1 - 0.9)) * 0.1 / (1 + 1e-8))) <= 1e-12
        assert abs(state.m[0][0, 0] - 0.1) <= 1e-12 and state.u[0][0, 0] == 1.0


def test_c05_predictors(criterion, pipeline):
    with criterion(5, "14 predictor architectures; every predictor beats the mean baseline") as info:
        out = pipeline["out"]
        preds = PredictorSet.load(out / "predictors")
        assert len(preds.predictors) == 14
        worst = 0.0
        for vnf in VnfType:
            train_profile = read_profile_csv(vnf, out / "profiles" / f"{vnf.value}.csv")
            fresh = synth_profile(vnf, 101)
            tr, va = holdout_split(len(train_profile), 0)
            for k, resource in enumerate((CPU, MEMORY)):
                predictor = preds.predictors[(vnf, resource)]
                assert predictor.model.layer_sizes == architecture(vnf, resource) == TABLE[vnf.value][k]
                assert nn.init_mlp(list(TABLE[vnf.value][k])).layer_sizes == TABLE[vnf.value][k]
                predict = preds.cpu_pred if resource == CPU else preds.mem_pred
                y = train_profile.usage(resource)
                mean = y[tr].mean()
                for rps, target in ((train_profile.requests_per_s[va], y[va]),
                                    (fresh.requests_per_s, fresh.usage(resource))):
                    mae = np.abs(predict(vnf, rps) - target).mean()
                    base = np.abs(target - mean).mean()
                    worst = max(worst, mae / base)
                    assert mae < base, (vnf, resource)
        info["detail"] = f"worst MAE/baseline ratio {worst:.3f} on internal holdout and fresh profiles"


def test_c06_surrogate_quality(criterion, pipeline):
    with criterion(6, "surrogate MAE by regime") as info:
        r = pipeline["report"]
        info["detail"] = (f"low MAE {r.low:.2f} ms (n={r.n_low}) vs 10% of range {0.1 * r.low_target_range:.2f}; "
                          f"high MAE {r.high:.2f} ms (n={r.n_high}); pipeline {pipeline['elapsed_s']:.0f}s")
        assert r.n_low > 0 and r.n_high > 0
        assert r.low <= 0.1 * r.low_target_range
        assert r.low < r.high
        assert pipeline["elapsed_s"] < 15 * 60


def test_c07_delta_additivity(criterion, pipeline):
    with criterion(7, "delta additivity") as info:
        approx = pipeline["approximator"]
        rng = np.random.default_rng(7)
        a, b = rng.uniform(0, 2, 1000), rng.uniform(0, 350, 1000)
        d, c = rng.uniform(0, 40, 1000), rng.uniform(0, 60, 1000)
        shift = approximate_latency(approx, a, b, d + c) - approximate_latency(approx, a, b, d)
        err = float(np.abs(shift - c).max())
        info["detail"] = f"max deviation {err:.1e} over 1000 points"
        assert err <= 1e-12


def test_c08_nsga2_fronts(criterion):
    with criterion(8, "non-dominated sort equals brute force") as info:
        rng = np.random.default_rng(8)
        total = 0
        for trial in range(50):
            n = int(rng.integers(1, 51))
            ar = rng.integers(0, 9, n) / 8  # coarse values force ties
            lat = np.round(rng.uniform(0, 300, n) / 25) * 25 if trial % 2 else rng.uniform(0, 300, n)
            obj = np.column_stack([-ar, lat])
            got = [f.tolist() for f in fast_non_dominated_sort(obj)]
            assert got == brute.fronts([tuple(p) for p in obj]), trial
            total += n
        info["detail"] = f"50 populations, {total} individuals"


@pytest.fixture(scope="module")
def baseline_runs(pipeline, tmp_path_factory):
    spec = cfg.preset("baseline")
    paths = dict(predictors_dir=str(pipeline["out"] / "predictors"),
                 approximator_path=str(pipeline["out"] / "surrogate" / "approximator.model"))
    runs = {}
    for name, mode, workers in (("hybrid", "hybrid", 1), ("online", "online", 1), ("hybrid4", "hybrid", 4)):
        out = tmp_path_factory.mktemp(name)
        runs[name] = cli.cmd_evolve(out, spec, mode, workers=workers, **paths)
    return runs


def test_c09_hybrid_vs_online(criterion, baseline_runs):
    with criterion(9, "hybrid converges where online-only does not") as info:
        h, o = baseline_runs["hybrid"], baseline_runs["online"]
        hr, orr = h.result, o.result
        info["detail"] = (f"seed 1; hybrid gen {hr.generations}, explored {hr.explored}, online evals {hr.online_evals}, "
                          f"measured AR {h.measured[0]:.3f} latency {h.measured[1]:.2f} ms in {h.elapsed_s:.0f}s; "
                          f"online-only explored {orr.explored}, best AR {o.measured[0]:.3f}")
        assert hr.converged and h.measured[0] == 1.0 and h.measured[1] <= 150.0
        assert hr.generations <= 500
        assert not orr.converged
        threshold = cli.EvolutionConfig()
        assert not threshold.meets(o.measured)
        assert orr.explored <= 110 and orr.offline_evals == 0
        assert hr.explored >= 10 * orr.explored
        assert hr.online_evals <= 5
        assert h.elapsed_s + o.elapsed_s < 10 * 60


def test_c10_final_discrepancy(criterion, baseline_runs):
    with criterion(10, "approximated vs measured latency of the returned individual") as info:
        h = baseline_runs["hybrid"]
        gap = abs(h.approximated[1] - h.measured[1])
        info["detail"] = f"approximated {h.approximated[1]:.3f} ms, measured {h.measured[1]:.3f} ms, gap {gap:.3f} ms"
        assert gap <= 3 * cli.OracleConfig().noise_std_ms


def _without_elapsed(path):
    rows = list(csv.reader(path.open(newline="")))
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(r[:-1] for r in rows)
    assert rows[0][-1] == "elapsed_s"
    return buf.getvalue()


def test_c11_determinism(criterion, baseline_runs):
    with criterion(11, "generation logs identical across runs and worker counts") as info:
        one, four = baseline_runs["hybrid"], baseline_runs["hybrid4"]
        a, b = one.result.log.render(include_elapsed=False), four.result.log.render(include_elapsed=False)
        fa, fb = (_without_elapsed(r.directory / "generations.csv") for r in (one, four))
        info["detail"] = f"{len(one.result.log.rows)} log rows, workers 1 vs 4, elapsed_s column excluded"
        assert a == b and fa == fb == a
        assert np.array_equal(one.result.best.genome, four.result.best.genome)


def test_c12_data_generation_accounting(criterion, pipeline):
    with criterion(12, "data generation evaluation count") as info:
        gen, oracle = pipeline["gen"], pipeline["oracle"]
        pairs = set(zip(gen.raw.exp.tolist(), gen.raw.embedding.tolist()))
        info["detail"] = f"{gen.n_evaluations} evaluations, oracle saw {oracle.n_measurements}, {len(pairs)} embeddings"
        assert gen.n_evaluations == 220 and oracle.n_measurements == 220
        assert len(pairs) == 220 and len(set(gen.raw.exp.tolist())) == 11
        assert len(cli.sg.data_gen_sfcrs()) == 32
        assert gen.raw.sfc.max() < 32
