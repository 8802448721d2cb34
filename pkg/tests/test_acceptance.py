"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured quantity
and its runtime, then asserts.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from autofeat import models as ae
from autofeat.cli import main
from autofeat.nn import Conv2D, Dense, MaxPool2, Network, Upsample2, grad_check
from autofeat.pipelines import (
    AnomalyConfig,
    DenoiseConfig,
    HashConfig,
    VisualizeConfig,
    make_clusters,
    make_shapes,
    make_topics,
    run_anomaly_pipeline,
    run_denoising_pipeline,
    run_hashing_pipeline,
    run_visualization_pipeline,
)
from autofeat.pipelines.metrics import silhouette, spearman
from autofeat.pipelines.synthetic import lorenz_generate
from autofeat.tensor import Rng, conv2d_same, matmul, max_pool2
from oracles import lorenz_rk4, naive_conv2d_same, naive_matmul, naive_max_pool2
from test_cli import SMALL_RUNS, snapshot, write_table

DATA_STREAM = 20


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(number, name, ok, detail, limit=None):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and (limit is None or elapsed < limit)
        timing = f"{elapsed:.1f}s" + (f" (limit {limit:.0f}s)" if limit else "")
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{number}] {name}: {detail}; {timing}")
        assert ok, detail

    return emit


def gradcheck_network(kind, loss, rng):
    out = "sigmoid" if loss == "bce" else "linear"
    if kind == "dense":
        layers = [Dense((6,), 5, "relu", rng), Dense((5,), 4, out, rng)]
        return Network((6,), layers, 0), (6,), (4,)
    if kind == "conv":
        layers = [Conv2D((2, 5, 5), 3, 3, "relu", rng), Conv2D((3, 5, 5), 1, 3, out, rng)]
        return Network((2, 5, 5), layers, 0), (2, 5, 5), (1, 5, 5)
    if kind == "pool":
        layers = [Conv2D((1, 6, 6), 2, 3, "linear", rng), MaxPool2((2, 6, 6)), Conv2D((2, 3, 3), 1, 1, out, rng)]
        return Network((1, 6, 6), layers, 1), (1, 6, 6), (1, 3, 3)
    layers = [Conv2D((1, 3, 3), 2, 3, "relu", rng), Upsample2((2, 3, 3)), Conv2D((2, 6, 6), 1, 3, out, rng)]
    return Network((1, 3, 3), layers, 1), (1, 3, 3), (1, 6, 6)


class TestAcceptance:
    def test_1_gradient_correctness(self, report):
        worst = {}
        for kind in ("dense", "conv", "pool", "upsample"):
            for loss in ("mse", "bce"):
                errs = []
                for seed in range(20):
                    net, in_shape, out_shape = gradcheck_network(kind, loss, Rng(seed))
                    data = Rng(seed, DATA_STREAM)
                    x, target = data.uniform((2,) + in_shape), data.uniform((2,) + out_shape)
                    errs.append(grad_check(net, x, 1e-6, loss, target))
                worst[f"{kind}/{loss}"] = max(errs)
        top = max(worst.values())
        detail = f"max relative error {top:.2e} over 20 seeds x 8 cases (< 1e-05)"
        report(1, "gradient correctness", top < 1e-5, detail, limit=60)

    def test_2_oracle_equivalence(self, report):
        kernel_err = 0.0
        for seed in range(20):
            rng = Rng(seed)
            h, w = (int(v) + 1 for v in rng.integers(8, 2))
            a, b = rng.uniform((h, w), -1, 1), rng.uniform((w, int(rng.integers(8, 1)[0]) + 1), -1, 1)
            kernel_err = max(kernel_err, np.abs(matmul(a, b) - naive_matmul(a, b)).max())
            x = rng.uniform((2, h, w), -1, 1)
            k = rng.uniform((3, 2, 3, 3), -1, 1)
            bias = rng.uniform(3, -1, 1)
            kernel_err = max(kernel_err, np.abs(conv2d_same(x, k, bias) - naive_conv2d_same(x, k, bias)).max())
            kernel_err = max(kernel_err, np.abs(max_pool2(x)[0] - naive_max_pool2(x)).max())
        one = np.abs(lorenz_generate(2, 0.01, (1, 1, 1), discard=0).values[1] - lorenz_rk4((1, 1, 1), 0.01, 1)).max()
        hundred = np.abs(lorenz_generate(101, 0.01, (1, 1, 1), discard=0).values[100] - lorenz_rk4((1, 1, 1), 0.01, 100)).max()
        ok = kernel_err <= 1e-12 and one <= 1e-9 and hundred <= 1e-6
        detail = f"kernels {kernel_err:.1e} (<= 1e-12), Lorenz 1 step {one:.1e} (<= 1e-9), 100 steps {hundred:.1e} (<= 1e-6)"
        report(2, "oracle equivalence", ok, detail)

    def test_3_anomaly_errors(self, report):
        result = run_anomaly_pipeline(AnomalyConfig(seed=0))
        s, errors = result.summary, result.report.errors
        bar = errors.mean() + errors.std()
        ok = s["rate_in"] >= 3 * s["rate_out"] and s["region_mean_error"] > bar
        detail = (
            f"flag rate inside {s['rate_in']:.3f} vs outside {s['rate_out']:.3f} (>= 3x); "
            f"region mean error {s['region_mean_error']:.4f} vs mean+std {bar:.4f}"
        )
        report(3, "anomalies present higher errors", ok, detail, limit=120)

    def test_4_denoising(self, report):
        images = make_shapes(250, 16, Rng(0, DATA_STREAM)).features
        rep = run_denoising_pipeline(images, DenoiseConfig(sd=0.05, lr=0.003, batch=16, seed=0))
        frac = float(np.mean(rep.mse_recon < rep.mse_noisy))
        detail = f"{frac:.1%} of {len(rep.mse_recon)} held-out images improved (>= 90%)"
        report(4, "denoising", frac >= 0.9, detail, limit=180)

    def test_5_semantic_hashing(self, report):
        corpus = make_topics(2000, 1000, 10, Rng(0, DATA_STREAM))
        curve = run_hashing_pipeline(corpus, HashConfig(seed=0)).curve
        filled = curve.pair_counts > 0
        rho = spearman(curve.buckets[filled], curve.mean_cosine[filled])
        zero_min = bool(filled[0]) and curve.mean_cosine[0] == curve.mean_cosine[filled].min()
        detail = f"Spearman {rho:.3f} over {int(filled.sum())} buckets (>= 0.8); bucket 0 is minimum: {zero_min}"
        report(5, "hash distance tracks cosine distance", rho >= 0.8 and zero_min, detail, limit=180)

    def test_6_cluster_codes(self, report):
        data = make_clusters(600, 10, 3, Rng(0, DATA_STREAM))
        codes = run_visualization_pipeline(data, VisualizeConfig(dims=3, seed=0)).codes
        inside = bool(np.all((codes > 0) & (codes < 1)))
        sil = silhouette(codes, data.labels)
        detail = f"codes in (0,1)^3: {inside}; silhouette {sil:.3f} (> 0.2)"
        report(6, "cluster structure in 3-D codes", inside and sil > 0.2, detail, limit=60)

    def test_7_variant_degeneracy(self, report):
        x = Rng(7, DATA_STREAM).uniform((64, 8))
        arch = "input:8+dense:3:sigmoid+output:sigmoid"
        cfg = ae.TrainConfig(epochs=5, batch_size=16, seed=7)
        basic = ae.autoencoder(arch, seed=7)
        variants = [ae.autoencoder_denoising(arch, sd=0.0, seed=7), ae.autoencoder_sparse(arch, rho=0.1, beta=0.0, seed=7)]
        base_hist = ae.train(basic, x, cfg)
        exact = []
        for model in variants:
            hist = ae.train(model, x, cfg)
            same = all(np.array_equal(p, q) for p, q in zip(basic.network.parameters(), model.network.parameters()))
            exact.append(hist == base_hist and same)
        detail = f"denoising sd=0 bit-exact: {exact[0]}; sparse beta=0 bit-exact: {exact[1]}"
        report(7, "variant degeneracy", all(exact), detail)

    def test_8_determinism_and_persistence(self, report, tmp_path, capsys):
        same = {}
        for command, args in SMALL_RUNS.items():
            runs = []
            for name in ("a", "b"):
                argv = [command, *args] + ([] if command == "gradcheck" else ["--out", str(tmp_path / command / name)])
                code = main(argv)
                stdout = capsys.readouterr().out
                files = {} if command == "gradcheck" else snapshot(tmp_path / command / name)
                runs.append((code, stdout, files))
            same[command] = runs[0] == runs[1] and runs[0][0] == 0
        data = write_table(tmp_path / "d.csv")
        arch = "input:4+dense:2:sigmoid+output:sigmoid"
        for name in ("a", "b"):
            main(["train", "--data", str(data), "--label", "cls", "--arch", arch, "--epochs", "3", "--out", str(tmp_path / name / "m.json")])
            main(["encode", "--model", str(tmp_path / name / "m.json"), "--data", str(data), "--label", "cls", "--out", str(tmp_path / name / "c.csv")])
        capsys.readouterr()
        same["train"] = (tmp_path / "a" / "m.json").read_bytes() == (tmp_path / "b" / "m.json").read_bytes()
        same["encode"] = (tmp_path / "a" / "c.csv").read_bytes() == (tmp_path / "b" / "c.csv").read_bytes()

        x = Rng(8, DATA_STREAM).uniform((40, 6))
        model = ae.autoencoder_sparse("input:6+dense:4:relu+dense:2:sigmoid+dense:4:relu+output", seed=8)
        ae.train(model, x, ae.TrainConfig(epochs=3, batch_size=8, seed=8))
        ae.save_model(model, tmp_path / "model.json")
        round_trip = np.array_equal(ae.encode(ae.load_model(tmp_path / "model.json"), x), ae.encode(model, x))
        ok = all(same.values()) and round_trip
        differing = [c for c, v in same.items() if not v]
        detail = f"{len(same) - len(differing)}/{len(same)} subcommands byte-identical{' (differ: ' + ', '.join(differing) + ')' if differing else ''}; save/load encode bit-exact: {round_trip}"
        report(8, "determinism and persistence", ok, detail)

    def test_9_trainability(self, report):
        rng = Rng(0, 30)
        x = rng.uniform((256, 3)) @ rng.uniform((3, 8), -1, 1)
        model = ae.autoencoder("input:8+dense:3+output", seed=0)
        initial = float(np.mean((ae.reconstruct(model, x) - x) ** 2))
        ae.train(model, x, ae.TrainConfig(epochs=200, batch_size=32, seed=0))
        final = float(np.mean((ae.reconstruct(model, x) - x) ** 2))
        ratio = final / initial
        detail = f"final/initial loss {ratio:.4f} (<= 0.1)"
        report(9, "trainability", ratio <= 0.1, detail)

