"""Acceptance suite: every shipping criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -s` to stream the verdict lines.
The training-based criteria share one module-scoped fixture pair (12 train
samples, 20 held-out samples) and finish in a few minutes on one core.
"""

import time

import numpy as np
import pytest

from dtfilter.edgenet import (
    extract_features,
    init_edge_model,
    make_toy_dataset,
    predict_edges,
    train,
)
from dtfilter.filtering import (
    density_from_edges,
    filter_2d,
    gradient_magnitude_edges,
    sigma_schedule,
)
from dtfilter.gradients import (
    backward_1d_pass,
    gradient_check_suite,
    relative_error,
    unrolled_reference_gradients,
)
from dtfilter.grids import DtParams, EdgeMap, ScoreMap
from dtfilter.gru import GruCorrespondence, verify_gate_equivalence
from dtfilter.io_formats import (
    read_checkpoint,
    read_pgm,
    read_ppm,
    read_tensor,
    write_checkpoint,
    write_pgm,
    write_ppm,
    write_tensor,
)
from dtfilter.metrics import mean_iou, trimap_curve

SUITE_PARAMS = DtParams(10.0, 0.5, 3)
SUITE_CLASSES = 4


def _verdict(label: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{label}: {detail}"


@pytest.fixture(scope="module")
def heldout_samples():
    return make_toy_dataset(count=20, size=64, classes=SUITE_CLASSES,
                            seed=1000, blur=1.5, noise=0.35)


@pytest.fixture(scope="module")
def trained_model():
    samples = make_toy_dataset(count=12, size=64, classes=SUITE_CLASSES,
                               seed=2000, blur=1.5, noise=0.35)
    start = time.perf_counter()
    model, history = train(samples, SUITE_PARAMS, {"lr": 0.3, "epochs": 50, "seed": 0})
    return model, history, time.perf_counter() - start


def _suite_miou(samples, predict) -> float:
    values = [mean_iou(predict(s), s.labels, SUITE_CLASSES).mean_iou for s in samples]
    return float(np.mean(values))


def _raw_argmax(sample):
    return np.argmax(sample.coarse_scores.data, axis=2)


def _gradient_dt_argmax(sample, params=SUITE_PARAMS):
    edges = gradient_magnitude_edges(sample.image)
    filtered, _ = filter_2d(sample.coarse_scores, edges, params)
    return np.argmax(filtered.data, axis=2)


class TestAcceptance:
    def test_01_gradient_exactness(self):
        start = time.perf_counter()
        worst, info = gradient_check_suite(100, 0)
        rng = np.random.default_rng(2)
        worst_unrolled = 0.0
        for _ in range(50):
            n = int(rng.integers(2, 9))
            x = rng.normal(size=n)
            w = rng.uniform(0.0, 1.0, size=n)
            u = rng.normal(size=n)
            direction = ("forward", "backward")[int(rng.integers(2))]
            gx, gw = backward_1d_pass(x, w, direction, u)
            rx, rw = unrolled_reference_gradients(x, w, [direction], u)
            worst_unrolled = max(worst_unrolled, relative_error(gx, rx), relative_error(gw, rw))
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-5 and worst_unrolled <= 1e-10 and elapsed < 60.0
        _verdict(
            "01 gradient-exactness",
            ok,
            f"fd max rel err {worst:.3e} <= 1e-5, unrolled {worst_unrolled:.3e} <= 1e-10, "
            f"{elapsed:.1f}s < 60s",
        )

    def test_02_sigma_schedule(self):
        worst_rel = 0.0
        monotone = True
        exact_k1 = True
        for sigma_s in (1.0, 10.0, 100.0):
            for iterations in range(1, 9):
                sigmas = sigma_schedule(sigma_s, iterations)
                total = float(np.sum(np.square(sigmas)))
                worst_rel = max(worst_rel, abs(total - sigma_s**2) / sigma_s**2)
                monotone &= bool(np.all(np.diff(sigmas) < 0)) or iterations == 1
                if iterations == 1:
                    exact_k1 &= sigmas[0] == sigma_s
        ok = worst_rel <= 1e-9 and monotone and exact_k1
        _verdict(
            "02 sigma-schedule",
            ok,
            f"variance sum rel err {worst_rel:.2e} <= 1e-9, strictly decreasing, K=1 exact",
        )

    def test_03_diffusion_limits(self):
        rng = np.random.default_rng(90)
        x = ScoreMap(rng.uniform(0.0, 1.0, (16, 16, 3)))
        density = density_from_edges(EdgeMap(np.zeros((16, 16))), DtParams(30.0, 1.0, 3))
        unit_density = bool(np.all(density.data == 1.0))
        y_smooth, _ = filter_2d(x, EdgeMap(np.zeros((16, 16))), DtParams(30.0, 1.0, 3))
        contraction = float(np.max(np.ptp(y_smooth.data, axis=(0, 1)) / np.ptp(x.data, axis=(0, 1))))
        g_wall = EdgeMap(1e12 * rng.uniform(1.0, 10.0, (16, 16)))
        y_wall, _ = filter_2d(x, g_wall, SUITE_PARAMS)
        wall_err = float(np.abs(y_wall.data - x.data).max())
        const = ScoreMap(np.full((9, 7, 2), 0.37))
        y_const, _ = filter_2d(const, EdgeMap(rng.uniform(0.0, 3.0, (9, 7))), SUITE_PARAMS)
        const_exact = bool(np.all(y_const.data == 0.37))
        ok = unit_density and contraction < 0.05 and wall_err <= 1e-9 and const_exact
        _verdict(
            "03 diffusion-limits",
            ok,
            f"g=0 density 1 exact, smoothing ptp ratio {contraction:.3f}, "
            f"g>=1e12 passthrough err {wall_err:.2e} <= 1e-9, constant fixed point exact",
        )

    def test_04_convex_combination_bound(self):
        rng = np.random.default_rng(91)
        worst_overshoot = 0.0
        for _ in range(1000):
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            c = int(rng.integers(1, 4))
            x = ScoreMap(rng.normal(size=(h, w, c)) * 10)
            g = EdgeMap(rng.uniform(0.0, 5.0, (h, w)))
            params = DtParams(float(rng.uniform(0.5, 100.0)), float(rng.uniform(0.3, 2.0)),
                              int(rng.integers(1, 4)))
            y, _ = filter_2d(x, g, params)
            worst_overshoot = max(
                worst_overshoot,
                float(x.data.min() - y.data.min()),
                float(y.data.max() - x.data.max()),
            )
        ok = worst_overshoot <= 1e-12
        _verdict(
            "04 convex-bound",
            ok,
            f"1000 instances, worst range overshoot {worst_overshoot:.2e} <= 1e-12",
        )

    def test_05_gru_equivalence(self):
        grid = np.linspace(-30.0, 30.0, 601)
        worst = 0.0
        for sigma_s in (0.5, 1.0, 2.0):
            for sigma_r in (0.5, 1.0, 2.0):
                for sigma_k in (0.5, 1.0, 2.0):
                    corr = GruCorrespondence(sigma_s, sigma_r, sigma_k)
                    for f in grid:
                        worst = max(worst, verify_gate_equivalence(float(f), corr))
        ok = worst <= 1e-12
        _verdict(
            "05 gru-equivalence",
            ok,
            f"601-point grid x 27 scale triples, max residual {worst:.2e} <= 1e-12",
        )

    def test_06_pipeline_ordering(self, heldout_samples, trained_model):
        model, history, train_seconds = trained_model
        raw = _suite_miou(heldout_samples, _raw_argmax)
        grad = _suite_miou(heldout_samples, _gradient_dt_argmax)

        def learned(sample):
            edges = predict_edges(extract_features(sample.image, model), model)
            filtered, _ = filter_2d(sample.coarse_scores, edges, SUITE_PARAMS)
            return np.argmax(filtered.data, axis=2)

        learned_miou = _suite_miou(heldout_samples, learned)
        ok = (
            raw < grad <= learned_miou
            and learned_miou - raw >= 0.01
            and train_seconds < 600.0
        )
        _verdict(
            "06 pipeline-ordering",
            ok,
            f"raw {raw:.4f} < gradient-edge {grad:.4f} <= learned-edge {learned_miou:.4f}, "
            f"margin {100 * (learned_miou - raw):.1f} points >= 1, "
            f"training {train_seconds:.0f}s < 600s",
        )

    def test_07_boundary_band_gains(self, heldout_samples):
        widths = [0.0, 2.0, 6.0]
        raw_bands = {w: [] for w in widths}
        dt_bands = {w: [] for w in widths}
        for sample in heldout_samples:
            raw_curve = trimap_curve(_raw_argmax(sample), sample.labels, SUITE_CLASSES, widths)
            dt_curve = trimap_curve(
                _gradient_dt_argmax(sample), sample.labels, SUITE_CLASSES, widths
            )
            for w, rv, dv in zip(widths, raw_curve.miou, dt_curve.miou):
                if rv is not None and dv is not None:
                    raw_bands[w].append(rv)
                    dt_bands[w].append(dv)
        raw_means = {w: float(np.mean(raw_bands[w])) for w in widths}
        dt_means = {w: float(np.mean(dt_bands[w])) for w in widths}
        ok = all(dt_means[w] > raw_means[w] for w in widths)
        detail = ", ".join(
            f"width {w:g}: filtered {dt_means[w]:.4f} > raw {raw_means[w]:.4f}" for w in widths
        )
        _verdict("07 boundary-band-gains", ok, detail)

    def test_08_iteration_sufficiency(self, heldout_samples):
        miou_by_k = {}
        for k in (1, 2, 3, 5):
            params = DtParams(SUITE_PARAMS.sigma_s, SUITE_PARAMS.sigma_r, k)
            miou_by_k[k] = _suite_miou(
                heldout_samples, lambda s, p=params: _gradient_dt_argmax(s, p)
            )
        gap = abs(miou_by_k[3] - miou_by_k[5])
        ok = gap <= 0.005
        _verdict(
            "08 iteration-sufficiency",
            ok,
            f"mIOU K=1..{{{', '.join(f'{k}: {v:.4f}' for k, v in miou_by_k.items())}}}, "
            f"|K3 - K5| = {gap:.5f} <= 0.005",
        )

    def test_09_performance(self):
        rng = np.random.default_rng(0)
        x = ScoreMap(rng.random((513, 513, 21)))
        g = EdgeMap(rng.random((513, 513)) * 2.0)
        params = DtParams(100.0, 1.0, 3)
        filter_2d(x, g, params)  # warmup
        times = []
        serial = None
        for _ in range(3):
            start = time.perf_counter()
            serial, _ = filter_2d(x, g, params, threads=1)
            times.append((time.perf_counter() - start) * 1e3)
        best_ms = min(times)
        parallel, _ = filter_2d(x, g, params, threads=4)
        bitwise = bool(np.array_equal(serial.data, parallel.data))
        ok = best_ms <= 1000.0 and bitwise
        _verdict(
            "09 performance",
            ok,
            f"513x513x21 K=3 single-thread {best_ms:.0f}ms <= 1000ms, "
            f"4-thread output bitwise identical: {bitwise}",
        )

    def test_10_determinism_and_round_trips(self, tmp_path):
        samples = make_toy_dataset(count=2, size=16, classes=3, seed=7, blur=1.0, noise=0.2)
        hyper = {"lr": 0.5, "epochs": 3, "seed": 2}
        model_a, hist_a = train(samples, DtParams(5.0, 0.5, 2), hyper)
        model_b, hist_b = train(samples, DtParams(5.0, 0.5, 2), hyper)
        write_checkpoint(tmp_path / "a.dtck", model_a)
        write_checkpoint(tmp_path / "b.dtck", model_b)
        history_bitwise = hist_a == hist_b
        checkpoint_bitwise = (tmp_path / "a.dtck").read_bytes() == (tmp_path / "b.dtck").read_bytes()

        rng = np.random.default_rng(92)
        failures = 0
        for trial in range(600):  # tensors, bitwise
            shape = tuple(int(v) for v in rng.integers(1, 7, 3))
            data = rng.normal(size=shape) * 10.0 ** rng.integers(-30, 30)
            write_tensor(tmp_path / "t.dtt", ScoreMap(data))
            failures += not np.array_equal(read_tensor(tmp_path / "t.dtt").data, data)
        for trial in range(200):  # label maps, bitwise
            labels = rng.integers(0, 256, (int(rng.integers(1, 12)), int(rng.integers(1, 12))))
            write_pgm(tmp_path / "l.pgm", labels, mode="labels")
            failures += not np.array_equal(read_pgm(tmp_path / "l.pgm", mode="labels"), labels)
        for trial in range(100):  # images, quantization fixed point
            image = ScoreMap(rng.uniform(0.0, 1.0, (int(rng.integers(1, 9)), int(rng.integers(1, 9)), 3)))
            write_ppm(tmp_path / "i.ppm", image)
            once = read_ppm(tmp_path / "i.ppm")
            failures += np.abs(once.data - image.data).max() > 0.5 / 255 + 1e-12
            write_ppm(tmp_path / "i2.ppm", once)
            failures += not np.array_equal(read_ppm(tmp_path / "i2.ppm").data, once.data)
        for trial in range(100):  # checkpoints, bitwise
            c1 = int(rng.integers(1, 5))
            c2 = int(rng.integers(1, 5))
            from dtfilter.edgenet import EdgeModel

            model = EdgeModel(
                conv1_weight=rng.normal(size=(3, 3, 3, c1)),
                conv1_bias=rng.normal(size=c1),
                conv2_weight=rng.normal(size=(3, 3, c1, c2)),
                conv2_bias=rng.normal(size=c2),
                head_weight=rng.normal(size=c1 + c2),
                head_bias=float(rng.normal()),
            )
            write_checkpoint(tmp_path / "m.dtck", model)
            back = read_checkpoint(tmp_path / "m.dtck")
            failures += not (
                np.array_equal(back.conv1_weight, model.conv1_weight)
                and np.array_equal(back.conv1_bias, model.conv1_bias)
                and np.array_equal(back.conv2_weight, model.conv2_weight)
                and np.array_equal(back.conv2_bias, model.conv2_bias)
                and np.array_equal(back.head_weight, model.head_weight)
                and back.head_bias == model.head_bias
            )
        ok = history_bitwise and checkpoint_bitwise and failures == 0
        _verdict(
            "10 determinism-and-round-trips",
            ok,
            f"history bitwise: {history_bitwise}, checkpoints bitwise: {checkpoint_bitwise}, "
            f"round-trip failures {failures}/1000",
        )
