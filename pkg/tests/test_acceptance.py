"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run as: pytest tests/test_acceptance.py -v -s
"""

import json
import time

import numpy as np

from padlab.autograd import SGD, Tensor, backward, cross_entropy
from padlab.cli import main
from padlab.datasets import make_tiny_images
from padlab.models import build_mlp, build_smallcnn
from padlab.noise import (
    instance_noise,
    make_noisy_dataset,
    noise_report,
    pairflip_noise,
    symmetric_noise,
)
from padlab.spectral import GateMode, dft, gated_forward
from padlab.training import (
    AdamConfig,
    ConfidentSplit,
    PaddlesSchedule,
    SGDConfig,
    _subset_accuracies,
    evaluate,
    run_paddles,
    select_confident,
    train_phase,
)

from oracles import (
    direct_dft,
    finite_difference_grad,
    held_component_value,
    max_rel_error,
    split_metrics_bruteforce,
)

# settings shared by the two training-based criteria (5 and 6)
TOY = dict(n=2000, k=10, hw=(8, 8), pixel_noise=0.5, epsilon=0.4,
           channels=[8, 16, 16], lr=0.05, batch=128, seeds=(1, 2, 3, 4, 5))


def report_line(criterion: int, ok: bool, detail: str) -> None:
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def toy_setup(seed):
    data = make_tiny_images(TOY["n"], TOY["k"], h=TOY["hw"][0], w=TOY["hw"][1],
                            seed=seed, n_test=500, pixel_noise=TOY["pixel_noise"])
    ds = make_noisy_dataset(data.train_x, data.train_y, TOY["k"], "symmetric",
                            TOY["epsilon"], seed=seed + 1000)
    model = build_smallcnn(TOY["channels"], TOY["k"], TOY["hw"], seed=seed + 2000)
    return data, ds, model


def fresh_sgd(model):
    return SGD(model.trainable_parameters(), lr=TOY["lr"], momentum=0.9, weight_decay=1e-4)


def test_criterion_1_spectral_round_trip():
    started = time.time()
    rng = np.random.default_rng(101)
    shapes = [(8,), (16,), (1, 1, 8, 8), (4, 8, 16, 16)]
    worst = 0.0
    for i in range(100):
        shape = shapes[i % len(shapes)]
        axes = (-1,) if len(shape) == 1 else (-2, -1)
        x = rng.standard_normal(shape)
        for mode in GateMode:
            out = gated_forward(Tensor(x, True), mode, axes)
            worst = max(worst, float(np.abs(out.values - x).max()))
    elapsed = time.time() - started
    ok = worst < 1e-9 and elapsed < 10.0
    report_line(1, ok, f"round-trip max err {worst:.2e} over 100 tensors x 4 modes, "
                       f"{elapsed:.1f}s")
    assert worst < 1e-9
    assert elapsed < 10.0


def test_criterion_2_dft_oracle_equivalence():
    started = time.time()
    rng = np.random.default_rng(102)
    worst_abs, worst_parseval, worst_conj = 0.0, 0.0, 0.0
    for case in range(200):
        if case % 2 == 0:
            m = int(rng.integers(2, 24))
            shape, axes = (int(rng.integers(1, 4)), m), (-1,)
        else:
            mh, mw = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            shape, axes = (int(rng.integers(1, 3)), mh, mw), (-2, -1)
        x = rng.standard_normal(shape)
        spec = dft(Tensor(x), axes)
        z = spec.real.values + 1j * spec.imag.values

        ref = direct_dft(x, axes)
        worst_abs = max(worst_abs, float(np.abs(z - ref).max()))

        m_total = np.prod([shape[a] for a in axes])
        lhs = float((x**2).sum())
        rhs = float((np.abs(z) ** 2).sum() / m_total)
        worst_parseval = max(worst_parseval, abs(lhs - rhs) / max(abs(lhs), 1e-30))

        conj = z
        for a in axes:
            m = shape[a]
            idx = (-np.arange(m)) % m
            conj = np.take(conj, idx, axis=a)
        conj = np.conj(conj)
        worst_conj = max(worst_conj, float(np.abs(z - conj).max()))
    elapsed = time.time() - started
    ok = worst_abs < 1e-9 and worst_parseval < 1e-9 and worst_conj < 1e-9 and elapsed < 30
    report_line(2, ok, f"oracle abs {worst_abs:.2e}, parseval rel {worst_parseval:.2e}, "
                       f"conjugate symmetry {worst_conj:.2e}, {elapsed:.1f}s")
    assert worst_abs < 1e-9
    assert worst_parseval < 1e-9
    assert worst_conj < 1e-9
    assert elapsed < 30.0


def _np_conv3x3(x, w, b):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    n, c, hp, wp = xp.shape
    s = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, c, 3, 3, hp - 2, wp - 2), (s[0], s[1], s[2], s[3], s[2], s[3])
    )
    return np.einsum("ncuvhw,fcuv->nfhw", win, w) + b[None, :, None, None]


def _np_avgpool(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _ce_value(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def _mlp_case(rng):
    model = build_mlp([6, 8], 3, seed=301)
    x = rng.uniform(-1, 1, (5, 6))
    labels = rng.integers(0, 3, 5)
    w0 = model.stages[0].w.values
    b0 = model.stages[0].b.values
    wh = model.stages[1].w.values
    bh = model.stages[1].b.values

    def forward_with_gate(params, hold):
        w0x, b0x, whx, bhx = params
        chi = np.maximum(x @ w0x + b0x, 0.0)
        chi_base = np.maximum(x @ w0 + b0, 0.0)
        gate = held_component_value(chi_base, (-1,), hold)
        feat = gate(chi)
        return _ce_value(feat @ whx + bhx, labels)

    return model, x, labels, [w0, b0, wh, bh], forward_with_gate, (-1,)


def _cnn_case(rng):
    model = build_smallcnn([2, 2], 3, (8, 8), seed=302)
    x = rng.uniform(-1, 1, (3, 1, 8, 8))
    labels = rng.integers(0, 3, 3)
    params = [p.values for p in model.parameters()]

    def forward_with_gate(values, hold):
        w0x, b0x, w1x, b1x, whx, bhx = values
        chi = np.maximum(_np_conv3x3(x, w0x, b0x), 0.0)
        chi_base = np.maximum(_np_conv3x3(x, params[0], params[1]), 0.0)
        gate = held_component_value(chi_base, (-2, -1), hold)
        feat = gate(chi)
        feat = np.maximum(_np_conv3x3(_np_avgpool(feat), w1x, b1x), 0.0)
        logits = feat.reshape(len(feat), -1) @ whx + bhx
        return _ce_value(logits, labels)

    return model, x, labels, params, forward_with_gate, (-2, -1)


def test_criterion_3_gradient_gating():
    started = time.time()
    rng = np.random.default_rng(103)
    worst_fd, worst_pass, worst_partition = 0.0, 0.0, 0.0
    for case_builder in (_mlp_case, _cnn_case):
        model, x, labels, params, forward_with_gate, axes = case_builder(rng)

        def engine_grads(mode):
            model.gate_mode = mode
            for p in model.parameters():
                p.zero_grad()
            backward(cross_entropy(model.forward(x), labels))
            return [
                p.grad.copy() if p.grad is not None else np.zeros_like(p.values)
                for p in model.parameters()
            ]

        grads = {mode: engine_grads(mode) for mode in
                 (GateMode.PASS_BOTH, GateMode.DETACH_AMPLITUDE, GateMode.DETACH_PHASE)}

        # held-component oracle per detached mode, every parameter
        for mode, hold in ((GateMode.DETACH_AMPLITUDE, "amplitude"),
                           (GateMode.DETACH_PHASE, "phase")):
            for pi, base in enumerate(params):
                def f(v):
                    trial = [q.copy() for q in params]
                    trial[pi] = v
                    return forward_with_gate(trial, hold)

                fd = finite_difference_grad(f, base.copy())
                err = max_rel_error(grads[mode][pi], fd, exclude_below=1e-8)
                worst_fd = max(worst_fd, err)

        # gate-free comparison
        model.gate_mode = None
        for p in model.parameters():
            p.zero_grad()
        backward(cross_entropy(model.forward(x), labels))
        for pi, p in enumerate(model.parameters()):
            worst_pass = max(worst_pass,
                             float(np.abs(grads[GateMode.PASS_BOTH][pi] - p.grad).max()))

        # the two branches partition the full gradient for parameters that
        # feed the gate (suffix parameters see the same gradient in every mode)
        n_prefix = sum(
            len(s.params()) for s in model.stages[: model.gate_index + 1]
        )
        for pi in range(n_prefix):
            total = grads[GateMode.DETACH_AMPLITUDE][pi] + grads[GateMode.DETACH_PHASE][pi]
            worst_partition = max(
                worst_partition,
                float(np.abs(total - grads[GateMode.PASS_BOTH][pi]).max()),
            )

    elapsed = time.time() - started
    ok = worst_fd < 1e-4 and worst_pass < 1e-8 and worst_partition < 1e-8 and elapsed < 120
    report_line(3, ok, f"held-component FD rel {worst_fd:.2e}, pass-both vs gate-free "
                       f"{worst_pass:.2e}, partition {worst_partition:.2e}, {elapsed:.1f}s")
    assert worst_fd < 1e-4
    assert worst_pass < 1e-8
    assert worst_partition < 1e-8
    assert elapsed < 120.0


def test_criterion_4_noise_calibration():
    started = time.time()
    n = 100_000
    rng = np.random.default_rng(104)
    clean = rng.integers(0, 10, n).astype(np.int64)
    checks = []

    for eps in (0.2, 0.5, 0.8):
        noisy = symmetric_noise(clean, 10, eps, seed=41)
        rate = float((noisy != clean).mean())
        checks.append(abs(rate - eps) < 0.01)
        ds = make_noisy_dataset(np.zeros((n, 1)), clean, 10, "symmetric", eps, seed=41)
        rates = np.array(noise_report(ds)["transition_rates"])
        off = rates[~np.eye(10, dtype=bool)]
        checks.append(float(np.abs(off - eps / 9).max()) < 0.01)

    noisy = pairflip_noise(clean, 10, 0.45, seed=42)
    flipped = noisy != clean
    checks.append(abs(float(flipped.mean()) - 0.45) < 0.01)
    checks.append(bool(np.array_equal(noisy[flipped], (clean[flipped] + 1) % 10)))

    feats = rng.standard_normal((n, 32))
    for eps in (0.2, 0.4):
        inoisy, _ = instance_noise(feats, clean, 10, eps, seed=43)
        checks.append(abs(float((inoisy != clean).mean()) - eps) < 0.03)

    checks.append(bool(np.array_equal(symmetric_noise(clean, 10, 0.5, seed=44),
                                      symmetric_noise(clean, 10, 0.5, seed=44))))
    checks.append(bool(np.array_equal(instance_noise(feats, clean, 10, 0.4, seed=45)[0],
                                      instance_noise(feats, clean, 10, 0.4, seed=45)[0])))

    elapsed = time.time() - started
    ok = all(checks) and elapsed < 60
    report_line(4, ok, f"{sum(checks)}/{len(checks)} calibration checks, {elapsed:.1f}s")
    assert all(checks)
    assert elapsed < 60.0


def test_criterion_5_memorization_effect_ordering():
    started = time.time()
    wins = 0
    details = []
    for seed in TOY["seeds"]:
        finals = {}
        for mode in (GateMode.DETACH_PHASE, GateMode.DETACH_AMPLITUDE):
            _, ds, model = toy_setup(seed)
            train_phase(model, ds, 60, mode, fresh_sgd(model),
                        batch_size=TOY["batch"], seed=seed + 3000)
            finals[mode] = _subset_accuracies(model, ds)[1]
        amplitude_trained = finals[GateMode.DETACH_PHASE]
        phase_trained = finals[GateMode.DETACH_AMPLITUDE]
        wins += amplitude_trained > phase_trained
        details.append(f"s{seed}:{amplitude_trained:.3f}>{phase_trained:.3f}")
    elapsed = time.time() - started
    ok = wins >= 4 and elapsed < 600
    report_line(5, ok, f"amplitude-trained memorizes faster on {wins}/5 seeds "
                       f"({', '.join(details)}), {elapsed:.0f}s")
    assert wins >= 4
    assert elapsed < 600.0


def test_criterion_6_confident_sample_quality():
    started = time.time()
    good_seeds = 0
    details = []
    for seed in TOY["seeds"]:
        data, ds, model = toy_setup(seed)
        schedule = PaddlesSchedule(
            t_a=15, t_p=10, t_0=0, suffix_epochs=[7, 5],
            batch_size=TOY["batch"], seed=seed + 3000,
            optimizer=SGDConfig(lr=TOY["lr"]),
            pes_optimizer=AdamConfig(lr=3e-3),
        )
        paddles = run_paddles(model, ds, schedule, data.test_x, data.test_y).final

        data, ds, model = toy_setup(seed)
        train_phase(model, ds, 30, None, fresh_sgd(model),
                    batch_size=TOY["batch"], seed=seed + 3000)
        split = select_confident(model, ds, sigma=0.05, seed=seed + 3000)
        plain = evaluate(split, ds, model, data.test_x, data.test_y)

        recall_ok = paddles["label_recall"] >= plain["label_recall"]
        precision_ok = paddles["label_precision"] >= plain["label_precision"] - 0.02
        good_seeds += recall_ok and precision_ok
        details.append(
            f"s{seed}:r{paddles['label_recall']:.3f}/{plain['label_recall']:.3f}"
            f",p{paddles['label_precision']:.3f}/{plain['label_precision']:.3f}"
        )
    elapsed = time.time() - started
    ok = good_seeds >= 4 and elapsed < 900
    report_line(6, ok, f"recall>=plain and precision within -0.02 on {good_seeds}/5 seeds "
                       f"({', '.join(details)}), {elapsed:.0f}s")
    assert good_seeds >= 4
    assert elapsed < 900.0


def test_criterion_7_degenerate_schedule_equivalence():
    started = time.time()
    rng = np.random.default_rng(107)
    labels = rng.integers(0, 3, 80).astype(np.int64)
    feats = rng.standard_normal((80, 4)) + 2.0 * rng.standard_normal((3, 4))[labels]
    ds = make_noisy_dataset(feats, labels, 3, "symmetric", 0.3, seed=71)

    sched = PaddlesSchedule(t_a=4, t_p=0, t_0=0, suffix_epochs=[], batch_size=16, seed=72)
    m1 = build_mlp([4, 6], 3, seed=73)
    run_paddles(m1, ds, sched, with_final_metrics=False)

    m2 = build_mlp([4, 6], 3, seed=73)
    opt = SGD(m2.trainable_parameters(), lr=sched.optimizer.lr,
              momentum=sched.optimizer.momentum, weight_decay=sched.optimizer.weight_decay)
    train_phase(m2, ds, 4, None, opt, batch_size=16, seed=72)

    identical = all(
        np.array_equal(a.values, b.values) for a, b in zip(m1.parameters(), m2.parameters())
    )
    elapsed = time.time() - started
    ok = identical and elapsed < 60
    report_line(7, ok, f"degenerate schedule bit-identical to plain training, {elapsed:.1f}s")
    assert identical
    assert elapsed < 60.0


def test_criterion_8_end_to_end_determinism(tmp_path):
    started = time.time()
    cfg = {
        "seed": 7,
        "dataset": {"kind": "tiny-images", "n": 300, "n_test": 100, "k": 5},
        "noise": {"kind": "symmetric", "epsilon": 0.4},
        "model": {"kind": "smallcnn", "channels": [4, 8]},
        "schedule": {"t_a": 2, "t_p": 1, "t_0": 0, "suffix_epochs": [1, 1],
                     "batch_size": 64, "optimizer": {"lr": 0.05}},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))

    def summary_without_wall_time(path):
        data = json.loads(path.read_text())
        data.pop("wall_time_s", None)
        return data

    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg_path), "--out", str(out_a), "--quiet"]) == 0
    assert main(["run", str(cfg_path), "--out", str(out_b), "--quiet"]) == 0
    same_csv = (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    same_summary = (summary_without_wall_time(out_a / "summary.json")
                    == summary_without_wall_time(out_b / "summary.json"))

    out_r = tmp_path / "r"
    assert main(["replay", str(out_a), "--out", str(out_r), "--quiet"]) == 0
    same_replay = (out_a / "report.csv").read_bytes() == (out_r / "report.csv").read_bytes()
    same_replay_summary = (summary_without_wall_time(out_a / "summary.json")
                           == summary_without_wall_time(out_r / "summary.json"))

    elapsed = time.time() - started
    ok = same_csv and same_summary and same_replay and same_replay_summary and elapsed < 300
    report_line(8, ok, f"byte-identical outputs across rerun and replay, {elapsed:.1f}s")
    assert same_csv and same_summary
    assert same_replay and same_replay_summary
    assert elapsed < 300.0


def test_criterion_9_metric_definitions():
    started = time.time()
    rng = np.random.default_rng(109)
    exact = True
    for _ in range(1000):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(2, 6))
        clean = rng.integers(0, k, n).astype(np.int64)
        noisy = np.where(rng.random(n) < 0.4, rng.integers(0, k, n), clean).astype(np.int64)
        ds = make_noisy_dataset(np.zeros((n, 1)), clean, k, "none", 0.0, 0)
        ds.noisy_labels = noisy
        labeled = np.flatnonzero(rng.random(n) < rng.uniform(0.1, 0.9))
        split = ConfidentSplit(labeled, np.setdiff1d(np.arange(n), labeled), noisy.copy())

        class _Null:
            spec = type("S", (), {"num_classes": k})()

            def predict(self, x, batch_size=512):
                return np.zeros(len(x), dtype=np.int64)

        metrics = evaluate(split, ds, _Null())
        recall_ref, precision_ref = split_metrics_bruteforce(labeled, clean, noisy)
        if metrics["label_recall"] != recall_ref or metrics["label_precision"] != precision_ref:
            exact = False
            break
    elapsed = time.time() - started
    ok = exact and elapsed < 10
    report_line(9, ok, f"recall/precision exactly match set-counting oracle on 1000 splits, "
                       f"{elapsed:.1f}s")
    assert exact
    assert elapsed < 10.0
