"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test records a one-line PASS/FAIL summary (printed at the end of the
pytest run by conftest) before asserting.
"""
import json
import time

import numpy as np
import pytest

from agelab import cli
from agelab import ndcore as nd
from agelab.data import Dataset, load_csv, make_gaussian_ring, mode_coverage, one_hot, save_csv
from agelab.divergence import (
    fit_diag_gaussian, knn_entropy, knn_kl_vs_unit_gaussian, kl_vs_unit_gaussian, prior_divergence,
)
from agelab.game import (
    GameConfig, encoder_objective, frozen_encoder_run, generate, generator_objective,
    loss_data_reconstruction, loss_latent_reconstruction, make_networks, train,
)
from agelab.latent import project_to_sphere, sample_uniform_sphere
from agelab.nets import Network, read_checkpoint, save_network
from agelab.ndcore import Tensor

from gradcheck import check
from test_ndcore import PRIMITIVES

RESULTS: dict[int, tuple[bool, str]] = {}
SEEDS = (0, 1, 2)
RING_ITERS = 20000


def record(key, ok, text):
    RESULTS[key] = (bool(ok), text)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {text}")
    return ok


# ---------------------------------------------------------------- 1

def _gradient_cases():
    rng = np.random.default_rng(2024)
    for name, (build, arrays) in sorted(PRIMITIVES.items()):
        for rep in range(2):
            fresh = [rng.uniform(0.5, 2.0, a.shape) if np.all(a > 0) else rng.standard_normal(a.shape)
                     for a in arrays]
            yield f"{name}#{rep}", build, fresh
    cfg = GameConfig(M=3, encoder_widths=[4], generator_widths=[4], lam=3.0, mu=2.0)
    for s in range(3):
        g, e = make_networks(2, cfg, seed=s)
        x = rng.standard_normal((5, 2))
        z = sample_uniform_sphere(5, 3, rng)
        w = rng.standard_normal((5, 3))
        yield f"sphere-projection#{s}", lambda t, w=w: nd.sum(project_to_sphere(t) * Tensor(w)), \
            [rng.standard_normal((5, 3))]
        yield f"L_X#{s}", lambda *ps, g=g, x=x: loss_data_reconstruction(g, Network(e.spec, list(ps)), x), \
            [p.data.copy() for p in e.params]
        yield f"L_Z#{s}", lambda *ps, e=e, z=z: loss_latent_reconstruction(Network(g.spec, list(ps)), e, z), \
            [p.data.copy() for p in g.params]
        yield f"generator-objective#{s}", \
            lambda *ps, e=e, z=z: generator_objective(Network(g.spec, list(ps)), e, z, cfg), \
            [p.data.copy() for p in g.params]
        yield f"encoder-objective#{s}", \
            lambda *ps, g=g, x=x, z=z: encoder_objective(g, Network(e.spec, list(ps)), x, z, cfg), \
            [p.data.copy() for p in e.params]


def test_criterion_1_gradient_integrity():
    t0 = time.perf_counter()
    errs = {name: check(build, arrays) for name, build, arrays in _gradient_cases()}
    dt = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = len(errs) >= 50 and max(errs.values()) <= 1e-4 and dt < 10
    record(1, ok, f"{len(errs)} cases, worst rel. err {errs[worst]:.2e} ({worst}), {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_divergence_calibration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    x = rng.standard_normal((50000, 4))
    shifted = x + np.array([1.0, 0, 0, 0])
    p0 = kl_vs_unit_gaussian(*fit_diag_gaussian(Tensor(x))).value
    p1 = kl_vs_unit_gaussian(*fit_diag_gaussian(Tensor(shifted))).value
    small = rng.standard_normal((5000, 4))
    k0 = knn_kl_vs_unit_gaussian(small, 5).value
    k1 = knn_kl_vs_unit_gaussian(small + np.array([1.0, 0, 0, 0]), 5).value
    h = knn_entropy(rng.standard_normal((5000, 2)), 5)
    dt = time.perf_counter() - t0
    checks = [p0 <= 0.05, abs(p1 - 0.5) <= 0.05, abs(k0) <= 0.07, abs(k1 - 0.5) <= 0.07,
              abs(h - 2.8379) <= 0.05, dt < 30]
    record(2, all(checks), f"param {p0:.4f}/{p1:.4f}, knn {k0:.4f}/{k1:.4f}, H {h:.4f}, {dt:.1f}s")
    assert all(checks)


# ---------------------------------------------------------------- 3

def test_criterion_3_theorem_certification(tmp_path, capsys):
    t0 = time.perf_counter()
    code = cli.main(["verify-theory", "--max-K", "3", "--trials", "50", "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    capsys.readouterr()
    certs = json.loads((tmp_path / "certificates.json").read_text())
    violations = sum(len(c["violations"]) for c in certs)
    trials = [c for c in certs if c["instance"].startswith("trial") and "game" in c["instance"]]
    aligned = all(c["all_aligned"] and abs(c["value"]) <= 1e-12 for c in trials)
    ok = code == 0 and violations == 0 and aligned and len(trials) == 100 and dt < 60
    record(3, ok, f"{len(certs)} certificates, {violations} violations, "
                  f"{len(trials)} game certificates all aligned={aligned}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_non_collapse():
    t0 = time.perf_counter()
    cfg = GameConfig()
    rows = []
    for seed in SEEDS:
        g, e = make_networks(16, cfg, seed=seed)
        trace, est = frozen_encoder_run(g, e, cfg, 500, seed=seed, eval_every=50)
        mono = bool(np.all(np.diff(trace) < 0))
        rows.append((mono, float(est.per_dim_std.min()), trace[0], trace[-1]))
    dt = time.perf_counter() - t0
    ok = all(m and s >= 0.2 for m, s, _, _ in rows) and dt < 60
    record(4, ok, "; ".join(f"seed{i}: monotone={m} min s={s:.3f} div {a:.3f}->{b:.3f}"
                           for i, (m, s, a, b) in enumerate(rows)) + f"; {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5, 6

@pytest.fixture(scope="module")
def ring_runs():
    out = []
    t0 = time.perf_counter()
    cfg = GameConfig()
    for seed in SEEDS:
        ds = make_gaussian_ring(seed=seed)
        g, e, log = train(ds, cfg, RING_ITERS, seed=seed)
        held = make_gaussian_ring(n=4000, seed=1000 + seed)
        samples = generate(g, 4000, cfg.M, cfg.prior, seed=seed)
        cov, hq = mode_coverage(samples, ds.meta["mode_centers"], ds.meta["mode_std"])
        z = sample_uniform_sphere(4096, cfg.M, 500 + seed)
        baseline = float(np.mean(np.abs(held.samples - ds.samples.mean(axis=0)).sum(axis=1)))
        out.append({
            "seed": seed, "coverage": cov, "hq": hq,
            "div_real": prior_divergence(e(held.samples), cfg.prior).value,
            "div_real_logged": log[-1].div_real,
            "L_Z": float(loss_latent_reconstruction(g, e, z).data),
            "L_X": float(loss_data_reconstruction(g, e, held.samples).data),
            "baseline": baseline,
        })
    return out, time.perf_counter() - t0


def test_criterion_5_end_to_end_alignment(ring_runs):
    runs, dt = ring_runs
    good = [r for r in runs if r["coverage"] >= 7 and r["hq"] >= 0.6 and r["div_real"] <= 0.2]
    ok = len(good) >= 2 and dt < 600
    record(5, ok, "; ".join(f"seed{r['seed']}: cov {r['coverage']}/8 hq {r['hq']:.3f} "
                           f"div_real {r['div_real']:.3f}" for r in runs) + f"; {dt:.0f}s for 3 runs")
    assert ok


def test_criterion_6_reciprocity_in_training(ring_runs):
    runs, _ = ring_runs
    good = [r for r in runs if r["L_Z"] <= 0.1 and r["L_X"] <= 0.3 * r["baseline"]]
    ok = len(good) >= 2
    record(6, ok, "; ".join(f"seed{r['seed']}: L_Z {r['L_Z']:.3f} L_X {r['L_X']:.3f} "
                           f"(0.3x baseline {0.3 * r['baseline']:.3f})" for r in runs))
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_conditional():
    t0 = time.perf_counter()
    ds = make_gaussian_ring(seed=0)
    cfg = GameConfig()
    g, e, _ = train(ds, cfg, RING_ITERS, seed=0, conditional=True)
    C = np.asarray(ds.meta["mode_centers"])
    fracs, ratios = [], []
    for k in range(8):
        s = generate(g, 500, cfg.M, cfg.prior, seed=100 + k, condition=one_hot(np.full(500, k), 8))
        nearest = np.linalg.norm(s[:, None] - C[None], axis=2).argmin(axis=1)
        fracs.append(float(np.mean(nearest == k)))
        data_k = ds.samples[ds.labels == k]
        ratios.append(float(np.sqrt(s.var(axis=0).mean()) / np.sqrt(data_k.var(axis=0).mean())))
    dt = time.perf_counter() - t0
    ok = min(fracs) >= 0.9 and min(ratios) >= 0.25
    record(7, ok, f"min on-label fraction {min(fracs):.3f}, min spread ratio {min(ratios):.2f}, "
                  f"per label {[round(f, 2) for f in fracs]}, {dt:.0f}s")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_determinism_and_round_trips(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("AGE_LOG", "quiet")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": {"kind": "ring", "params": {"n": 2000}}, "train": {"iters": 300}}))
    codes = [cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    capsys.readouterr()
    same_metrics = (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()

    g, meta = read_checkpoint(tmp_path / "a/generator.age")
    save_network(g, tmp_path / "g2.age", meta)
    g2, meta2 = read_checkpoint(tmp_path / "g2.age")
    ckpt_exact = ((tmp_path / "a/generator.age").read_bytes() == (tmp_path / "g2.age").read_bytes()
                  and meta == meta2 and all(p.data.tobytes() == q.data.tobytes()
                                            for p, q in zip(g.params, g2.params)))

    rng = np.random.default_rng(0)
    x = rng.standard_normal((300, 3)) * 10.0 ** rng.integers(-300, 300, size=(300, 3))
    x[0, 0], x[0, 1] = -0.0, np.nextafter(1.0, 2.0)
    save_csv(Dataset(x, rng.integers(0, 4, 300)), tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv")
    csv_exact = back.samples.tobytes() == x.tobytes()

    ok = codes == [0, 0] and same_metrics and ckpt_exact and csv_exact
    record(8, ok, f"metrics identical={same_metrics}, checkpoint bit-exact={ckpt_exact}, csv lossless={csv_exact}")
    assert ok
