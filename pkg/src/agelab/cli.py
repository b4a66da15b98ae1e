"""agelab command line: train, sample, reconstruct, interpolate, eval-divergence, verify-theory.

Exit codes: 0 ok, 1 verification violation, 2 bad input, 3 numeric abort,
4 geometric degeneracy. ``AGE_LOG`` selects quiet, info or debug logging.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as datagen
from . import theory
from .divergence import knn_kl_vs_unit_gaussian, prior_divergence
from .game import GameConfig, NumericAbort, generate, metrics_header, train
from .latent import slerp
from .ndcore import DomainError, Tensor
from .nets import IdentityNet, read_checkpoint, save_network

log = logging.getLogger("agelab")

EXIT_OK, EXIT_VIOLATION, EXIT_BAD_INPUT, EXIT_NUMERIC, EXIT_GEOMETRY = 0, 1, 2, 3, 4

DEFAULT_CONFIG = {
    "data": {"kind": "ring", "params": {}, "path": None},
    "model": {"M": GameConfig.M, "encoder_widths": [64, 64], "generator_widths": [64, 64],
              "prior": "sphere", "condition": False},
    "train": {"iters": 20000, "batch_size": 64, "lr": 2e-4, "lambda": 1000.0, "mu": 10.0,
              "gen_updates_per_enc": 2, "seed": 0, "divergence_method": "parametric-kl"},
    "out_dir": "run",
}

DATA_PARAMS = {
    "ring": {"n_modes": 8, "radius": 2.0, "std": 0.02, "n": 8000},
    "checkerboard": {"n": 8000},
    "point-mass": {"x0": [0.5, -0.5], "n": 1000},
    "csv": {},
}


class ConfigError(ValueError):
    """Invalid run configuration; the message starts with the offending field path."""


def _setup_logging() -> None:
    level = os.environ.get("AGE_LOG", "info").strip().lower()
    levels = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.INFO), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    if level not in levels:
        log.warning("AGE_LOG=%r not understood, using info", level)


# ---------------------------------------------------------------- config

def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _need(cond: bool, where: str, what: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {what}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def resolve_config(raw: dict | None = None) -> dict:
    """Fill defaults and validate; raises ConfigError naming the field path."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a JSON object")
    cfg = _merge(DEFAULT_CONFIG, raw, "")
    d, m, t = cfg["data"], cfg["model"], cfg["train"]

    _need(d["kind"] in DATA_PARAMS, "data.kind", f"must be one of {sorted(DATA_PARAMS)}")
    _need(isinstance(d["params"], dict), "data.params", "expected an object")
    for key in d["params"]:
        _need(key in DATA_PARAMS[d["kind"]], f"data.params.{key}", f"unknown key for kind {d['kind']!r}")
    d["params"] = {**DATA_PARAMS[d["kind"]], **d["params"]}
    if d["kind"] == "csv":
        _need(isinstance(d["path"], str) and d["path"] != "", "data.path", "required for kind 'csv'")
    p = d["params"]
    for key in ("n", "n_modes"):
        if key in p:
            _need(_is_int(p[key]) and p[key] >= 1, f"data.params.{key}", "must be an integer >= 1")
    if "std" in p:
        _need(_is_num(p["std"]) and p["std"] > 0, "data.params.std", "must be > 0")
    if "radius" in p:
        _need(_is_num(p["radius"]) and p["radius"] >= 0, "data.params.radius", "must be >= 0")
    if "x0" in p:
        _need(isinstance(p["x0"], list) and len(p["x0"]) >= 1 and all(_is_num(v) for v in p["x0"]),
              "data.params.x0", "must be a non-empty list of numbers")

    _need(_is_int(m["M"]) and m["M"] >= 1, "model.M", "must be an integer >= 1")
    _need(m["prior"] in ("sphere", "gaussian"), "model.prior", "must be 'sphere' or 'gaussian'")
    _need(m["prior"] != "sphere" or m["M"] >= 2, "model.M", "sphere prior needs M >= 2")
    for key in ("encoder_widths", "generator_widths"):
        _need(isinstance(m[key], list) and all(_is_int(w) and w >= 1 for w in m[key]),
              f"model.{key}", "must be a list of positive integers")
    _need(isinstance(m["condition"], bool), "model.condition", "must be true or false")
    _need(not m["condition"] or d["kind"] in ("ring", "csv"), "model.condition",
          "conditioning needs labelled data (ring or csv with a label column)")

    _need(_is_int(t["iters"]) and t["iters"] >= 0, "train.iters", "must be an integer >= 0")
    _need(_is_int(t["batch_size"]) and t["batch_size"] >= 2, "train.batch_size", "must be an integer >= 2")
    _need(_is_num(t["lr"]) and t["lr"] > 0, "train.lr", "must be > 0")
    _need(_is_num(t["lambda"]) and t["lambda"] >= 0, "train.lambda", "must be >= 0")
    _need(_is_num(t["mu"]) and t["mu"] >= 0, "train.mu", "must be >= 0")
    _need(_is_int(t["gen_updates_per_enc"]) and t["gen_updates_per_enc"] >= 1, "train.gen_updates_per_enc",
          "must be an integer >= 1")
    _need(_is_int(t["seed"]) and t["seed"] >= 0, "train.seed", "must be an integer >= 0")
    _need(t["divergence_method"] in ("parametric-kl", "paper-normalization"), "train.divergence_method",
          "must be 'parametric-kl' or 'paper-normalization'")
    _need(isinstance(cfg["out_dir"], str) and cfg["out_dir"] != "", "out_dir", "must be a non-empty path")
    return cfg


def game_config(cfg: dict) -> GameConfig:
    m, t = cfg["model"], cfg["train"]
    return GameConfig(M=m["M"], lam=float(t["lambda"]), mu=float(t["mu"]),
                      gen_updates_per_enc=t["gen_updates_per_enc"], batch_size=t["batch_size"],
                      lr=float(t["lr"]), divergence_method=t["divergence_method"], prior=m["prior"],
                      encoder_widths=list(m["encoder_widths"]), generator_widths=list(m["generator_widths"]))


def build_dataset(cfg: dict) -> datagen.Dataset:
    d, seed = cfg["data"], cfg["train"]["seed"]
    p = d["params"]
    if d["kind"] == "ring":
        return datagen.make_gaussian_ring(p["n_modes"], p["radius"], p["std"], p["n"], seed=seed)
    if d["kind"] == "checkerboard":
        return datagen.make_checkerboard(p["n"], seed=seed)
    if d["kind"] == "point-mass":
        return datagen.make_point_mass(np.array(p["x0"], dtype=np.float64), p["n"])
    return datagen.load_csv(d["path"])


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"<config>: cannot read {args.config}: {exc}") from None
    if args.seed is not None:
        raw.setdefault("train", {})["seed"] = args.seed
    if args.iters is not None:
        raw.setdefault("train", {})["iters"] = args.iters
    if args.out is not None:
        raw["out_dir"] = args.out
    cfg = resolve_config(raw)
    try:
        ds = build_dataset(cfg)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"data: {exc}") from None
    gcfg = game_config(cfg)
    t = cfg["train"]
    _need(len(ds) >= gcfg.batch_size, "train.batch_size", f"larger than the dataset ({len(ds)} rows)")
    conditional = cfg["model"]["condition"]
    if conditional and ds.labels is None:
        raise ConfigError("model.condition: the dataset has no labels")

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    meta = {"M": gcfg.M, "prior": gcfg.prior, "data_dim": ds.dim,
            "n_classes": ds.n_classes if conditional else 0,
            "mode_centers": np.asarray(ds.meta["mode_centers"]).tolist() if "mode_centers" in ds.meta else None,
            "mode_std": ds.meta.get("mode_std")}
    log.info("training %d iterations on %s (%d rows), M=%d prior=%s", t["iters"], cfg["data"]["kind"],
             len(ds), gcfg.M, gcfg.prior)

    code = EXIT_OK
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metrics_header() + "\n")
        fh.flush()

        def emit(m):
            fh.write(m.row() + "\n")
            fh.flush()
            if m.iter % 1000 == 0:
                log.info("iter %d div_real %.4f div_fake %.4f L_Z %.4f L_X %.4f",
                         m.iter, m.div_real, m.div_fake, m.loss_latent, m.loss_data)

        try:
            g, e, _ = train(ds, gcfg, t["iters"], seed=t["seed"], conditional=conditional, on_metrics=emit)
        except NumericAbort as exc:
            log.error("numeric abort: %s; last finite parameters saved", exc)
            g, e, code = exc.generator, exc.encoder, EXIT_NUMERIC
    save_network(g, out / "generator.age", {**meta, "role": "generator"})
    save_network(e, out / "encoder.age", {**meta, "role": "encoder"})
    log.info("wrote %s", out)
    return code


def _load(path, role):
    try:
        net, meta = read_checkpoint(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{role}: cannot load {path}: {exc}") from None
    if meta.get("role", role) != role:
        raise ConfigError(f"{role}: {path} holds a {meta['role']} checkpoint")
    return net, meta


def _condition(label, n_classes, n, where):
    if n_classes == 0:
        if label is not None:
            raise ConfigError(f"{where}: --label given but the model is unconditional")
        return None
    if label is None or not 0 <= label < n_classes:
        raise ConfigError(f"{where}: conditional model needs --label in [0, {n_classes})")
    return datagen.one_hot(np.full(n, label), n_classes)


def cmd_sample(args) -> int:
    if args.n < 0:
        raise ConfigError("--n: must be >= 0")
    g, meta = _load(args.ckpt, "generator")
    M = meta.get("M", g.spec.input_dim)
    prior = meta.get("prior", "sphere")
    if args.prior is not None and args.prior != prior:
        raise ConfigError(f"--prior: checkpoint was trained with prior {prior!r}")
    if M != g.spec.input_dim:
        raise ConfigError(f"{args.ckpt}: latent dim {M} does not match network input {g.spec.input_dim}")
    cond = _condition(args.label, g.spec.condition_dim, args.n, "sample")
    seed = 0 if args.seed is None else args.seed
    x = generate(g, args.n, M, prior, seed=seed, condition=cond)
    out = args.out or "samples.csv"
    if args.raster:
        H, W = args.raster
        if H * W != g.spec.output_dim:
            raise ConfigError(f"--raster: {H}x{W} does not match output dim {g.spec.output_dim}")
        datagen.render_raster_grid(np.clip(x, -1, 1), H, W, args.grid_cols, out)
    else:
        datagen.write_rows_csv(x, out, dim=g.spec.output_dim)
    log.info("wrote %d samples to %s", args.n, out)
    return EXIT_OK


def _pipeline(args, dim):
    """(encoder, generator, encoder-meta); identity stubs in test mode."""
    if args.identity_stub:
        return IdentityNet(dim, "sphere-projection" if args.sphere_stub else "identity"), IdentityNet(dim), {}
    if not args.encoder or not args.generator:
        raise ConfigError("--encoder/--generator: both checkpoints are required")
    e, meta = _load(args.encoder, "encoder")
    g, _ = _load(args.generator, "generator")
    if e.spec.output_dim != g.spec.input_dim or g.spec.output_dim != e.spec.input_dim:
        raise ConfigError("--encoder/--generator: checkpoint dimensions do not chain")
    return e, g, meta


def cmd_reconstruct(args) -> int:
    try:
        ds = datagen.load_csv(args.data)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--data: {exc}") from None
    e, g, _ = _pipeline(args, ds.dim)
    if e.spec.input_dim != ds.dim:
        raise ConfigError(f"--data: {ds.dim}-dimensional rows, encoder expects {e.spec.input_dim}")
    cond = None
    if getattr(e.spec, "condition_dim", 0):
        if ds.labels is None:
            raise ConfigError("--data: conditional model needs a label column")
        cond = datagen.one_hot(ds.labels, e.spec.condition_dim)
    rec = g(e(ds.samples, cond), cond).data
    err = float(np.mean(np.sum(np.abs(ds.samples - rec), axis=1)))
    rows = np.empty((2 * len(ds), ds.dim))
    rows[0::2], rows[1::2] = ds.samples, rec
    out = args.out or "reconstructions.csv"
    datagen.write_rows_csv(rows, out, dim=ds.dim)
    print(json.dumps({"mean_l1": err, "n": len(ds)}))
    return EXIT_OK


def _point(text, where):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError:
        raise ConfigError(f"{where}: expected comma-separated numbers, got {text!r}") from None


def cmd_interpolate(args) -> int:
    if args.steps < 2:
        raise ConfigError("--steps: must be >= 2")
    x1, x2 = _point(args.x1, "--x1"), _point(args.x2, "--x2")
    if x1.size != x2.size:
        raise ConfigError("--x1/--x2: points differ in dimension")
    e, g, _ = _pipeline(args, x1.size)
    if e.spec.input_dim != x1.size:
        raise ConfigError(f"--x1: {x1.size}-dimensional point, encoder expects {e.spec.input_dim}")
    if getattr(e.spec, "condition_dim", 0):
        raise ConfigError("interpolate: conditional models are not supported")
    codes = e(np.stack([x1, x2])).data
    ts = np.linspace(0.0, 1.0, args.steps)
    try:
        path = np.array([slerp(codes[0], codes[1], t) for t in ts])
    except DomainError as exc:
        log.error("%s", exc)
        print(f"interpolate: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    xs = g(path).data
    out = args.out or "interpolation.csv"
    M, D = path.shape[1], xs.shape[1]
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["t"] + [f"z{j}" for j in range(M)] + [f"x{j}" for j in range(D)]) + "\n")
        for t, z, x in zip(ts, path, xs):
            fh.write(",".join(repr(float(v)) for v in (t, *z, *x)) + "\n")
    log.info("wrote %d interpolation steps to %s", args.steps, out)
    return EXIT_OK


def cmd_eval_divergence(args) -> int:
    try:
        ds = datagen.load_csv(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--input: {exc}") from None
    x = ds.samples
    n, M = x.shape
    try:
        if args.method == "knn":
            est = knn_kl_vs_unit_gaussian(x, args.k)
        else:
            if args.prior == "sphere" and M < 2:
                raise ValueError("sphere reference needs M >= 2")
            est = prior_divergence(Tensor(x), args.prior, args.method)
    except ValueError as exc:
        raise ConfigError(f"--input: {exc}") from None
    res = {"method": est.method, "value": est.value, "n": int(n), "M": int(M)}
    if est.k is not None:
        res["k"] = est.k
    print(json.dumps(res))
    return EXIT_OK


def cmd_verify_theory(args) -> int:
    if args.max_K < 2 or args.max_K > 4:
        raise ConfigError("--max-K: must be between 2 and 4")
    if args.trials < 0:
        raise ConfigError("--trials: must be >= 0")
    div = theory.negated_tv if args.faulty_divergence else None
    seed = 0 if args.seed is None else args.seed
    reports = theory.run_certification(args.max_K, args.trials, seed, divergence=div)
    bad = [r for r in reports if r.violations]
    quiet = os.environ.get("AGE_LOG", "info").strip().lower() == "quiet"
    for r in reports:
        if not quiet or r.violations:
            print(r.text())
    certs = [r.to_json() for r in reports]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificates.json").write_text(json.dumps(certs, indent=1) + "\n", encoding="utf-8")
    else:
        print(json.dumps(certs))
    print(f"verify-theory: {len(reports)} checks, {len(bad)} with violations", file=sys.stderr)
    return EXIT_VIOLATION if bad else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", help="output directory (train, verify-theory) or file")

    p = argparse.ArgumentParser(prog="agelab", description="Adversarial generator-encoder laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train an encoder/generator pair")
    t.add_argument("--iters", type=int, help="overrides train.iters")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", parents=[common], help="draw samples from a generator checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--label", type=int)
    s.add_argument("--prior", choices=["sphere", "gaussian"])
    s.add_argument("--raster", type=int, nargs=2, metavar=("H", "W"), help="write a P6 grid instead of CSV")
    s.add_argument("--grid-cols", type=int, default=8)
    s.set_defaults(func=cmd_sample)

    for name, func, helptext in (("reconstruct", cmd_reconstruct, "encode then decode a CSV dataset"),
                                 ("interpolate", cmd_interpolate, "decode a slerp path between two points")):
        r = sub.add_parser(name, parents=[common], help=helptext)
        r.add_argument("--encoder")
        r.add_argument("--generator")
        r.add_argument("--identity-stub", action="store_true", help=argparse.SUPPRESS)
        r.add_argument("--sphere-stub", action="store_true", help=argparse.SUPPRESS)
        if name == "reconstruct":
            r.add_argument("--data", required=True)
        else:
            r.add_argument("--x1", required=True)
            r.add_argument("--x2", required=True)
            r.add_argument("--steps", type=int, default=11)
        r.set_defaults(func=func)

    d = sub.add_parser("eval-divergence", parents=[common], help="divergence of CSV rows from the prior")
    d.add_argument("--input", required=True)
    d.add_argument("--method", choices=["parametric-kl", "paper-normalization", "knn"], default="parametric-kl")
    d.add_argument("--k", type=int, default=5)
    d.add_argument("--prior", choices=["gaussian", "sphere"], default="gaussian")
    d.set_defaults(func=cmd_eval_divergence)

    v = sub.add_parser("verify-theory", parents=[common], help="exhaustive finite-space theorem checks")
    v.add_argument("--max-K", type=int, default=3)
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--faulty-divergence", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify_theory)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
