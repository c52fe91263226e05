"""Config-driven experiment runner.

Subcommands: ``run`` (train + evaluate per seed), ``gen`` (emit a dataset
CSV), ``verify`` (standalone theory-check suite), ``sweep`` (sample-size
grid), ``report`` (re-aggregate existing per-seed metrics). Configs are YAML
(JSON is accepted since it parses as YAML); all defaults are resolved and
echoed into the report so outputs are self-describing.

Output layout: ``<out>/report.json``, ``<out>/metrics.csv``,
``<out>/seed_<k>/trace.csv``, ``<out>/seed_<k>/coverage.csv`` and
``<out>/sweep.csv``. CSV cells are written with ``repr`` so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import datagen, evaluation, losses, models, training
from .core import POSITIVE, ScoredHypothesis

SCHEMA_VERSION = 1
ENV_JOBS = "ABSTAIN_LAB_JOBS"


class ConfigError(ValueError):
    """Configuration problem, reported with the offending field path."""


# ---------------------------------------------------------------------------
# Config loading and resolution
# ---------------------------------------------------------------------------

_GRID_DEFAULT = {"lo": 0.0, "hi": 1.0, "steps": 101, "orientation": "both"}

_ISA_DEFAULTS = {
    "pretrain_epochs": 10,
    "total_epochs": 40,
    "selector_update_period": 1,
    "z_window": 10,
    "g_window": 10,
    "selector_variant": "cross_entropy",
    "model": {"kind": "linear", "hidden": []},
    "predictor": {"learning_rate": 0.5, "batch_size": 256, "weight_decay": 0.0},
    "selector": {"learning_rate": 0.5, "batch_size": 256, "weight_decay": 0.0},
}

_VERIFY_DEFAULTS = {
    "specs": 200,
    "max_atoms": 10,
    "seed": 0,
    "demo_beta": 1.2,
    "demo_lambda": 0.3,
}


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return resolve_config(raw)


def resolve_config(raw: dict) -> dict:
    """Validate and fill defaults; returns a fully resolved config dict."""
    cfg: dict = {}

    process = dict(raw.get("process") or {})
    kind = process.get("kind")
    _require(kind in ("discrete", "gaussian_mixture", "lecam", "csv"), "process.kind",
             "must be one of discrete|gaussian_mixture|lecam|csv")
    resolved_process = {"kind": kind}
    if kind != "csv":
        n = process.get("n", 2000)
        _require(isinstance(n, int) and n >= 1, "process.n", "must be a positive integer")
        resolved_process["n"] = n
    if kind == "discrete":
        resolved_process["atoms"] = process.get("atoms", 100)
        resolved_process["f_star_threshold"] = float(process.get("f_star_threshold", 0.45))
        _require(resolved_process["atoms"] >= 2, "process.atoms", "need at least 2 atoms")
    elif kind == "gaussian_mixture":
        resolved_process["centers_informative"] = process.get(
            "centers_informative", [[-2.0, -1.5], [-2.0, 1.5]])
        resolved_process["centers_uninformative"] = process.get(
            "centers_uninformative", [[2.0, -1.5], [2.0, 1.5]])
        resolved_process["stddev"] = float(process.get("stddev", 0.5))
        resolved_process["boundary_w"] = process.get("boundary_w", [0.0, 1.0])
        resolved_process["boundary_b"] = float(process.get("boundary_b", 0.0))
    elif kind == "lecam":
        resolved_process["d"] = int(process.get("d", 6))
        resolved_process["epsilon"] = float(process.get("epsilon", 0.25))
        resolved_process["sigma_seed"] = int(process.get("sigma_seed", 0))
    elif kind == "csv":
        _require("path" in process, "process.path", "csv process needs a file path")
        resolved_process["path"] = str(process["path"])
    cfg["process"] = resolved_process

    noise = dict(raw.get("noise") or {})
    alpha = float(noise.get("alpha", 0.5))
    _require(0.0 < alpha < 1.0, "noise.alpha", "must be in (0, 1)")
    if "tau_i" in noise or "tau_u" in noise:
        _require("tau_i" in noise and "tau_u" in noise, "noise", "tau_i and tau_u go together")
        try:
            lambda_bar = datagen.lambda_bar_from_taus(float(noise["tau_i"]), float(noise["tau_u"]))
        except ValueError as exc:
            raise ConfigError(f"noise.tau_i/tau_u: {exc}") from None
        cfg["noise"] = {"alpha": alpha, "lambda_bar": lambda_bar,
                        "tau_i": float(noise["tau_i"]), "tau_u": float(noise["tau_u"])}
    else:
        lambda_bar = float(noise.get("lambda_bar", 0.5))
        _require(0.0 < lambda_bar <= 0.5, "noise.lambda_bar", "must be in (0, 0.5]")
        cfg["noise"] = {"alpha": alpha, "lambda_bar": lambda_bar}

    method = dict(raw.get("method") or {})
    mkind = method.get("kind", "alternating")
    _require(mkind in ("erm", "alternating", "isa", "confidence_baseline"), "method.kind",
             "must be one of erm|alternating|isa|confidence_baseline")
    beta = float(method.get("beta", 3.0))
    _require(beta > 0, "method.beta", "must be positive")
    resolved_method = {"kind": mkind, "beta": beta, "rounds": int(method.get("rounds", 5))}
    _require(resolved_method["rounds"] >= 1, "method.rounds", "must be at least 1")
    for grid_name in ("classifier_grid", "selector_grid"):
        grid = dict(_GRID_DEFAULT)
        grid.update(method.get(grid_name) or {})
        _require(grid["steps"] >= 1, f"method.{grid_name}.steps", "must be at least 1")
        _require(grid["lo"] < grid["hi"], f"method.{grid_name}.lo", "must be below hi")
        resolved_method[grid_name] = grid
    isa = json.loads(json.dumps(_ISA_DEFAULTS))  # deep copy
    for key, value in (method.get("isa") or {}).items():
        if isinstance(value, dict) and key in isa:
            isa[key].update(value)
        else:
            isa[key] = value
    _require(isa["pretrain_epochs"] < isa["total_epochs"], "method.isa.pretrain_epochs",
             "must be below total_epochs")
    resolved_method["isa"] = isa
    cfg["method"] = resolved_method

    ev = dict(raw.get("eval") or {})
    seeds = ev.get("seeds", [0, 1, 2])
    _require(isinstance(seeds, list) and len(seeds) > 0, "eval.seeds", "must be a nonempty list")
    coverage_grid = [float(c) for c in ev.get("coverage_grid", [0.5, 1.0])]
    _require(all(0.0 < c <= 1.0 for c in coverage_grid), "eval.coverage_grid",
             "coverages must be in (0, 1]")
    cfg["eval"] = {
        "seeds": [int(s) for s in seeds],
        "coverage_grid": coverage_grid,
        "eval_n": ev.get("eval_n"),
    }

    sweep = dict(raw.get("sweep") or {})
    cfg["sweep"] = {
        "n_grid": [int(v) for v in sweep.get("n_grid", [125, 250, 500, 1000, 2000])],
        "rounds": int(sweep.get("rounds", 1)),
    }

    verify = dict(_VERIFY_DEFAULTS)
    verify.update(raw.get("verify") or {})
    cfg["verify"] = verify

    output = raw.get("output", "out")
    _require(isinstance(output, str) and output, "output", "must be a directory path")
    cfg["output"] = output
    return cfg


# ---------------------------------------------------------------------------
# Process/model construction from a resolved config
# ---------------------------------------------------------------------------


def build_process(cfg: dict):
    """Returns (ProcessSpec or SampleBatch, DiscreteSpec or None)."""
    pc, noise = cfg["process"], cfg["noise"]
    if pc["kind"] == "discrete":
        spec = datagen.make_threshold_discrete_spec(
            n_atoms=pc["atoms"],
            alpha=noise["alpha"],
            lambda_bar=noise["lambda_bar"],
            f_star_threshold=pc["f_star_threshold"],
        )
        return spec.to_process_spec(), spec
    if pc["kind"] == "gaussian_mixture":
        process = datagen.make_gaussian_mixture_spec(
            centers_informative=pc["centers_informative"],
            centers_uninformative=pc["centers_uninformative"],
            stddev=pc["stddev"],
            alpha=noise["alpha"],
            lambda_const=noise["lambda_bar"],
            boundary=(np.asarray(pc["boundary_w"], dtype=float), pc["boundary_b"]),
        )
        return process, None
    if pc["kind"] == "lecam":
        params = datagen.LeCamSpec(
            d=pc["d"],
            alpha=noise["alpha"],
            lambda_bar=noise["lambda_bar"],
            epsilon=pc["epsilon"],
        )
        return datagen.make_lecam_spec(params, seed=pc["sigma_seed"]), None
    samples = datagen.load_feature_csv(pc["path"])
    return datagen.batch_from_samples(samples), None


def _grid_class(grid: dict) -> models.FiniteClass:
    return models.enumerate_threshold_selectors(
        grid["lo"], grid["hi"], grid["steps"], grid["orientation"]
    )


def _build_scorer(model_cfg: dict, dim: int, seed: int):
    if model_cfg["kind"] == "linear":
        return models.zero_linear_model(dim, link="sigmoid")
    if model_cfg["kind"] == "mlp":
        dims = [dim] + list(model_cfg.get("hidden", [8])) + [1]
        return models.init_mlp(dims, seed)
    raise ConfigError(f"method.isa.model.kind: unknown model kind {model_cfg['kind']!r}")


def _train_cfg(section: dict, total_epochs: int, seed: int) -> models.TrainConfig:
    return models.TrainConfig(
        learning_rate=section["learning_rate"],
        epochs=total_epochs,
        batch_size=section.get("batch_size"),
        weight_decay=section.get("weight_decay", 0.0),
        seed=seed,
    )


def _confidence_selector(f_hat: ScoredHypothesis) -> ScoredHypothesis:
    """Selector scoring by rescaled predictor confidence max(p, 1-p)."""

    def _score(x):
        p = f_hat.scores(x)
        return 2.0 * (np.maximum(p, 1.0 - p) - 0.5)

    return ScoredHypothesis(role="selector", score=_score, meta={"baseline": "confidence"})


# ---------------------------------------------------------------------------
# Per-seed execution
# ---------------------------------------------------------------------------


def run_seed(cfg: dict, seed: int) -> dict:
    """Train and evaluate one seed; returns metrics plus trace/coverage rows."""
    process, spec = build_process(cfg)
    method = cfg["method"]
    if isinstance(process, datagen.SampleBatch):
        batch = process
    else:
        batch = datagen.sample_process(process, cfg["process"]["n"], seed)

    if method["kind"] in ("erm", "alternating"):
        if batch.dim != 1:
            raise ConfigError("method.kind: finite-class methods need 1-D features")
        class_f = _grid_class(method["classifier_grid"])
        class_g = _grid_class(method["selector_grid"])
        f_hat = training.erm_classifier(batch, class_f)
        if method["kind"] == "erm":
            g_hat = training.erm_selector(batch, f_hat, class_g, method["beta"])
            trace = training.TrainTrace()
        else:
            f_hat, g_hat, trace = training.alternate_minimize(
                batch, class_f, class_g, method["beta"], method["rounds"], f_init=f_hat
            )
    elif method["kind"] == "isa":
        isa_cfg = method["isa"]
        predictor = _build_scorer(isa_cfg["model"], batch.dim, seed * 7 + 1)
        selector = _build_scorer(isa_cfg["model"], batch.dim, seed * 7 + 2)
        cfg_obj = training.IsaConfig(
            beta=method["beta"],
            pretrain_epochs=isa_cfg["pretrain_epochs"],
            total_epochs=isa_cfg["total_epochs"],
            selector_update_period=isa_cfg["selector_update_period"],
            z_window=isa_cfg["z_window"],
            g_window=isa_cfg["g_window"],
            selector_variant=isa_cfg["selector_variant"],
            predictor_cfg=_train_cfg(isa_cfg["predictor"], isa_cfg["total_epochs"], seed * 7 + 3),
            selector_cfg=_train_cfg(isa_cfg["selector"], isa_cfg["total_epochs"], seed * 7 + 4),
        )
        f_hat, g_hat, trace = training.isa_train(batch, predictor, selector, cfg_obj)
    else:  # confidence_baseline
        isa_cfg = method["isa"]
        predictor = _build_scorer(isa_cfg["model"], batch.dim, seed * 7 + 1)
        pcfg = _train_cfg(isa_cfg["predictor"], isa_cfg["total_epochs"], seed * 7 + 3)
        f_hat = training._fit_parametric_predictor(batch, predictor, pcfg)
        g_hat = _confidence_selector(f_hat)
        trace = training.TrainTrace()

    eval_cfg = cfg["eval"]
    if eval_cfg["eval_n"] and not isinstance(process, datagen.SampleBatch):
        eval_batch = datagen.sample_process(process, int(eval_cfg["eval_n"]), seed + 10_000)
    else:
        eval_batch = batch

    scores = g_hat.scores(eval_batch.x)
    metrics: dict = {"seed": seed, "n": len(batch)}
    if eval_batch.informative is not None and eval_batch.informative.any():
        metrics["ap"] = evaluation.average_precision(scores, eval_batch.informative.astype(int))
        metrics["disagreement"] = evaluation.disagreement_mass(g_hat, eval_batch)
    curve = evaluation.coverage_curve(f_hat, g_hat, eval_batch, eval_cfg["coverage_grid"])
    for point in curve.points:
        metrics[f"sr_at_{point.coverage:g}"] = point.selective_risk
    metrics["coverage_at_half"] = float(np.mean(scores > 0.5))

    theory = []
    if spec is not None and losses.beta_interval(spec.lambda_bar).contains(method["beta"]):
        check = evaluation.margin_bound_check(spec, g_hat, method["beta"], instance=f"seed {seed}")
        theory.append(check.__dict__)

    return {
        "seed": seed,
        "metrics": metrics,
        "theory_checks": theory,
        "trace_rows": [row.__dict__ for row in trace.rows],
        "coverage_rows": [p.__dict__ for p in curve.points],
    }


def _run_seed_star(args) -> dict:
    return run_seed(*args)


# ---------------------------------------------------------------------------
# CSV/report writers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if not np.isfinite(v):
            raise ValueError("refusing to write a non-finite cell")
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in header])


def _aggregate(per_seed: list) -> dict:
    keys = sorted({k for row in per_seed for k in row if k != "seed"})
    agg = {}
    for key in keys:
        values = [row[key] for row in per_seed if key in row and row[key] is not None]
        if values:
            arr = np.asarray(values, dtype=float)
            agg[key] = {"mean": float(arr.mean()), "sd": float(arr.std()), "count": len(values)}
    return agg


def _write_report(outdir: Path, cfg: dict, per_seed: list, theory: list, wall: float, artifacts: list) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "per_seed": per_seed,
        "aggregates": _aggregate(per_seed),
        "theory_checks": theory,
        "wall_clock_sec": wall,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(cfg: dict, jobs: int) -> int:
    start = time.monotonic()
    outdir = Path(cfg["output"])
    seeds = cfg["eval"]["seeds"]
    tasks = [(cfg, seed) for seed in seeds]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_star, tasks))
    else:
        results = [run_seed(cfg, seed) for seed in seeds]
    results.sort(key=lambda r: r["seed"])

    artifacts = []
    per_seed = []
    theory = []
    for res in results:
        seed = res["seed"]
        per_seed.append(res["metrics"])
        theory.extend(res["theory_checks"])
        seed_dir = outdir / f"seed_{seed}"
        trace_path = seed_dir / "trace.csv"
        _write_csv(
            trace_path,
            ["epoch", "predictor_loss", "selector_loss", "selector_risk", "ap", "coverage"],
            res["trace_rows"],
        )
        artifacts.append(trace_path)
        cov_path = seed_dir / "coverage.csv"
        _write_csv(cov_path, ["coverage", "selective_risk", "threshold"], res["coverage_rows"])
        artifacts.append(cov_path)

    metric_cols = ["seed"] + sorted({k for row in per_seed for k in row} - {"seed"})
    metrics_path = outdir / "metrics.csv"
    _write_csv(metrics_path, metric_cols, per_seed)
    artifacts.append(metrics_path)

    _write_report(outdir, cfg, per_seed, theory, time.monotonic() - start, artifacts)
    failed = [t for t in theory if not t["passed"]]
    for t in theory:
        print(f"theory-check {t['instance']}: {'PASS' if t['passed'] else 'FAIL'}")
    print(f"run complete: {len(per_seed)} seeds -> {outdir}")
    return 1 if failed else 0


def cmd_gen(cfg: dict) -> int:
    process, _ = build_process(cfg)
    if isinstance(process, datagen.SampleBatch):
        batch = process
    else:
        batch = datagen.sample_process(process, cfg["process"]["n"], cfg["eval"]["seeds"][0])
    path = Path(cfg["output"]) / "dataset.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    datagen.save_feature_csv(path, batch)
    print(f"wrote {len(batch)} samples -> {path}")
    return 0


def cmd_verify(cfg: dict) -> int:
    v = cfg["verify"]
    rng = np.random.default_rng(v["seed"])
    checks: list[tuple[str, bool]] = []

    worst_slack = np.inf
    all_pass = True
    for _ in range(int(v["specs"])):
        spec = datagen.random_discrete_spec(rng, max_atoms=int(v["max_atoms"]))
        interval = losses.beta_interval(spec.lambda_bar)
        beta = float(rng.uniform(interval.lo, interval.hi))
        result = evaluation.exhaustive_margin_check(spec, beta)
        worst_slack = min(worst_slack, result.risk_gap - result.margin_lower_bound)
        all_pass &= result.passed
    checks.append((f"margin+admissibility on {v['specs']} random specs "
                   f"(worst slack {worst_slack:.3e})", all_pass))

    # below-interval failure demonstration: select-all must beat the oracle
    demo_spec = datagen.make_two_atom_spec(lam=float(v["demo_lambda"]))
    select_all = np.array([True, True])
    demo_beta = float(v["demo_beta"])
    risk_all = losses.selector_risk_population_batch(select_all, demo_spec, demo_beta)[0]
    risk_star = losses.selector_risk_population(demo_spec.g_star, demo_spec, demo_beta)
    interval = losses.beta_interval(demo_spec.lambda_bar)
    demonstrated = demo_beta < interval.lo and risk_all < risk_star
    checks.append((f"inadmissible beta {demo_beta} lets select-all beat the oracle", demonstrated))

    ok = True
    for name, passed in checks:
        print(f"verify {name}: {'PASS' if passed else 'FAIL'}")
        ok &= passed
    return 0 if ok else 1


def cmd_sweep(cfg: dict) -> int:
    start = time.monotonic()
    _, spec = build_process(cfg)
    if spec is None:
        raise ConfigError("process.kind: sweep needs a discrete process")
    method = cfg["method"]
    class_f = _grid_class(method["classifier_grid"])
    class_g = _grid_class(method["selector_grid"])
    rows = evaluation.sample_complexity_sweep(
        spec,
        class_f,
        class_g,
        method["beta"],
        cfg["sweep"]["n_grid"],
        cfg["eval"]["seeds"],
        rounds=cfg["sweep"]["rounds"],
    )
    outdir = Path(cfg["output"])
    sweep_path = outdir / "sweep.csv"
    header = ["n", "lambda_bar", "alpha", "beta", "seed", "disagreement", "ap",
              "sr_at_alpha", "sr_full", "f_hat_cond_risk", "f_tilde_cond_risk"]
    _write_csv(sweep_path, header, [r.__dict__ for r in rows])
    agg = evaluation.aggregate_sweep(rows)
    _write_report(outdir, cfg, [dict(a) for a in agg], [], time.monotonic() - start, [sweep_path])
    for cell in agg:
        print(f"n={cell['n']}: mean disagreement {cell['mean_disagreement']:.4f} "
              f"(+-{cell['sd_disagreement']:.4f}), "
              f"mean conditional-risk gain {cell['mean_cond_risk_gain']:.4f}")
    print(f"sweep complete -> {sweep_path}")
    return 0


def cmd_report(cfg: dict) -> int:
    outdir = Path(cfg["output"])
    metrics_path = outdir / "metrics.csv"
    if not metrics_path.exists():
        print(f"no metrics.csv under {outdir}", file=sys.stderr)
        return 2
    with open(metrics_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        per_seed = []
        for row in reader:
            parsed = {}
            for key, val in row.items():
                if val == "":
                    continue
                parsed[key] = int(val) if key in ("seed", "n") else float(val)
            per_seed.append(parsed)
    _write_report(outdir, cfg, per_seed, [], 0.0, [metrics_path])
    print(f"re-aggregated {len(per_seed)} seed rows -> {outdir / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parse_seeds(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError("--seeds: must be a comma-separated list of integers") from None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="abstain-lab", description=__doc__)
    parser.add_argument("command", choices=["run", "gen", "verify", "sweep", "report"])
    parser.add_argument("--config", required=True, help="YAML/JSON experiment config")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--seeds", help="override eval.seeds, e.g. 0,1,2")
    parser.add_argument("--jobs", type=int, default=None, help="seed-level worker count")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.out:
            cfg["output"] = args.out
        if args.seeds:
            seeds = _parse_seeds(args.seeds)
            if not seeds:
                raise ConfigError("--seeds: must list at least one seed")
            cfg["eval"]["seeds"] = seeds
        jobs = args.jobs
        if jobs is None:
            jobs = int(os.environ.get(ENV_JOBS, "1"))
        if jobs < 1:
            raise ConfigError("--jobs: must be at least 1")

        if args.command == "run":
            return cmd_run(cfg, jobs)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
