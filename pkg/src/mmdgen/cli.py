"""Batch orchestration: config parsing, pipelines, and CSV/manifest output.

Subcommands
    train        fit a generator to copula data or an ingested CSV
    sample       draw pseudo-random or quasi-random samples from a checkpoint
    estimate     run a risk functional over a sample-size grid
    evaluate     validation-discrepancy replicates (and optional copula
                 goodness-of-fit statistic) for a checkpoint
    sobol-study  tail-coverage counts of shifted low-discrepancy points

Configs are JSON with an explicit schema_version.  Every run needs a seed
(config key or --seed); all randomness derives from it through named
substreams, so re-running a config reproduces identical artifacts, which
the emitted manifest records via the config hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .copulas import CopulaSpec, pseudo_obs, sample
from .estimators import (
    LognormalMargins,
    NormalMargins,
    ScaledTMargins,
    acvm,
    convergence_rate,
    equidistant_sigmas,
    raw_linear_fit,
    run_estimator,
)
from .nn import MlpArchitecture, forward, init_model
from .rng import substream
from .sobol import SobolStream, qrs_from_model, tail_count_study
from .trainer import TrainConfig, ValidationScorer, train
from .bandwidth import BandwidthPolicy

SCHEMA_VERSION = 1
COMMANDS = ("train", "sample", "estimate", "evaluate", "sobol-study")


def _fmt(x) -> str:
    """Stable decimal cell formatting: repr round-trips float64 exactly."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def ingest_csv(path) -> np.ndarray:
    """Read a numeric CSV with a header row into an n x d matrix.

    Values are expected on the copula scale; anything outside the open
    unit interval triggers a componentwise rank transform with a warning
    (raw residuals were supplied).
    """
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    body = rows[1:]  # first row is the mandatory header
    if len(body) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    width = len(rows[0])
    data = []
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row on line {i}")
        try:
            data.append([float(cell) for cell in row])
        except ValueError:
            raise ValueError(f"{path}: non-numeric cell on line {i}") from None
    X = np.asarray(data, dtype=np.float64)
    if np.any(X <= 0.0) or np.any(X >= 1.0):
        warnings.warn(f"{path}: values outside (0,1); applying the rank transform")
        X = pseudo_obs(X)
    return X


def _require(cfg: dict, key: str) -> dict:
    if key not in cfg:
        raise ValueError(f"config is missing the {key!r} section")
    return cfg[key]


def _resolve_data(cfg: dict, seed: int) -> np.ndarray:
    data = _require(cfg, "data")
    if "csv" in data:
        return ingest_csv(data["csv"])
    if "copula" in data:
        spec = _copula_spec(data["copula"])
        n = int(data.get("n", 0))
        if n < 2:
            raise ValueError("data.n must be >= 2 for copula-generated data")
        return sample(spec, n, substream(seed, "data"))
    raise ValueError("data section needs either 'csv' or 'copula'")


def _copula_spec(d: dict) -> CopulaSpec:
    kwargs = {}
    if "tau" in d:
        kwargs["tau"] = float(d["tau"])
    if "theta" in d:
        kwargs["theta_"] = float(d["theta"])
    if "rho" in d:
        kwargs["rho_"] = float(d["rho"])
    return CopulaSpec(family=d["family"], dim=int(d["dim"]), df=int(d.get("df", 4)), **kwargs)


def _train_config(cfg: dict, seed: int) -> tuple[TrainConfig, dict]:
    tr = _require(cfg, "train")
    policy_kwargs = {}
    if "kernel_counts" in tr:
        policy_kwargs["kernel_counts"] = tuple(int(c) for c in tr["kernel_counts"])
    if "pair_cap" in tr:
        policy_kwargs["pair_cap"] = int(tr["pair_cap"])
    fixed = tr.get("fixed_bandwidths")
    tc = TrainConfig(
        n_bat=int(tr["n_bat"]),
        n_mepo=int(tr["n_mepo"]),
        delta_trn=float(tr.get("delta_trn", 1e-3)),
        delta_val=float(tr.get("delta_val", 1e-3)),
        mode=tr.get("mode", "adaptive"),
        fixed_bandwidths=tuple(float(h) for h in fixed) if fixed else None,
        fixed_kernel_count=(
            int(tr["fixed_kernel_count"]) if tr.get("fixed_kernel_count") is not None else None
        ),
        policy=BandwidthPolicy(**policy_kwargs),
        learning_rate0=float(tr.get("learning_rate", 1e-3)),
        n_val=int(tr["n_val"]) if tr.get("n_val") is not None else None,
        n_rep=int(tr.get("n_rep", 1)),
        early_stopping=bool(tr.get("early_stopping", True)),
        seed=seed,
    )
    return tc, tr


def _run_train(cfg: dict, seed: int, outdir: Path, threads: int) -> list[str]:
    X = _resolve_data(cfg, seed)
    n, d = X.shape
    tc, tr = _train_config(cfg, seed)
    hidden = tuple(int(h) for h in tr.get("hidden_sizes", (300,)))
    d_pri = int(tr["d_pri"]) if tr.get("d_pri") is not None else d
    arch = MlpArchitecture(input_dim=d_pri, hidden_sizes=hidden, output_dim=d)
    model = init_model(arch, substream(seed, "init"))

    report = train(X, tc, model)

    _write_csv(
        outdir / "history.csv",
        ("epoch", "loss_train", "loss_val", "kernel_count", "learning_rate", "patience",
         "updated", "stopped"),
        (
            (r.epoch, r.loss_train, r.loss_val, r.kernel_count, r.learning_rate, r.patience,
             r.updated, r.stopped)
            for r in report.records
        ),
    )
    ckpt_io.save(ckpt_io.Checkpoint.from_report(report), outdir / "checkpoint.txt")
    return ["history.csv", "checkpoint.txt"]


def _load_model(section: dict):
    path = section.get("checkpoint")
    if not path:
        raise ValueError("a checkpoint path is required here")
    return ckpt_io.load(path).to_model()


def _run_sample(cfg: dict, seed: int, outdir: Path, threads: int) -> list[str]:
    sc = _require(cfg, "sample")
    model = _load_model(sc)
    n = int(sc["n"])
    generator = sc.get("generator", "prs")
    d_pri = model.arch.input_dim
    if generator == "prs":
        Z = substream(seed, "sample-prior").standard_normal((n, d_pri))
        U = pseudo_obs(forward(model, Z)[0])
    elif generator == "qrs":
        stream = SobolStream.randomized(d_pri, substream(seed, "sobol-shift"))
        U = qrs_from_model(model, stream, n)
    else:
        raise ValueError("sample.generator must be 'prs' or 'qrs'")
    header = [f"u{j + 1}" for j in range(U.shape[1])]
    _write_csv(outdir / "samples.csv", header, U.tolist())
    return ["samples.csv"]


def _build_margins(m: dict, d: int):
    kind = m.get("kind", "normal")
    if kind == "normal":
        return NormalMargins(d)
    if kind == "lognormal":
        s0 = m.get("s0", 1.0)
        s0 = [float(s0)] * d if np.isscalar(s0) else [float(x) for x in s0]
        sig = m.get("sigma", {"equidistant": [0.01, 0.025]})
        if isinstance(sig, dict):
            lo, hi = sig["equidistant"]
            sigma = equidistant_sigmas(d, float(lo), float(hi))
        elif np.isscalar(sig):
            sigma = [float(sig)] * d
        else:
            sigma = [float(x) for x in sig]
        return LognormalMargins(
            s0=tuple(s0),
            sigma=tuple(sigma),
            rate=float(m.get("rate", 0.01)),
            horizon=float(m.get("horizon", 1.0)),
        )
    if kind == "scaled-t":
        def vec(key, default):
            v = m.get(key, default)
            return tuple([float(v)] * d) if np.isscalar(v) else tuple(float(x) for x in v)
        return ScaledTMargins(df=vec("df", 4.0), loc=vec("loc", 0.0), scale=vec("scale", 1.0))
    raise ValueError("margins.kind must be 'normal', 'lognormal', or 'scaled-t'")


def _grid_from(section: dict) -> tuple[int, ...]:
    grid = section.get("grid")
    if isinstance(grid, dict):
        lo, hi = float(grid["log2_from"]), float(grid["log2_to"])
        step = float(grid.get("log2_step", 1.0))
        exps = np.arange(lo, hi + step / 2, step)
        return tuple(int(round(2.0**e)) for e in exps)
    if grid:
        return tuple(int(n) for n in grid)
    raise ValueError("estimate.grid must be a list of sizes or a log2 range")


def _run_estimate(cfg: dict, seed: int, outdir: Path, threads: int) -> list[str]:
    est = _require(cfg, "estimate")
    functional = est["functional"]
    generator = est["generator"]
    spec = model = None
    if generator.startswith("copula"):
        spec = _copula_spec(_require(cfg, "data")["copula"])
        d = spec.dim
    else:
        model = _load_model(est)
        d = model.arch.output_dim
    margins = _build_margins(est.get("margins", {}), d)
    strike = est.get("strike")
    if strike is None and est.get("strike_factor") is not None:
        if not isinstance(margins, LognormalMargins):
            raise ValueError("strike_factor needs lognormal margins")
        strike = float(est["strike_factor"]) * float(np.mean(margins.s0))
    grid = _grid_from(est)
    B = int(est.get("B", 25))

    kwargs = dict(
        spec=spec,
        model=model,
        margins=margins,
        alpha=float(est.get("alpha", 0.99)),
        component=int(est.get("component", 0)),
        strike=float(strike) if strike is not None else None,
    )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            run = run_estimator(
                functional, generator, grid, B, seed, map_fn=ex.map, **kwargs
            )
    else:
        run = run_estimator(functional, generator, grid, B, seed, **kwargs)

    _write_csv(
        outdir / "estimates.csv",
        ("functional", "generator", "n_gen", "replicate", "estimate"),
        (
            (functional, generator, n, b, run.estimates[gi, b])
            for gi, n in enumerate(grid)
            for b in range(B)
        ),
    )
    _write_csv(
        outdir / "summary.csv",
        ("n_gen", "mean", "std", "B"),
        ((n, run.means[gi], run.stds[gi], B) for gi, n in enumerate(grid)),
    )
    raw_slope, raw_intercept = raw_linear_fit(run)
    _write_json(
        outdir / "rates.json",
        {
            "log2_slope": convergence_rate(run),
            "raw_slope": raw_slope,
            "raw_intercept": raw_intercept,
        },
    )
    return ["estimates.csv", "summary.csv", "rates.json"]


def _run_evaluate(cfg: dict, seed: int, outdir: Path, threads: int) -> list[str]:
    ev = _require(cfg, "evaluate")
    model = _load_model(ev)
    X = _resolve_data(cfg, seed)
    n_val = int(ev.get("n_val", min(len(X), 5000)))
    if n_val < len(X):
        rows = substream(seed, "val-subset").choice(len(X), size=n_val, replace=False)
        X_val = X[rows]
    else:
        X_val = X
    n_rep = int(ev.get("n_rep", 25))
    vals = ValidationScorer(X_val).score_each(model, n_rep, substream(seed, "val-prior", 0))
    _write_csv(
        outdir / "valmmd.csv",
        ("replicate", "validation_mmd"),
        ((k, v) for k, v in enumerate(vals)),
    )
    outputs = ["valmmd.csv"]

    if "acvm" in ev:
        ac = ev["acvm"]
        n_gen = int(ac.get("n_gen", len(X_val)))
        ac_rep = int(ac.get("n_rep", 25))
        gen = ac.get("generator", "prs")
        d_pri = model.arch.input_dim

        def sample_fn(k: int):
            if gen == "qrs":
                stream = SobolStream.randomized(d_pri, substream(seed, "acvm-shift", k))
                return qrs_from_model(model, stream, n_gen)
            Z = substream(seed, "acvm-prior", k).standard_normal((n_gen, d_pri))
            return pseudo_obs(forward(model, Z)[0])

        value = acvm(pseudo_obs(X_val), sample_fn, n_gen, ac_rep)
        _write_json(outdir / "acvm.json", {"acvm": value, "n_gen": n_gen, "n_rep": ac_rep})
        outputs.append("acvm.json")
    return outputs


def _run_sobol_study(cfg: dict, seed: int, outdir: Path, threads: int) -> list[str]:
    st = cfg.get("sobol_study", cfg.get("sobol-study"))
    if st is None:
        raise ValueError("config is missing the 'sobol_study' section")
    dims = range(int(st["d_from"]), int(st["d_to"]) + 1)
    results = tail_count_study(
        dims,
        n_tail=int(st.get("n_tail", 1000)),
        B=int(st.get("B", 500)),
        rng=substream(seed, "sobol-shift"),
    )
    _write_csv(
        outdir / "tailcounts.csv",
        ("d", "n_gen", "n_tail", "threshold", "replicate", "count"),
        (
            (r.dim, r.n_gen, r.n_tail, r.threshold, b, int(c))
            for r in results
            for b, c in enumerate(r.counts)
        ),
    )
    return ["tailcounts.csv"]


_RUNNERS = {
    "train": _run_train,
    "sample": _run_sample,
    "estimate": _run_estimate,
    "evaluate": _run_evaluate,
    "sobol-study": _run_sobol_study,
}


def _write_manifest(outdir, cfg_bytes, command, seed, threads, outputs, error=None) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": command,
        "config_sha256": hashlib.sha256(cfg_bytes).hexdigest(),
        "seed": int(seed),
        "threads": int(threads),
        "outputs": sorted(outputs),
        "status": "ok" if error is None else "failed",
    }
    if error is not None:
        manifest["error"] = error
    _write_json(Path(outdir) / "manifest.json", manifest)


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="mmdgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for replications")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv)
    try:
        cfg_bytes = Path(args.config).read_bytes()
        cfg = json.loads(cfg_bytes)
        if int(cfg.get("schema_version", -1)) != SCHEMA_VERSION:
            raise ValueError(f"config schema_version must be {SCHEMA_VERSION}")
        declared = cfg.get("experiment")
        if declared is not None and declared != args.command:
            raise ValueError(
                f"config declares experiment {declared!r} but subcommand is {args.command!r}"
            )
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise ValueError("a seed is required (config key 'seed' or --seed)")
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    outputs: list[str] = []
    try:
        outputs = _RUNNERS[args.command](cfg, int(seed), outdir, args.threads)
    except Exception as e:
        _write_manifest(outdir, cfg_bytes, args.command, seed, args.threads, outputs, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return 1
    _write_manifest(outdir, cfg_bytes, args.command, seed, args.threads, outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
