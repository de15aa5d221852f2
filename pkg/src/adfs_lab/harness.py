"""Dataset ingestion, experiment orchestration, CSV emission, and the CLI.

A single JSON config file describes topology, data source, loss, algorithms,
seeds and budgets; `run_experiment` executes every (algorithm, seed) cell,
writes one CSV of `algo,seed,iter,time,subopt` rows plus a metadata sidecar
with every derived constant, and is byte-deterministic for a fixed config.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import selfcheck
from .adfs import run_adfs, run_adfs_efficient, run_ns_adfs
from .augmented import balanced_p_comm, build_augmented, build_augmented_ns, rate_branches
from .baselines import point_saga, pool_objectives, reference_optimum
from .objective import LocalObjective, LossKind, Sample
from .rng import generator
from .topology import GraphConstructionError, build_topology

__all__ = [
    "ConfigError",
    "LibsvmParseError",
    "ExperimentConfig",
    "parse_libsvm",
    "write_libsvm",
    "synth_dataset",
    "assign_node_datasets",
    "load_config",
    "run_experiment",
    "cli",
    "main",
]

ALGORITHMS = ("adfs", "adfs_efficient", "ns_adfs", "point_saga")
LOSSES = {"logistic": LossKind.LOGISTIC, "squared": LossKind.SQUARED,
          "absolute": LossKind.ABSOLUTE}


class ConfigError(ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class LibsvmParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# LibSVM text format


def parse_libsvm(path):
    """Parse `label idx:val ...` lines (1-based, strictly increasing indices).

    Returns (samples, dim) where samples is a list of (label, pairs) with
    0-based pairs.  Blank lines and `#` comments are skipped.  Malformed
    tokens raise with the line and column of the offending token.
    """
    samples = []
    dim = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0]
            if not line.strip():
                continue
            tokens = []
            col = 1
            for piece in line.split(" "):
                if piece.strip():
                    tokens.append((piece.strip(), col))
                col += len(piece) + 1
            label_tok, label_col = tokens[0]
            try:
                label = float(label_tok)
            except ValueError:
                raise LibsvmParseError(
                    f"line {lineno}, column {label_col}: bad label {label_tok!r}"
                ) from None
            pairs = []
            prev_idx = 0
            for tok, tok_col in tokens[1:]:
                if ":" not in tok:
                    raise LibsvmParseError(
                        f"line {lineno}, column {tok_col}: expected idx:value, got {tok!r}"
                    )
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmParseError(
                        f"line {lineno}, column {tok_col}: bad feature token {tok!r}"
                    ) from None
                if idx < 1:
                    raise LibsvmParseError(
                        f"line {lineno}, column {tok_col}: index {idx} must be >= 1"
                    )
                if idx <= prev_idx:
                    raise LibsvmParseError(
                        f"line {lineno}, column {tok_col}: index {idx} not increasing"
                    )
                prev_idx = idx
                pairs.append((idx - 1, val))
                dim = max(dim, idx)
            samples.append((label, pairs))
    return samples, dim


def write_libsvm(path, samples):
    """Inverse of parse_libsvm; floats are written with repr so values
    round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, pairs in samples:
            toks = [repr(float(label))]
            toks += [f"{int(i) + 1}:{repr(float(v))}" for i, v in pairs]
            fh.write(" ".join(toks) + "\n")


def _dense_from_pairs(samples, dim):
    feats = np.zeros((len(samples), dim))
    labels = np.empty(len(samples))
    for r, (label, pairs) in enumerate(samples):
        labels[r] = label
        for i, v in pairs:
            feats[r, i] = v
    return feats, labels


# ---------------------------------------------------------------------------
# synthetic data


def synth_pool(n_samples, d, seed, correlation, loss="logistic", noise=0.1,
               feature_scale=1.0):
    """Feature pool with tunable covariance plus planted-model labels.

    Covariance (1 - c) I + c d w w^T: correlation c near 0 gives isotropic
    features (trace-dominated spectrum), c near 1 concentrates the spectrum
    on one direction, which tunes the stochastic/batch condition ratio.
    """
    if not 0.0 <= correlation < 1.0:
        raise ValueError("correlation must lie in [0, 1)")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = generator("synth", seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    base = rng.normal(size=(n_samples, d))
    spike = rng.normal(size=(n_samples, 1))
    feats = np.sqrt(1.0 - correlation) * base + np.sqrt(correlation * d) * spike * w
    feats *= feature_scale
    theta = rng.normal(size=d) / np.sqrt(d)
    margins = feats @ theta + noise * rng.normal(size=n_samples)
    if loss == "logistic":
        labels = np.where(margins >= 0.0, 1.0, -1.0)
    else:
        labels = margins
    return feats, labels


def assign_node_datasets(feats, labels, n, m, seed):
    """Draw m samples per node at random from the pool; nodes may overlap."""
    if m > feats.shape[0]:
        raise ValueError(f"m={m} exceeds the pool size {feats.shape[0]}")
    rng = generator("assign", seed)
    out = []
    for _ in range(n):
        idx = rng.choice(feats.shape[0], size=m, replace=False)
        out.append((feats[idx], labels[idx]))
    return out


def synth_dataset(n, m, d, seed, correlation, loss="logistic", noise=0.1,
                  pool=None, feature_scale=1.0):
    """Per-node synthetic datasets drawn (with overlap) from one pool."""
    size = pool if pool is not None else n * m
    feats, labels = synth_pool(size, d, seed, correlation, loss, noise, feature_scale)
    return assign_node_datasets(feats, labels, n, m, seed)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    topology: dict
    loss: str
    m: int
    dataset: dict
    algorithms: list
    seeds: list
    iters: dict  # per-algorithm budgets (normalized from int or dict)
    log_every: int
    sigma: object = 1.0
    tau: float = 1.0
    p_comm: float = None
    stop_at_subopt: float = None
    out: str = "results"
    reference: dict = field(default_factory=dict)

    @property
    def loss_kind(self):
        return LOSSES[self.loss]


def _expect(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def load_config(data) -> ExperimentConfig:
    """Validate a raw dict (parsed JSON) into an ExperimentConfig.

    Every error names the offending field path.
    """
    _expect(isinstance(data, dict), "<root>", "config must be an object")
    known = {"topology", "loss", "m", "dataset", "algorithms", "seeds", "iters",
             "log_every", "sigma", "tau", "p_comm", "stop_at_subopt", "out",
             "reference"}
    for key in data:
        _expect(key in known, key, "unknown config field")

    topo = data.get("topology")
    _expect(isinstance(topo, dict) and "kind" in topo, "topology",
            'expected an object with a "kind" field')
    loss = data.get("loss")
    _expect(loss in LOSSES, "loss", f"expected one of {sorted(LOSSES)}, got {loss!r}")
    m = data.get("m")
    _expect(isinstance(m, int) and m >= 1, "m", "expected an integer >= 1")

    ds = data.get("dataset")
    _expect(isinstance(ds, dict) and ds.get("kind") in ("synthetic", "libsvm"),
            "dataset.kind", 'expected "synthetic" or "libsvm"')
    if ds["kind"] == "synthetic":
        _expect(isinstance(ds.get("d"), int) and ds["d"] >= 1, "dataset.d",
                "expected an integer >= 1")
        corr = ds.get("correlation", 0.0)
        _expect(isinstance(corr, (int, float)) and 0.0 <= corr < 1.0,
                "dataset.correlation", "expected a number in [0, 1)")
    else:
        _expect(isinstance(ds.get("path"), str), "dataset.path", "expected a file path")
    _expect(isinstance(ds.get("seed", 0), int), "dataset.seed", "expected an integer")

    algos = data.get("algorithms")
    _expect(isinstance(algos, list) and algos, "algorithms", "expected a non-empty list")
    for i, a in enumerate(algos):
        _expect(a in ALGORITHMS, f"algorithms[{i}]",
                f"expected one of {list(ALGORITHMS)}, got {a!r}")
        if a == "ns_adfs":
            _expect(loss == "absolute", f"algorithms[{i}]",
                    "ns_adfs needs the absolute loss")
        elif loss == "absolute":
            raise ConfigError(f"algorithms[{i}]",
                              f"{a} needs a smooth loss, config says absolute")

    seeds = data.get("seeds")
    _expect(isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
            "seeds", "expected a non-empty list of integers")

    log_every = data.get("log_every", 100)
    _expect(isinstance(log_every, int) and log_every >= 1, "log_every",
            "expected an integer >= 1")

    raw_iters = data.get("iters")
    iters = {}
    if isinstance(raw_iters, int):
        _expect(raw_iters >= 0, "iters", "expected >= 0")
        iters = {a: raw_iters for a in algos}
    elif isinstance(raw_iters, dict):
        for a in algos:
            _expect(a in raw_iters, f"iters.{a}", "missing per-algorithm budget")
            _expect(isinstance(raw_iters[a], int) and raw_iters[a] >= 0,
                    f"iters.{a}", "expected an integer >= 0")
            iters[a] = raw_iters[a]
    else:
        raise ConfigError("iters", "expected an integer or per-algorithm object")
    for a, it in iters.items():
        _expect(it % log_every == 0, f"iters.{a}",
                f"must be a multiple of log_every={log_every}")

    sigma = data.get("sigma", 1.0)
    if isinstance(sigma, list):
        _expect(all(isinstance(s, (int, float)) and s > 0 for s in sigma), "sigma",
                "expected positive numbers")
    else:
        _expect(isinstance(sigma, (int, float)) and sigma > 0, "sigma",
                "expected a positive number")

    tau = data.get("tau", 1.0)
    _expect(isinstance(tau, (int, float)) and tau >= 0, "tau", "expected a number >= 0")
    p_comm = data.get("p_comm")
    if p_comm is not None:
        _expect(isinstance(p_comm, (int, float)) and 0 <= p_comm < 1, "p_comm",
                "expected a number in [0, 1)")
    stop = data.get("stop_at_subopt")
    if stop is not None:
        _expect(isinstance(stop, (int, float)) and stop > 0, "stop_at_subopt",
                "expected a positive number")
    ref = data.get("reference", {})
    _expect(isinstance(ref, dict), "reference", "expected an object")

    return ExperimentConfig(
        topology=topo, loss=loss, m=m, dataset=ds, algorithms=list(algos),
        seeds=list(seeds), iters=iters, log_every=log_every, sigma=sigma,
        tau=float(tau), p_comm=p_comm, stop_at_subopt=stop,
        out=data.get("out", "results"), reference=dict(ref),
    )


def _build_graph(topo):
    params = {k: v for k, v in topo.items() if k != "kind"}
    if topo["kind"] == "custom" and "edges" in params:
        params["edges"] = [tuple(e) for e in params["edges"]]
    return build_topology(topo["kind"], **params)


def build_instance(cfg: ExperimentConfig):
    """Materialize (graph, objectives, problem, flat, dataset_id) from a config."""
    graph = _build_graph(cfg.topology)
    ds = cfg.dataset
    seed = ds.get("seed", 0)
    if ds["kind"] == "synthetic":
        per_node = synth_dataset(
            graph.n, cfg.m, ds["d"], seed, ds.get("correlation", 0.0),
            loss=cfg.loss, noise=ds.get("noise", 0.1), pool=ds.get("pool"),
            feature_scale=ds.get("feature_scale", 1.0),
        )
        dataset_id = f"synthetic(d={ds['d']},corr={ds.get('correlation', 0.0)},seed={seed})"
    else:
        raw, dim = parse_libsvm(ds["path"])
        feats, labels = _dense_from_pairs(raw, dim)
        if cfg.loss == "logistic":
            labels = np.where(labels > 0, 1.0, -1.0)
        per_node = assign_node_datasets(feats, labels, graph.n, cfg.m, seed)
        dataset_id = f"libsvm({os.path.basename(ds['path'])},seed={seed})"

    sigmas = cfg.sigma if isinstance(cfg.sigma, list) else [cfg.sigma] * graph.n
    if len(sigmas) != graph.n:
        raise ConfigError("sigma", f"expected {graph.n} entries, got {len(sigmas)}")
    kind = cfg.loss_kind
    objectives = []
    for (feats_i, labels_i), s in zip(per_node, sigmas):
        samples = tuple(Sample(f, l) for f, l in zip(feats_i, labels_i))
        objectives.append(LocalObjective(samples, float(s), kind))

    if kind.is_smooth:
        problem = build_augmented(graph, objectives, cfg.tau, p_comm_override=cfg.p_comm)
    else:
        problem = build_augmented_ns(graph, objectives, cfg.tau, p_comm_override=cfg.p_comm)
    flat = pool_objectives(objectives)
    return graph, objectives, problem, flat, dataset_id


def derived_constants(cfg, problem, flat, f_star):
    meta = {
        "n": problem.n,
        "m": problem.m_max,
        "d": problem.d,
        "edges": problem.graph.n_edges,
        "tau": problem.tau,
        "p_comm": problem.sampling.p_comm,
        "alpha": problem.alpha,
        "gamma": problem.gamma,
        "f_star": f_star,
        "sigma_total": flat.sigma_total,
        "loss": cfg.loss,
    }
    if problem.smooth:
        p_comm = problem.sampling.p_comm
        meta.update({
            "kappa_s": problem.kappa_s,
            "kappa_b_max": float(problem.kappa_b.max()),
            "kappa_comm": problem.kappa_comm,
            "rho": problem.rho,
            "rho_unclamped": problem.rho_unclamped,
            "s_max_bound": problem.s_max_bound,
            "predicted_time_per_log_eps": (
                None if problem.rho == 0 else
                (1.0 - p_comm + problem.tau * p_comm) / problem.rho
            ),
        })
        if problem.gamma is not None:
            meta["balanced_p_comm"] = float(
                balanced_p_comm(problem.gamma, problem.kappa_comm, problem.s_max_bound)
            )
            meta["balanced_time_bound_per_log_eps"] = float(
                np.sqrt(2.0) * problem.s_max_bound
                + problem.tau * np.sqrt(problem.kappa_comm / problem.gamma)
            )
            rc, rp = rate_branches(problem, p_comm)
            meta["rho_comm_branch"] = float(rc)
            meta["rho_comp_branch"] = float(rp)
    else:
        meta.update({"s_squared": problem.s_squared,
                     "mu2_virtual": float(problem.mu2_virtual[0])})
    return meta


def _run_cell(algo, seed, cfg, problem, flat, f_star, dataset_id):
    iters = cfg.iters[algo]
    common = dict(log_every=cfg.log_every, f_star=f_star,
                  stop_at_subopt=cfg.stop_at_subopt)
    if algo == "adfs":
        record = run_adfs(problem, iters, seed, **common).record
    elif algo == "adfs_efficient":
        record = run_adfs_efficient(problem, iters, seed, **common).record
    elif algo == "ns_adfs":
        record = run_ns_adfs(problem, iters, seed, **common).record
    elif algo == "point_saga":
        record, _ = point_saga(flat, iters, seed, **common)
    else:
        raise ValueError(algo)
    record.meta["dataset_id"] = dataset_id
    return record


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Execute all (algorithm, seed) cells and write results.csv + metadata.json.

    Returns (exit_code, csv_path): 0 when every cell succeeded.  Cells run
    independently (optionally in parallel, capped by ADFS_LAB_THREADS) and a
    failing cell aborts only itself.
    """
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    graph, objectives, problem, flat, dataset_id = build_instance(cfg)

    any_iters = any(cfg.iters[a] > 0 for a in cfg.algorithms)
    f_star = None
    if any_iters:
        if cfg.loss_kind.is_smooth:
            _, f_star = reference_optimum(flat, tol=cfg.reference.get("tol", 3e-6))
        else:
            _, f_star = reference_optimum(
                flat,
                ns_problem=problem,
                ns_iters=cfg.reference.get("ns_iters", 20_000),
                ns_seeds=tuple(cfg.reference.get("ns_seeds", (0, 1, 2))),
            )

    cells = [(a, s) for a in cfg.algorithms for s in cfg.seeds if cfg.iters[a] > 0]
    records = {}
    failures = []
    workers = max(int(os.environ.get("ADFS_LAB_THREADS", "1")), 1)

    def runner(cell):
        algo, seed = cell
        return _run_cell(algo, seed, cfg, problem, flat, f_star, dataset_id)

    if workers == 1:
        for cell in cells:
            try:
                records[cell] = runner(cell)
            except Exception as exc:  # cell failure must not sink the batch
                failures.append({"algo": cell[0], "seed": cell[1], "error": str(exc)})
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(runner, cell): cell for cell in cells}
            for fut in concurrent.futures.as_completed(futs):
                cell = futs[fut]
                try:
                    records[cell] = fut.result()
                except Exception as exc:
                    failures.append({"algo": cell[0], "seed": cell[1], "error": str(exc)})

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("algo,seed,iter,time,subopt\n")
        for algo in sorted(set(a for a, _ in records)):
            for seed in sorted(s for a, s in records if a == algo):
                for row in records[(algo, seed)].rows:
                    fh.write(
                        f"{algo},{seed},{row.iteration},"
                        f"{row.time:.12e},{row.subopt:.12e}\n"
                    )

    meta = {
        "config": {
            "topology": cfg.topology, "loss": cfg.loss, "m": cfg.m,
            "dataset": cfg.dataset, "algorithms": cfg.algorithms,
            "seeds": cfg.seeds, "iters": cfg.iters, "log_every": cfg.log_every,
            "sigma": cfg.sigma, "tau": cfg.tau, "p_comm": cfg.p_comm,
            "stop_at_subopt": cfg.stop_at_subopt, "out": cfg.out,
            "reference": cfg.reference,
        },
        "dataset_id": dataset_id,
        "derived": derived_constants(cfg, problem, flat, f_star),
        "failures": failures,
    }
    meta_path = os.path.join(out_dir, "metadata.json")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for f in failures:
        print(f"cell failed: {f['algo']} seed {f['seed']}: {f['error']}", file=sys.stderr)
    return (1 if failures else 0), csv_path


# ---------------------------------------------------------------------------
# CLI


def _apply_overrides(data, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("--override", f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return data


def _load_config_file(path, overrides):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<config>", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}") from None
    return load_config(_apply_overrides(data, overrides))


def _cmd_run(args):
    cfg = _load_config_file(args.config, args.override)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    code, csv_path = run_experiment(cfg, out_dir=args.out)
    print(f"wrote {csv_path}")
    return code


def _cmd_spectrum(args):
    cfg = _load_config_file(args.config, args.override)
    _, _, problem, flat, dataset_id = build_instance(cfg)
    meta = derived_constants(cfg, problem, flat, f_star=None)
    meta.pop("f_star")
    print(f"dataset: {dataset_id}")
    for key in sorted(meta):
        val = meta[key]
        if isinstance(val, float):
            print(f"{key} = {val:.10g}")
        else:
            print(f"{key} = {val}")
    return 0


def _cmd_validate(args):
    results = selfcheck.run_all(verbose=True)
    return 0 if all(ok for _, ok, _ in results) else 1


def _cmd_gen_data(args):
    feats, labels = synth_pool(args.samples, args.d, args.seed, args.correlation,
                               loss=args.loss)
    rows = []
    for f, l in zip(feats, labels):
        pairs = [(i, v) for i, v in enumerate(f) if v != 0.0]
        rows.append((l, pairs))
    write_libsvm(args.out, rows)
    print(f"wrote {len(rows)} samples to {args.out}")
    return 0


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adfs-lab",
        description="Simulator for accelerated decentralized finite-sum optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment cells of a config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (default: config.out)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="run a single seed instead of the config's list")
    p_run.add_argument("--override", action="append", metavar="KEY=VALUE")

    p_spec = sub.add_parser("spectrum", help="print the derived constants of a config")
    p_spec.add_argument("config")
    p_spec.add_argument("--override", action="append", metavar="KEY=VALUE")

    sub.add_parser("validate", help="run the built-in oracle/property checks")

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset in LibSVM format")
    p_gen.add_argument("--samples", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--correlation", type=float, default=0.0)
    p_gen.add_argument("--loss", choices=sorted(LOSSES), default="logistic")
    p_gen.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    handler = {
        "run": _cmd_run,
        "spectrum": _cmd_spectrum,
        "validate": _cmd_validate,
        "gen-data": _cmd_gen_data,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, GraphConstructionError, LibsvmParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():  # console entry point
    raise SystemExit(cli())
