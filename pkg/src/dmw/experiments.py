"""Experiment drivers: seeded, configurable runs that emit records, a
config echo and optional SVG charts."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .charts import line_chart
from .core import DmwError, make_rng
from .estimators import (
    ScaleWeights,
    empirical_dmw,
    enumerate_matrix_law,
    sample_matrix_law,
    sliced_dmw,
)
from .gw import gw_entropic
from .kernels import (
    gram_from_dissimilarity,
    median_heuristic,
    msdmw_dissimilarity_matrix,
    permutation_test,
    write_gram,
)
from .spaces import (
    FiniteMetricMeasureSpace,
    SbmSpec,
    ShapeCloudSpec,
    load_tu_dataset,
    space_counterexample_x,
    space_counterexample_y,
    space_from_cloud,
    space_from_sbm,
)


class ConfigError(DmwError, ValueError):
    pass


EXPERIMENTS = ("tradeoff", "directions", "scalability", "twosample", "hierarchy", "counterexample",
               "kernel-export")

# stream tags for per-cell seeds
_SPACES, _REFERENCE, _REPLICATE, _TRIAL = 10, 11, 12, 13

DEFAULTS = {
    "tradeoff": {
        "shape_x": "circle", "shape_y": "ellipse", "delta": 0.3, "n_samples": 100, "noise": 0.05,
        "orders": [2, 3, 4, 6, 8, 10, 12], "K": 200, "L": 64, "p": 1.0, "mode": "euclidean",
        "ref_order": 12, "ref_K": 4000, "ref_L": 512,
    },
    "directions": {
        "shape_x": "circle", "shape_y": "ellipse", "delta": 0.3, "n_samples": 100, "noise": 0.05,
        "normalize": True, "n": 4, "K": 256, "Ls": [8, 16, 32, 64, 128, 256, 512], "ref_L": 4096,
        "p": 1.0, "mode": "dual", "tolerance": 0.2, "safety": 1.5,
    },
    "scalability": {
        "sizes": [50, 100, 200, 400], "blocks": 2, "p_in": 0.3, "p_out": 0.05,
        "n": 6, "K": 2000, "L": 128, "repeats": 5,
        "exact_K": 128, "exact_n": 4, "exact_max_nodes": 400,
        "gw_epsilon": 0.01, "gw_p": 2.0, "gw_max_nodes": 200, "cap_s": 60.0,
    },
    "twosample": {
        "deltas": [0.0, 0.02, 0.04, 0.08], "group_sizes": [8, 16, 32], "n_samples": 50, "noise": 0.05,
        "scales": [2, 3, 4], "K": 200, "L": 64, "mode": "euclidean", "lam": "median",
        "permutations": 199, "alpha": 0.05,
    },
    "hierarchy": {"orders": [2, 3, 4], "p": 1.0, "random_pairs": 3, "points": 4},
    "counterexample": {"orders": [2, 3, 4], "p": 1.0},
    "kernel-export": {
        "dataset_dir": None, "dataset": None, "node_budget": None, "scales": [2, 3, 4, 6],
        "K": 200, "L": 64, "mode": "euclidean", "lam": "median", "gram_file": "gram.txt",
    },
}
DEFAULT_REPLICATES = {"tradeoff": 20, "directions": 50, "scalability": 1, "twosample": 40,
                      "hierarchy": 1, "counterexample": 1, "kernel-export": 1}
_POSITIVE = ("K", "L", "ref_K", "ref_L", "n_samples", "exact_K", "repeats", "permutations", "n", "ref_order",
             "points", "exact_n")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicates: int | None = None
    out_dir: str | None = None
    threads: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        unknown = set(self.params) - set(DEFAULTS[self.experiment])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.experiment}: {sorted(unknown)}")
        self.params = {**DEFAULTS[self.experiment], **self.params}
        if self.replicates is None:
            self.replicates = DEFAULT_REPLICATES[self.experiment]
        if int(self.replicates) < 1:
            raise ConfigError(f"replicates must be positive, got {self.replicates}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.threads) < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        for key in _POSITIVE:
            if key in self.params and not (isinstance(self.params[key], (int, float)) and self.params[key] > 0):
                raise ConfigError(f"{key} must be positive, got {self.params[key]!r}")
        for key in ("orders", "Ls", "sizes", "group_sizes", "scales"):
            vals = self.params.get(key)
            if vals is not None and (not vals or any(not isinstance(v, int) or v < 1 for v in vals)):
                raise ConfigError(f"{key} must be a non-empty list of positive integers, got {vals!r}")

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> ExperimentConfig:
        data = dict(data)
        top = {k: data.pop(k) for k in ("experiment", "seed", "replicates", "out_dir", "threads") if k in data}
        params = data.pop("params", {})
        params.update(data)
        top.update({k: v for k, v in overrides.items() if v is not None})
        if "experiment" not in top:
            raise ConfigError("config needs an 'experiment' field")
        return cls(params=params, **top)

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": int(self.seed), "replicates": int(self.replicates),
                "threads": int(self.threads), "params": self.params}


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a YAML or JSON config file."""
    import yaml

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return ExperimentConfig.from_mapping(data, **overrides)


@dataclass
class ExperimentRecord:
    params: dict
    stats: dict
    seed: int
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    reason: str = ""

    def __post_init__(self):
        if any(t < 0 for t in self.timings.values()):
            raise ValueError("timings must be nonnegative")

    def row(self) -> dict:
        return {**self.params, **self.stats, "seed": self.seed, "status": self.status, "reason": self.reason}

    def timing_row(self) -> dict:
        return {**self.params, "seed": self.seed, **self.timings}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    chart: str | None = None
    files: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def derive_seed(seed: int, *keys: int) -> int:
    return int(make_rng(seed, *keys).integers(0, 2**63))


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _shape_pair(P: dict, seed: int):
    sx = ShapeCloudSpec(P["shape_x"], P["n_samples"], P["delta"], P["noise"], derive_seed(seed, _SPACES, 0))
    sy = ShapeCloudSpec(P["shape_y"], P["n_samples"], P["delta"], P["noise"], derive_seed(seed, _SPACES, 1))
    norm = bool(P.get("normalize", False))
    return space_from_cloud(sx, normalize=norm), space_from_cloud(sy, normalize=norm)


# -- drivers -----------------------------------------------------------------------------


def run_tradeoff(config: ExperimentConfig) -> ExperimentResult:
    """Gap between low-budget sliced estimates at each order and one
    high-budget reference at a high order."""
    P, seed, R = config.params, int(config.seed), int(config.replicates)
    X, Y = _shape_pair(P, seed)
    ref_seed = derive_seed(seed, _REFERENCE)
    ref = sliced_dmw(X, Y, P["ref_order"], P["ref_K"], P["ref_L"], p=P["p"], mode=P["mode"], seed=ref_seed)

    def cell(n):
        t0 = time.perf_counter()
        vals = np.array([
            sliced_dmw(X, Y, n, P["K"], P["L"], p=P["p"], mode=P["mode"],
                       seed=derive_seed(seed, _REPLICATE, n, r)).value
            for r in range(R)
        ])
        gaps = np.abs(vals - ref.value)
        return ExperimentRecord(
            params={"order": n, "K": P["K"], "L": P["L"], "replicates": R},
            stats={"mean_value": float(vals.mean()), "mean_gap": float(gaps.mean()),
                   "std_gap": float(gaps.std()), "std_value": float(vals.std()), "reference": ref.value},
            seed=seed, timings={"total_s": time.perf_counter() - t0},
        )

    records = _map(cell, sorted(P["orders"]), config.threads)
    chart = line_chart({"mean gap": ([r.params["order"] for r in records], [r.stats["mean_gap"] for r in records])},
                       title="gap to high-order reference", xlabel="order n", ylabel="mean |estimate - reference|")
    return ExperimentResult(config, records, chart, extra={"reference": ref.value})


def run_directions(config: ExperimentConfig) -> ExperimentResult:
    """Spread of the sliced statistic over direction draws at fixed tuples."""
    P, seed, R = config.params, int(config.seed), int(config.replicates)
    X, Y = _shape_pair(P, seed)
    p, n, K = P["p"], P["n"], P["K"]
    tuple_seeds = (derive_seed(seed, _SPACES, 2), derive_seed(seed, _SPACES, 3))
    dir_seeds = [derive_seed(seed, _REPLICATE, r) for r in range(R)]
    ref = sliced_dmw(X, Y, n, K, P["ref_L"], p=p, mode=P["mode"], seed=dir_seeds[0], tuple_seeds=tuple_seeds)
    radius = max(X.diameter, Y.diameter)

    def cell(L):
        t0 = time.perf_counter()
        vals = np.array([sliced_dmw(X, Y, n, K, L, p=p, mode=P["mode"], seed=s, tuple_seeds=tuple_seeds).value
                         for s in dir_seeds])
        within = np.abs(vals - ref.value) <= P["tolerance"] * ref.value
        return ExperimentRecord(
            params={"L": L, "n": n, "K": K, "replicates": R},
            stats={"fraction_within": float(within.mean()), "std_powered": float(np.std(vals**p)),
                   "bound": P["safety"] * radius**p / (2.0 * math.sqrt(L)), "reference": ref.value,
                   "radius": radius},
            seed=seed, timings={"total_s": time.perf_counter() - t0},
        )

    records = _map(cell, sorted(P["Ls"]), config.threads)
    Ls = [r.params["L"] for r in records]
    chart = line_chart({"fraction within tolerance": (Ls, [r.stats["fraction_within"] for r in records]),
                        "std of powered statistic": (Ls, [r.stats["std_powered"] for r in records])},
                       title="finite-direction behaviour", xlabel="directions L", ylabel="", logx=True)
    return ExperimentResult(config, records, chart, extra={"reference": ref.value})


def run_scalability(config: ExperimentConfig) -> ExperimentResult:
    """Phase timings on SBM graphs of growing size. Timings are minima over
    repeats; baselines beyond their size limit or wall-clock cap are
    recorded as skipped."""
    P, seed = config.params, int(config.seed)
    records = []
    cap = float(P["cap_s"])
    n, K, L, reps = P["n"], P["K"], P["L"], P["repeats"]
    for m in sorted(P["sizes"]):
        blocks = [m // P["blocks"] + (1 if b < m % P["blocks"] else 0) for b in range(P["blocks"])]
        pair = []
        apsp = 0.0
        for side in (0, 1):
            t0 = time.perf_counter()
            pair.append(space_from_sbm(SbmSpec(tuple(blocks), P["p_in"], P["p_out"],
                                               derive_seed(seed, _SPACES, m, side))))
            apsp += time.perf_counter() - t0
        X, Y = pair
        base = {"nodes": m}
        records.append(ExperimentRecord({**base, "method": "apsp", "n": 0, "K": 0, "L": 0},
                                        {"value": float("nan")}, seed, {"seconds": apsp}))

        for label, KK, LL in (("sliced", K, L), ("sliced-2L", K, 2 * L), ("sliced-2K", 2 * K, L)):
            runs = [sliced_dmw(X, Y, n, KK, LL, seed=seed) for _ in range(reps)]
            phase = min(e.timings["sampling_s"] + e.timings["slicing_s"] for e in runs)
            records.append(ExperimentRecord({**base, "method": label, "n": n, "K": KK, "L": LL},
                                            {"value": runs[0].value}, seed, {"seconds": phase}))

        en, eK = P["exact_n"], P["exact_K"]
        params = {**base, "method": "empirical-exact", "n": en, "K": eK, "L": 0}
        if m > P["exact_max_nodes"]:
            records.append(ExperimentRecord(params, {"value": float("nan")}, seed, {"seconds": 0.0},
                                            status="skipped", reason=f"nodes above limit {P['exact_max_nodes']}"))
        else:
            t0 = time.perf_counter()
            val = empirical_dmw(sample_matrix_law(X, en, eK, make_rng(seed, _TRIAL, m, 0)),
                                sample_matrix_law(Y, en, eK, make_rng(seed, _TRIAL, m, 1))).value
            dt = time.perf_counter() - t0
            if dt > cap:
                records.append(ExperimentRecord(params, {"value": float("nan")}, seed, {"seconds": dt},
                                                status="skipped", reason=f"exceeded wall-clock cap {cap:g}s"))
            else:
                records.append(ExperimentRecord(params, {"value": val}, seed, {"seconds": dt}))

        params = {**base, "method": "entropic-gw", "n": 0, "K": 0, "L": 0}
        if m > P["gw_max_nodes"]:
            records.append(ExperimentRecord(params, {"value": float("nan")}, seed, {"seconds": 0.0},
                                            status="skipped", reason=f"nodes above limit {P['gw_max_nodes']}"))
        else:
            t0 = time.perf_counter()
            g = gw_entropic(X, Y, p=P["gw_p"], epsilon=P["gw_epsilon"], time_limit=cap)
            dt = time.perf_counter() - t0
            if g.meta["timed_out"]:
                records.append(ExperimentRecord(params, {"value": float("nan")}, seed, {"seconds": dt},
                                                status="skipped", reason=f"exceeded wall-clock cap {cap:g}s"))
            else:
                records.append(ExperimentRecord(params, {"value": g.value}, seed, {"seconds": dt}))

    series = {}
    for r in records:
        if r.status == "ok":
            xs, ys = series.setdefault(r.params["method"], ([], []))
            xs.append(r.params["nodes"])
            ys.append(r.timings["seconds"])
    chart = line_chart(series, title="phase timings on SBM graphs", xlabel="nodes", ylabel="seconds")
    return ExperimentResult(config, records, chart)


def _twosample_trial(P, seed, delta, g, trial):
    rng = make_rng(seed, _TRIAL, int(round(delta * 1e6)), g, trial)
    spaces = [space_from_cloud(ShapeCloudSpec("circle", P["n_samples"], 0.0, P["noise"], int(rng.integers(2**63))))
              for _ in range(g)]
    spaces += [space_from_cloud(ShapeCloudSpec("ellipse", P["n_samples"], delta, P["noise"], int(rng.integers(2**63))))
               for _ in range(g)]
    kseed = int(rng.integers(2**63))
    D = msdmw_dissimilarity_matrix(spaces, ScaleWeights.uniform(P["scales"]), P["K"], P["L"], mode=P["mode"],
                                   seed=kseed)
    lam = median_heuristic(D) if P["lam"] == "median" else float(P["lam"])
    gram = gram_from_dissimilarity(D, lam)
    return permutation_test(gram, np.repeat([0, 1], g), P["permutations"], P["alpha"], seed=kseed)


def run_twosample(config: ExperimentConfig) -> ExperimentResult:
    """Rejection rates of the kernel permutation test over a (shift, group
    size) grid; group A holds circles, group B ellipses with the shift."""
    P, seed, T = config.params, int(config.seed), int(config.replicates)
    if P["lam"] != "median" and not (isinstance(P["lam"], (int, float)) and P["lam"] > 0):
        raise ConfigError(f"lam must be 'median' or a positive number, got {P['lam']!r}")
    cells = [(d, g) for d in sorted(P["deltas"]) for g in sorted(P["group_sizes"])]

    def cell(c):
        d, g = c
        t0 = time.perf_counter()
        res = [_twosample_trial(P, seed, d, g, t) for t in range(T)]
        return ExperimentRecord(
            params={"delta": d, "group_size": g, "trials": T},
            stats={"rejection_rate": float(np.mean([r.reject for r in res])),
                   "mean_p_value": float(np.mean([r.p_value for r in res])),
                   "estimator": res[0].estimator},
            seed=seed, timings={"total_s": time.perf_counter() - t0},
        )

    records = _map(cell, cells, config.threads)
    series = {}
    for r in records:
        xs, ys = series.setdefault(f"{r.params['group_size']} per group", ([], []))
        xs.append(r.params["delta"])
        ys.append(r.stats["rejection_rate"])
    chart = line_chart(series, title="permutation test rejection rate", xlabel="eccentricity shift",
                       ylabel="rejection rate")
    return ExperimentResult(config, records, chart)


def _exact_table(name, X, Y, orders, p, seed):
    records = []
    for n in sorted(orders):
        t0 = time.perf_counter()
        lx, ly = enumerate_matrix_law(X, n).merged(), enumerate_matrix_law(Y, n).merged()
        val = empirical_dmw(lx, ly, p=p).value
        records.append(ExperimentRecord({"pair": name, "order": n},
                                        {"dmw": val, "atoms_x": lx.size, "atoms_y": ly.size}, seed,
                                        {"total_s": time.perf_counter() - t0}))
    return records


def _random_space(rng, m) -> FiniteMetricMeasureSpace:
    from scipy.spatial.distance import pdist, squareform

    return FiniteMetricMeasureSpace.uniform(squareform(pdist(rng.random((m, 2)))))


def run_hierarchy(config: ExperimentConfig) -> ExperimentResult:
    """Exact per-order DMW tables for the counterexample pair, an identical
    pair and seeded random planar pairs."""
    P, seed = config.params, int(config.seed)
    X, Y = space_counterexample_x(), space_counterexample_y()
    pairs = [("counterexample", X, Y), ("identical", X, X.relabeled([2, 0, 3, 1]))]
    for k in range(P["random_pairs"]):
        rng = make_rng(seed, _SPACES, k)
        pairs.append((f"random-{k}", _random_space(rng, P["points"]), _random_space(rng, P["points"])))
    records = []
    for name, A, B in pairs:
        rows = _exact_table(name, A, B, P["orders"], P["p"], seed)
        vals = [r.stats["dmw"] for r in rows]
        for r, prev in zip(rows, [None] + vals[:-1]):
            r.stats["monotone_step"] = prev is None or r.stats["dmw"] >= prev - 1e-9
        records.extend(rows)
    series = {}
    for r in records:
        xs, ys = series.setdefault(r.params["pair"], ([], []))
        xs.append(r.params["order"])
        ys.append(r.stats["dmw"])
    chart = line_chart(series, title="exact DMW by order", xlabel="order n", ylabel="DMW")
    return ExperimentResult(config, records, chart)


def run_counterexample(config: ExperimentConfig) -> ExperimentResult:
    """Exact per-order DMW for the pair with equal two-point laws."""
    P, seed = config.params, int(config.seed)
    records = _exact_table("counterexample", space_counterexample_x(), space_counterexample_y(),
                           P["orders"], P["p"], seed)
    for r in records:
        r.stats["laws_equal"] = r.stats["dmw"] <= 1e-9
    return ExperimentResult(config, records, None)


def run_kernel_export(config: ExperimentConfig) -> ExperimentResult:
    """Gram matrix of a graph dataset under the multi-scale sliced kernel,
    written with a provenance header."""
    P, seed = config.params, int(config.seed)
    if not P["dataset_dir"] or not P["dataset"]:
        raise ConfigError("kernel-export needs 'dataset_dir' and 'dataset'")
    graphs = load_tu_dataset(P["dataset_dir"], P["dataset"], node_budget=P["node_budget"], seed=seed)
    spaces = [s for s, _ in graphs]
    labels = [lab for _, lab in graphs]
    weights = ScaleWeights.uniform(P["scales"])
    D = msdmw_dissimilarity_matrix(spaces, weights, P["K"], P["L"], mode=P["mode"], seed=seed)
    lam = median_heuristic(D) if P["lam"] == "median" else float(P["lam"])
    kconf = {"scales": list(weights.scales), "weights": weights.weights.tolist(), "K": P["K"], "L": P["L"],
             "mode": P["mode"], "p": 1, "node_budget": P["node_budget"], "lambda_rule": str(P["lam"])}
    gram = gram_from_dissimilarity(D, lam, provenance={"estimator": "sliced multi-scale, shared samples", **kconf})
    records = [ExperimentRecord({"index": i}, {"label": lab, "nodes": s.size}, seed)
               for i, (s, lab) in enumerate(graphs)]
    return ExperimentResult(config, records, None, extra={"gram": gram, "labels": labels, "config": kconf})


RUNNERS = {
    "tradeoff": run_tradeoff,
    "directions": run_directions,
    "scalability": run_scalability,
    "twosample": run_twosample,
    "hierarchy": run_hierarchy,
    "counterexample": run_counterexample,
    "kernel-export": run_kernel_export,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[config.experiment](config)


# -- output ------------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return json.dumps(list(v))
    return str(v)


def _json_safe(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def records_csv(rows: list) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in cols])
    return buf.getvalue()


def environment_stamp() -> dict:
    return {"package": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "platform": platform.system()}


def write_outputs(result: ExperimentResult, out_dir, fmt: str = "csv") -> list:
    """Write records, config echo and chart. Timings go to their own file
    so the record file is reproducible byte-for-byte."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    files = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        files.append(path)

    rows = [r.row() for r in result.records]
    trows = [r.timing_row() for r in result.records if r.timings]
    if fmt == "csv":
        put("records.csv", records_csv(rows))
        if trows:
            put("timings.csv", records_csv(trows))
    else:
        put("records.json", json.dumps(_json_safe(rows), indent=2, sort_keys=True) + "\n")
        if trows:
            put("timings.json", json.dumps(_json_safe(trows), indent=2, sort_keys=True) + "\n")
    echo = {"config": result.config.echo(), "environment": environment_stamp(),
            "extra": {k: v for k, v in result.extra.items() if k not in ("gram", "labels")}}
    put("config.json", json.dumps(_json_safe(echo), indent=2, sort_keys=True) + "\n")
    if result.chart is not None:
        put(f"{result.config.experiment}.svg", result.chart)
    if "gram" in result.extra:
        path = os.path.join(out_dir, result.config.params["gram_file"])
        write_gram(path, result.extra["gram"], result.extra["labels"], dataset=result.config.params["dataset"],
                   seed=int(result.config.seed), config=result.extra["config"])
        files.append(path)
    result.files = files
    return files
