"""Experiment runner: config parsing, policy suites, and report files.

One config describes one experiment: a domain family, a setting tuple
(n_types, n_states, budget, rho, horizon), a policy list, and evaluation
parameters. The runner draws one instance per instance seed, computes the
dummy-LP upper bound, evaluates every requested policy, and writes

    results.csv     one row per (instance draw, policy)
    results.txt     human-readable table, near-optimal rows starred
    gap_curve.csv   (sweep_rho) per-rho optimality gaps plus a fitted
                    log-log slope comment line
    timing.csv      (time_policies) per-policy wall-clock statistics
    trajectories.jsonl  optional per-(episode, t, arm) audit records

Outputs are a pure function of the config: reruns produce byte-identical
CSVs. Wall-clock measurement is therefore opt-in (measure_runtime); without
it the runtime_ms column is written as 0.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import lp
from .domains import FAMILIES, DomainSpec, make_instance
from .model import Instance, save_instance
from .policies import POLICY_NAMES, make_policy
from .simulator import DegenerateRange, evaluate, normalize_scores, run_episode
from .simplex import SolverStall

THREADS_ENV = "SINGLEPULL_THREADS"
NEAR_OPTIMAL_FRACTION = 0.03

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["domain", "setting", "policies", "episodes"],
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "params": {"type": "object"},
            },
        },
        "setting": {
            "type": "object",
            "required": ["n_types", "n_states", "budget", "rho", "horizon"],
            "additionalProperties": False,
            "properties": {
                "n_types": {"type": "integer", "minimum": 1},
                "n_states": {"type": "integer", "minimum": 2},
                "budget": {"type": "integer", "minimum": 0},
                "rho": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
            },
        },
        "policies": {
            "type": "array",
            "items": {"enum": list(POLICY_NAMES)},
            "minItems": 1,
        },
        "episodes": {"type": "integer", "minimum": 2},
        "base_seed": {"type": "integer"},
        "resample_instances": {"type": "integer", "minimum": 1},
        "instance_seeds": {"type": "array", "items": {"type": "integer"}},
        "out_dir": {"type": "string"},
        "dump_trajectories": {"type": "boolean"},
        "measure_runtime": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    domain_family: str
    n_types: int
    n_states: int
    budget: int
    rho: int
    horizon: int
    policies: list[str]
    episodes: int
    base_seed: int = 0
    instance_seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    domain_params: dict = field(default_factory=dict)
    dump_trajectories: bool = False
    measure_runtime: bool = False

    @property
    def setting(self) -> tuple:
        return (self.n_types, self.n_states, self.budget, self.rho, self.horizon)

    def domain_spec(self, seed: int) -> DomainSpec:
        return DomainSpec(
            family=self.domain_family,
            n_types=self.n_types,
            n_states=self.n_states,
            seed=seed,
            params=dict(self.domain_params),
        )

    def instance(self, seed: int) -> Instance:
        return make_instance(self.domain_spec(seed), budget=self.budget,
                             rho=self.rho, horizon=self.horizon)


def parse_config(doc: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected by schema: {exc.message}") from exc
    setting = doc["setting"]
    resample = int(doc.get("resample_instances", 1))
    seeds = [int(s) for s in doc.get("instance_seeds", range(resample))]
    cfg = ExperimentConfig(
        domain_family=doc["domain"]["family"],
        n_types=setting["n_types"],
        n_states=setting["n_states"],
        budget=setting["budget"],
        rho=setting["rho"],
        horizon=setting["horizon"],
        policies=list(doc["policies"]),
        episodes=int(doc["episodes"]),
        base_seed=int(doc.get("base_seed", 0)),
        instance_seeds=seeds,
        out_dir=doc.get("out_dir", "results"),
        domain_params=dict(doc["domain"].get("params", {})),
        dump_trajectories=bool(doc.get("dump_trajectories", False)),
        measure_runtime=bool(doc.get("measure_runtime", False)),
    )
    if cfg.budget > cfg.n_types * cfg.rho:
        # mirrored from instance validation: never-binding budgets are legal
        print(f"warning: budget {cfg.budget} exceeds n_types*rho = "
              f"{cfg.n_types * cfg.rho}; the budget never binds")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc)


@dataclass
class ResultRow:
    domain: str
    setting: tuple
    instance_seed: int
    policy: str
    mean_reward: float
    ci95: float
    upper_bound: float
    normalized: float  # nan when no random baseline in the run
    runtime_ms: float
    n_episodes: int


RESULT_COLUMNS = ("domain", "setting", "instance_seed", "policy", "mean_reward",
                  "ci95", "upper_bound", "normalized", "runtime_ms", "n_episodes")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if np.isnan(x) else f"{x:.10g}"
    if isinstance(x, tuple):
        return "(" + ";".join(str(v) for v in x) + ")"
    return str(x)


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _evaluate_policy(instance, name, episodes, base_seed):
    policy = make_policy(name)
    return evaluate(instance, policy, episodes, base_seed)


def run_experiment(config: ExperimentConfig, evaluate_fn=_evaluate_policy):
    """Evaluate every (instance draw, policy) pair and write report files.

    Solver failures abort the run after serializing the offending instance
    for replay. Returns the list of ResultRow in output order.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    work = []
    instances = {}
    for seed in config.instance_seeds:
        instances[seed] = config.instance(seed)
        for name in config.policies:
            work.append((seed, name))

    bounds = {}
    for seed, instance in instances.items():
        try:
            bounds[seed] = lp.upper_bound(instance)
        except (SolverStall, RuntimeError) as exc:
            path = os.path.join(config.out_dir, f"failed_instance_{seed}.json")
            save_instance(instance, path)
            raise SolverStall(f"upper-bound solve failed for seed {seed} "
                              f"(instance saved to {path}): {exc}") from exc

    def job(item):
        seed, name = item
        try:
            return evaluate_fn(instances[seed], name, config.episodes, config.base_seed)
        except (SolverStall, RuntimeError) as exc:
            path = os.path.join(config.out_dir, f"failed_instance_{seed}.json")
            save_instance(instances[seed], path)
            raise SolverStall(f"policy {name} failed on seed {seed} "
                              f"(instance saved to {path}): {exc}") from exc

    workers = _n_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(job, work))
    else:
        summaries = [job(item) for item in work]

    by_key = {item: summary for item, summary in zip(work, summaries)}
    rows = []
    for seed in config.instance_seeds:
        random_mean = by_key[(seed, "random")].mean if (seed, "random") in by_key else None
        for name in config.policies:
            summary = by_key[(seed, name)]
            ub = bounds[seed]
            if random_mean is not None and ub > random_mean:
                norm = float(normalize_scores(summary.mean, ub, random_mean))
            else:
                norm = float("nan")
            rows.append(ResultRow(
                domain=config.domain_family,
                setting=config.setting,
                instance_seed=seed,
                policy=name,
                mean_reward=summary.mean,
                ci95=summary.half_width,
                upper_bound=ub,
                normalized=norm,
                runtime_ms=summary.wall_clock * 1e3 if config.measure_runtime else 0.0,
                n_episodes=summary.n_episodes,
            ))

    _write_results_csv(config, rows)
    _write_results_table(config, rows)
    if config.dump_trajectories:
        _dump_trajectories(config, instances)
    return rows


def _write_results_csv(config, rows):
    path = os.path.join(config.out_dir, "results.csv")
    with open(path, "w") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(getattr(row, col)) for col in RESULT_COLUMNS) + "\n")
    return path


def _write_results_table(config, rows):
    path = os.path.join(config.out_dir, "results.txt")
    lines = [
        f"domain {config.domain_family}  setting (N,S,K,rho,T)={config.setting}  "
        f"episodes {config.episodes}  instance seeds {config.instance_seeds}",
        f"* = near-optimal: gap to the LP upper bound below "
        f"{NEAR_OPTIMAL_FRACTION:.0%} of the bound",
        "",
    ]
    for seed in config.instance_seeds:
        sub = [r for r in rows if r.instance_seed == seed]
        if not sub:
            continue
        ub = sub[0].upper_bound
        lines.append(f"instance seed {seed}: upper bound {ub:.2f}")
        for r in sub:
            star = "*" if ub - r.mean_reward <= NEAR_OPTIMAL_FRACTION * ub else " "
            norm = f"{r.normalized:8.3f}" if not np.isnan(r.normalized) else "     n/a"
            lines.append(f"  {star} {r.policy:18s} {r.mean_reward:10.2f} "
                         f"+- {r.ci95:7.2f}   normalized {norm}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    return path


def _dump_trajectories(config, instances):
    path = os.path.join(config.out_dir, "trajectories.jsonl")
    with open(path, "w") as fh:
        for seed, instance in instances.items():
            for name in config.policies:
                policy = make_policy(name)
                policy.prepare(instance)
                for episode in range(config.episodes):
                    result = run_episode(instance, policy,
                                         config.base_seed + episode, record=True)
                    for t, arm, state, action, reward in result.trajectory:
                        fh.write(json.dumps({
                            "instance_seed": seed, "policy": name,
                            "episode": episode, "t": t, "arm": arm,
                            "state": state, "action": action, "reward": reward,
                        }) + "\n")
    return path


def sweep_rho(config: ExperimentConfig, rho_list, evaluate_fn=_evaluate_policy):
    """Optimality-gap decay against the replication factor.

    Evaluates the first configured policy at each rho (ascending), reports
    the per-arm gap (upper_bound - mean) / (rho * N) and the normalized gap
    1 - mean / upper_bound, and fits a log-log slope of the normalized gap
    against rho.
    """
    if list(rho_list) != sorted(rho_list):
        raise ConfigError("rho_list must be ascending")
    policy_name = config.policies[0]
    rows = []
    for rho in rho_list:
        inst = make_instance(config.domain_spec(config.instance_seeds[0]),
                             budget=config.budget, rho=int(rho),
                             horizon=config.horizon)
        ub = lp.upper_bound(inst)
        summary = evaluate_fn(inst, policy_name, config.episodes, config.base_seed)
        n_arms = inst.n_arms
        rows.append({
            "rho": int(rho),
            "gap": (ub - summary.mean) / n_arms,
            "ci": summary.half_width / n_arms,
            "normalized_gap": 1.0 - summary.mean / ub,
        })
    slope = fit_loglog_slope([r["rho"] for r in rows],
                             [r["normalized_gap"] for r in rows])
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "gap_curve.csv")
    with open(path, "w") as fh:
        fh.write("rho,gap,ci,normalized_gap\n")
        for r in rows:
            fh.write(f"{r['rho']},{_fmt(r['gap'])},{_fmt(r['ci'])},"
                     f"{_fmt(r['normalized_gap'])}\n")
        fh.write(f"# loglog_slope={_fmt(slope)}\n")
    return rows, slope


def fit_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) vs log(x), ignoring non-positive gaps."""
    pts = [(x, y) for x, y in zip(xs, ys) if y > 0]
    if len(pts) < 2:
        return float("nan")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def time_policies(config: ExperimentConfig):
    """Per-policy wall-clock statistics over >= 3 instance draws.

    Wall time covers index/LP precomputation plus all per-step selection
    calls, matching the evaluation timing convention.
    """
    if "spi" not in config.policies or not any(
        p.startswith("whittle") for p in config.policies
    ):
        raise ConfigError("timing comparison needs spi and a whittle variant")
    seeds = list(config.instance_seeds)
    while len(seeds) < 3:
        seeds.append((seeds[-1] if seeds else 0) + 1)
    stats = []
    for name in config.policies:
        clocks = []
        for seed in seeds:
            instance = config.instance(seed)
            policy = make_policy(name)
            t0 = time.perf_counter()
            policy.prepare(instance)
            prep = time.perf_counter() - t0
            select_seconds = 0.0
            for episode in range(config.episodes):
                result = run_episode(instance, policy, config.base_seed + episode)
                select_seconds += result.select_seconds
            clocks.append((prep + select_seconds) * 1e3)
        clocks = np.array(clocks)
        stats.append({"policy": name, "mean_ms": float(clocks.mean()),
                      "std_ms": float(clocks.std(ddof=1)) if len(clocks) > 1 else 0.0})
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "timing.csv")
    with open(path, "w") as fh:
        fh.write("policy,mean_ms,std_ms\n")
        for s in stats:
            fh.write(f"{s['policy']},{_fmt(s['mean_ms'])},{_fmt(s['std_ms'])}\n")
    return stats
