"""Experiment orchestration: configuration, trial cells, aggregation, result files."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baseline import altproj_lowrank_sparse, pca_truncate
from .covmodel import CovSpec, evaluate_trial, generate_instance, sample_covariance
from .markov import (
    MarkovPairSpec,
    build_structured_pair,
    empirical_frequency,
    plugin_transition,
    simulate_trajectory,
    transition_counts,
)
from .matcore import frob_norm, read_matrix, write_matrix
from .metrics import AGGREGATE_HEADER, METHODS, RESULTS_HEADER, MethodEstimate, MetricsRecord, score
from .seeding import derive_seed
from .transfer import (
    TransferConfig,
    estimate_source,
    incoherence_check,
    make_anchors,
    source_from_components,
    transfer_altproj,
)

log = logging.getLogger(__name__)

KINDS = ("covariance", "markov", "denoise-file")
FAILURE_THRESHOLD = 0.10

_COMMON = {
    "kind": str, "master_seed": int, "trials": int, "out": str, "jobs": int,
    "verbosity": int, "tolerance": float, "max_iterations": int,
    "incoherence_mu": float, "monotone": bool, "refine_projection": bool, "timing": bool,
}
_KEYS = {
    "covariance": {
        "p1": int, "r1": int, "n1": int, "p2": int, "delta_r": int, "delta_s": int,
        "s1": int, "n2_grid": "grid", "spike_scale": float, "noise_scale": float,
        "source_sparsity": int, "edit_budget": int, "methods": "methods",
    },
    "markov": {
        "p1": int, "p2": int, "rank": int, "rank_increment": int, "sparse_edits": int,
        "n1": int, "n2_grid": "grid",
    },
    "denoise-file": {
        "y2": str, "l1": str, "s1": str, "y1": str, "rank": int, "sparsity": int,
        "rank_increment": int, "edit_budget": int,
    },
}

MARKOV_DEFAULTS = {
    "p1": 5, "p2": 8, "rank": 2, "rank_increment": 1, "sparse_edits": 2,
    "n1": 100_000, "n2_grid": (2000, 8000, 32000), "trials": 20,
}


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_grid(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    parts = text.replace("{", " ").replace("}", " ").replace(",", " ").split()
    return tuple(int(x) for x in parts)


def _parse_methods(text) -> tuple:
    names = tuple(text) if isinstance(text, (list, tuple)) else tuple(text.replace(",", " ").split())
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise ValueError(f"methods must be a non-empty subset of {METHODS}")
    return tuple(m for m in METHODS if m in names)


def _convert(kind: str, key: str, value):
    types = {**_COMMON, **_KEYS[kind]}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} for experiment kind {kind!r}")
    typ = types[key]
    try:
        if typ == "grid":
            return _parse_grid(value)
        if typ == "methods":
            return _parse_methods(value)
        if typ is bool:
            return value if isinstance(value, bool) else _parse_bool(str(value))
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


@dataclass
class RunConfig:
    kind: str
    params: dict = field(default_factory=dict)
    out: str = "results"
    jobs: int = 1
    verbosity: int = 0
    master_seed: int = 0
    trials: int | None = None
    tolerance: float = 1e-8
    max_iterations: int = 100
    incoherence_mu: float | None = None
    monotone: bool = True
    refine_projection: bool = False
    timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be positive")
        for key in self.params:
            if key not in _KEYS[self.kind]:
                raise ConfigError(f"unknown key {key!r} for experiment kind {self.kind!r}")
        if self.kind == "denoise-file":
            self._check_denoise_inputs()

    def _check_denoise_inputs(self):
        p = self.params
        if "y2" not in p:
            raise ConfigError("denoise-file needs 'y2'")
        if "l1" not in p and "y1" not in p:
            raise ConfigError("denoise-file needs 'l1' (with optional 's1') or 'y1' with 'rank'")
        if "y1" in p and "l1" not in p and "rank" not in p:
            raise ConfigError("estimating the source from 'y1' needs 'rank'")
        for key in ("y2", "l1", "s1", "y1"):
            if key in p and not Path(p[key]).is_file():
                raise FileNotFoundError(f"input file for {key!r} not found: {p[key]}")

    @classmethod
    def from_mapping(cls, kind: str, values: dict) -> "RunConfig":
        if "kind" in values and values["kind"] != kind:
            raise ConfigError(f"config kind {values['kind']!r} does not match {kind!r}")
        converted = {k: _convert(kind, k, v) for k, v in values.items() if k != "kind"}
        top = {f.name for f in fields(cls)} - {"kind", "params"}
        kwargs = {k: v for k, v in converted.items() if k in top}
        params = {k: v for k, v in converted.items() if k not in top}
        return cls(kind=kind, params=params, **kwargs)

    def transfer_config(self, rank_increment: int, edit_budget: int) -> TransferConfig:
        return TransferConfig(rank_increment, edit_budget, self.tolerance, self.max_iterations,
                              self.incoherence_mu, self.monotone, self.refine_projection)

    def cov_spec(self) -> CovSpec:
        keys = {f.name for f in fields(CovSpec)}
        kwargs = {k: v for k, v in self.params.items() if k in keys}
        kwargs["master_seed"] = self.master_seed
        if self.trials is not None:
            kwargs["trials"] = self.trials
        return CovSpec(**kwargs)

    def markov_settings(self) -> dict:
        out = dict(MARKOV_DEFAULTS)
        out.update(self.params)
        if self.trials is not None:
            out["trials"] = self.trials
        grid = tuple(out["n2_grid"])
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ConfigError("n2_grid must be strictly increasing positive integers")
        out["n2_grid"] = grid
        return out


def parse_config_text(text: str, path: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; duplicate keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path, kind: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text(), str(path)) if path else {}
    if kind is None:
        kind = values.get("kind")
        if kind is None:
            raise ConfigError("config must set 'kind'")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig.from_mapping(kind, values)


@dataclass
class CellOutcome:
    n: int
    trial: int
    records: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    extra: list = field(default_factory=list)
    error: str | None = None


@dataclass
class ExperimentResult:
    experiment: str
    records: list
    aggregates: list
    traces: list
    extra: list
    failures: list
    total_cells: int

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.total_cells if self.total_cells else 0.0


def _timed(fn, timing: bool):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0) * 1000.0 if timing else 0.0


def _covariance_cell(job) -> CellOutcome:
    spec, cfg, n2, trial = job
    cell = CellOutcome(n2, trial)
    try:
        inst = generate_instance(spec, trial)
        y1 = sample_covariance(inst.sigma1, spec.n1, derive_seed(spec.master_seed, 2, trial))
        y2 = sample_covariance(inst.sigma2, n2, derive_seed(spec.master_seed, 3, n2, trial))
        src_sparsity = cfg.params.get("source_sparsity", 0)
        budget = cfg.params.get("edit_budget",
                                spec.delta_s if src_sparsity else spec.s1 + spec.delta_s)

        def run_transfer():
            src = estimate_source(y1, spec.r1, src_sparsity, cfg.tolerance, cfg.max_iterations)
            basis, s0 = make_anchors(src, spec.p2, spec.p2, spec.delta_r)
            return transfer_altproj(y2, basis, s0, cfg.transfer_config(spec.delta_r, budget))

        methods = cfg.params.get("methods", METHODS)
        estimates = {}
        if "transfer" in methods:
            tr, ms = _timed(run_transfer, cfg.timing)
            estimates["transfer"] = MethodEstimate(tr.l_hat2.value, tr.s_hat2, tr.iterations,
                                                   tr.converged, ms, tuple(tr.objective_trace))
        if "nontransfer" in methods:
            base, ms = _timed(lambda: altproj_lowrank_sparse(
                y2, spec.r2, spec.s2, cfg.tolerance, cfg.max_iterations), cfg.timing)
            estimates["nontransfer"] = MethodEstimate(base.l_hat, base.s_hat, base.iterations,
                                                      base.converged, ms, tuple(base.objective_trace))
        if "pca" in methods:
            pca, ms = _timed(lambda: pca_truncate(y2, spec.r2), cfg.timing)
            estimates["pca"] = MethodEstimate(pca, np.zeros_like(pca), 1, True, ms)
        cell.records = evaluate_trial(inst, estimates, n2, trial)
        cell.traces = {m: list(e.objective_trace) for m, e in estimates.items() if e.objective_trace}
    except Exception as exc:  # noqa: BLE001 - a failed trial is recorded, the run continues
        log.warning("covariance cell n=%d trial=%d failed: %s", n2, trial, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _markov_cell(job) -> CellOutcome:
    settings, cfg, pair, n2, trial = job
    cell = CellOutcome(n2, trial)
    seed = cfg.master_seed
    try:
        p1, p2 = settings["p1"], settings["p2"]
        r1, dr, ds = settings["rank"], settings["rank_increment"], settings["sparse_edits"]
        traj1 = simulate_trajectory(pair.source, settings["n1"] + 1, derive_seed(seed, 11, trial))
        src = estimate_source(empirical_frequency(traj1, p1), r1, 0)
        traj2 = simulate_trajectory(pair.target, n2 + 1, derive_seed(seed, 12, n2, trial))
        counts = transition_counts(traj2, p2)
        f_hat = counts / n2

        def run_transfer():
            basis, s0 = make_anchors(src, p2, p2, dr)
            return transfer_altproj(f_hat, basis, s0, cfg.transfer_config(dr, ds))

        tr, t_ms = _timed(run_transfer, cfg.timing)
        base, b_ms = _timed(lambda: altproj_lowrank_sparse(
            f_hat, r1 + dr, ds, cfg.tolerance, cfg.max_iterations), cfg.timing)
        fits = {
            "transfer": MethodEstimate(tr.l_hat2.value, tr.s_hat2, tr.iterations, tr.converged, t_ms),
            "nontransfer": MethodEstimate(base.l_hat, base.s_hat, base.iterations, base.converged, b_ms),
        }
        p_true = pair.target.transition
        for method, est in fits.items():
            cell.records.append(score("markov", method, n2, trial, est, pair.l2, pair.s2, pair.u2))
            f_est = est.l_hat + est.s_hat
            p_est = plugin_transition(f_est)
            cell.extra.append({
                "method": method, "n": n2, "trial": trial,
                "err_F_fro": frob_norm(f_est - pair.f2),
                "err_P_fro": frob_norm(p_est - p_true),
                "err_P_row_l1": float(np.max(np.sum(np.abs(p_est - p_true), axis=1))),
                "row_stochastic": bool(np.all(p_est >= 0)
                                       and np.max(np.abs(p_est.sum(axis=1) - 1.0)) <= 1e-12),
                "zero_mass_rows": int(np.count_nonzero(f_est.sum(axis=1) <= 0)),
                "freq_exact": bool(int(counts.sum()) == n2),
                "freq_sum_error": math.fsum(f_hat.ravel().tolist()) - 1.0,
            })
        cell.traces = {"transfer": list(tr.objective_trace), "nontransfer": list(base.objective_trace)}
    except Exception as exc:  # noqa: BLE001
        log.warning("markov cell n=%d trial=%d failed: %s", n2, trial, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _run_cells(worker, jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(worker, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def aggregate(records: list) -> list:
    """Per (method, n): mean and standard error of err_L_fro and sin_theta."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.method, rec.n), []).append(rec)
    rows = []
    for (method, n), recs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        err = np.array([r.err_L_fro for r in recs])
        sin = np.array([r.sin_theta for r in recs])
        rows.append({
            "method": method, "n": n,
            "mean_err_L": float(np.mean(err)), "stderr_err_L": _stderr(err),
            "mean_sin_theta": float(np.mean(sin)), "stderr_sin_theta": _stderr(sin),
            "trials": len(recs),
        })
    return rows


def _stderr(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def _collect(experiment: str, outcomes: list, total: int) -> ExperimentResult:
    records, traces, extra, failures = [], [], [], []
    for cell in outcomes:
        if cell.error is not None:
            failures.append({"n": cell.n, "trial": cell.trial, "error": cell.error})
            continue
        records.extend(cell.records)
        extra.extend(cell.extra)
        for method, trace in cell.traces.items():
            traces.append({"n": cell.n, "trial": cell.trial, "method": method, "trace": trace})
    records.sort(key=MetricsRecord.sort_key)
    extra.sort(key=lambda r: (r["n"], r["trial"], METHODS.index(r["method"])))
    failures.sort(key=lambda r: (r["n"], r["trial"]))
    return ExperimentResult(experiment, records, aggregate(records), traces, extra, failures, total)


def run_covariance_experiment(cfg: RunConfig) -> ExperimentResult:
    spec = cfg.cov_spec()
    jobs = [(spec, cfg, n2, t) for n2 in spec.n2_grid for t in range(spec.trials)]
    log.info("covariance: %d cells, jobs=%d", len(jobs), cfg.jobs)
    return _collect("covariance", _run_cells(_covariance_cell, jobs, cfg.jobs), len(jobs))


def run_markov_experiment(cfg: RunConfig) -> ExperimentResult:
    settings = cfg.markov_settings()
    grid = settings["n2_grid"]
    pair = build_structured_pair(MarkovPairSpec(
        settings["p1"], settings["p2"], settings["rank"], settings["rank_increment"],
        settings["sparse_edits"], settings["n1"], grid[-1], cfg.master_seed))
    log.info("markov: structured pair built on attempt %d, structure violation %.3g, "
             "coherence %.3f, sparse-change condition %s", pair.attempt, pair.structure_violation,
             pair.coherence, "holds" if pair.sparse_change_ok else "fails")
    jobs = [(settings, cfg, pair, n2, t) for n2 in grid for t in range(settings["trials"])]
    return _collect("markov", _run_cells(_markov_cell, jobs, cfg.jobs), len(jobs))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_results(result: ExperimentResult, out_dir) -> dict:
    """Write the results, aggregate and auxiliary files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "aggregate": out / "aggregate.csv"}
    paths["results"].write_text(_csv_text(RESULTS_HEADER, [r.as_row() for r in result.records]))
    paths["aggregate"].write_text(_csv_text(
        AGGREGATE_HEADER, [[_fmt(row[k]) for k in AGGREGATE_HEADER] for row in result.aggregates]))
    if result.extra:
        header = list(result.extra[0])
        paths["transition"] = out / "transition_errors.csv"
        paths["transition"].write_text(_csv_text(header, [[_fmt(r[k]) for k in header] for r in result.extra]))
    fail_path = out / "failures.csv"
    if result.failures:
        paths["failures"] = fail_path
        fail_path.write_text(_csv_text(["n", "trial", "error"],
                                       [[r["n"], r["trial"], r["error"]] for r in result.failures]))
    elif fail_path.exists():
        fail_path.unlink()
    return paths


def read_results(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def verify_aggregates(results_path, aggregate_path, rel_tol: float = 1e-12) -> list:
    """Recompute per-(method, n) means from the results file; returns mismatch messages."""
    groups: dict = {}
    for row in read_results(results_path):
        groups.setdefault((row["method"], int(row["n"])), []).append(row)
    problems = []
    with open(aggregate_path, newline="") as fh:
        agg = list(csv.DictReader(fh))
    seen = set()
    for row in agg:
        key = (row["method"], int(row["n"]))
        seen.add(key)
        rows = groups.get(key)
        if not rows:
            problems.append(f"aggregate row {key} has no trials")
            continue
        err = math.fsum(float(r["err_L_fro"]) for r in rows) / len(rows)
        sin = math.fsum(float(r["sin_theta"]) for r in rows) / len(rows)
        if int(row["trials"]) != len(rows):
            problems.append(f"{key}: trials {row['trials']} != {len(rows)}")
        if not math.isclose(float(row["mean_err_L"]), err, rel_tol=rel_tol, abs_tol=1e-15):
            problems.append(f"{key}: mean_err_L {row['mean_err_L']} != {err!r}")
        if not math.isclose(float(row["mean_sin_theta"]), sin, rel_tol=rel_tol, abs_tol=1e-15):
            problems.append(f"{key}: mean_sin_theta {row['mean_sin_theta']} != {sin!r}")
    for key in set(groups) - seen:
        problems.append(f"no aggregate row for {key}")
    return problems


def denoise_file(cfg: RunConfig) -> dict:
    """Transfer-denoise a target matrix read from disk; writes L_hat, S_hat and a report."""
    p = cfg.params
    y2 = read_matrix(p["y2"])
    if "l1" in p:
        l1 = read_matrix(p["l1"])
        s1 = read_matrix(p["s1"]) if "s1" in p else np.zeros_like(l1)
        src = source_from_components(l1, s1, p.get("rank"))
    else:
        src = estimate_source(read_matrix(p["y1"]), p["rank"], p.get("sparsity", 0),
                              cfg.tolerance, cfg.max_iterations)
    tcfg = cfg.transfer_config(p.get("rank_increment", 0), p.get("edit_budget", 0))
    basis, s0 = make_anchors(src, y2.shape[0], y2.shape[1], tcfg.rank_increment)
    res = transfer_altproj(y2, basis, s0, tcfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "L_hat.txt", res.l_hat2.value)
    write_matrix(out / "S_hat.txt", res.s_hat2)
    mu = cfg.incoherence_mu
    passed, measured = incoherence_check(res.l_hat2, mu if mu is not None else math.inf)
    report = {
        "iterations": res.iterations,
        "converged": res.converged,
        "objective_trace": res.objective_trace,
        "safeguard_steps": res.safeguard_steps,
        "anchor_rank": basis.anchor_rank,
        "rank_increment": tcfg.rank_increment,
        "edit_budget": tcfg.edit_budget,
        "coherence": measured,
        "incoherence_mu": mu,
        "incoherence_ok": passed if mu is not None else None,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return {"result": res, "report": report, "out": out}


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
