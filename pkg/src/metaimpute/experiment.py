"""Simulation study driver: conditions x methods x replications.

Seed schedule
-------------
``rep_seed = SeedSequence([master_seed, rep]).generate_state(1)[0]`` and from
it four stage streams ``SeedSequence([rep_seed, stage])`` with stage 0 for
data generation, 1 for the missingness draw, 2 for fold assignments and 3
for imputers.  The stage seeds depend on the replication only, so every
method within a replication sees identical train and test data and the
identical missing rows.
"""
from __future__ import annotations

import csv
import enum
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import impute, metrics, simgen, staplr
from .errors import EmptyInput
from .impute import Algorithm, ImputationSpec, IncompleteMatrix, Level, PmmStrategy
from .staplr import StackedModel, StaplrConfig

FIELDS = ("condition_fraction", "condition_missing_view", "condition_noise_view", "method",
          "rep", "seed", "accuracy", "msep", "deviance", "prop_correct", "tpr", "fpr", "fdr",
          "log_seconds", "status", "error_tag")
METRIC_FIELDS = ("accuracy", "msep", "deviance", "prop_correct", "tpr", "fpr", "fdr",
                 "log_seconds")
THREADS_ENV = "METAIMPUTE_THREADS"


class MethodId(enum.Enum):
    CDA = "CDA"
    CCA = "CCA"
    MI = "MI"
    MF = "MF"
    mMI = "mMI"
    mMF = "mMF"
    mPMM = "mPMM"
    cvPMM = "cvPMM"


ALL_METHODS = tuple(MethodId)

_SPECS = {
    MethodId.MI: ImputationSpec(Algorithm.MEAN, Level.FEATURE),
    MethodId.MF: ImputationSpec(Algorithm.MISSFOREST, Level.FEATURE),
    MethodId.mMI: ImputationSpec(Algorithm.MEAN, Level.META),
    MethodId.mMF: ImputationSpec(Algorithm.MISSFOREST, Level.META),
    MethodId.mPMM: ImputationSpec(Algorithm.PMM, Level.META, pmm_strategy=PmmStrategy.SINGLE_Z),
    MethodId.cvPMM: ImputationSpec(Algorithm.PMM, Level.META, pmm_strategy=PmmStrategy.MULTI_Z),
}


@dataclass(frozen=True)
class Condition:
    missing_fraction: float
    missing_view: str  # "smallest" | "largest"
    noise_view: str

    def __post_init__(self):
        if self.missing_fraction not in (0.5, 0.9):
            raise ValueError(f"missing fraction must be 0.5 or 0.9, got {self.missing_fraction}")
        for side in (self.missing_view, self.noise_view):
            if side not in ("smallest", "largest"):
                raise ValueError(f"view position must be smallest or largest, got {side!r}")

    @staticmethod
    def view_index(side, view_sizes):
        sizes = np.asarray(view_sizes)
        return int(np.argmin(sizes) if side == "smallest" else np.argmax(sizes))

    @property
    def key(self):
        return (self.missing_fraction, self.missing_view, self.noise_view)

    def label(self):
        return f"{int(round(self.missing_fraction * 100))}:{self.missing_view}:{self.noise_view}"


ALL_CONDITIONS = tuple(Condition(f, m, s) for f, m, s in
                       product((0.5, 0.9), ("smallest", "largest"), ("smallest", "largest")))


def parse_conditions(tokens):
    """``all``, a fraction (``50``/``90``) or ``fraction:missing:noise``."""
    out = []
    for tok in tokens:
        tok = tok.strip()
        if tok == "all":
            out.extend(ALL_CONDITIONS)
            continue
        parts = tok.split(":")
        frac = float(parts[0])
        frac = frac / 100.0 if frac > 1 else frac
        if len(parts) == 1:
            out.extend(c for c in ALL_CONDITIONS if c.missing_fraction == frac)
        elif len(parts) == 3:
            out.append(Condition(frac, parts[1], parts[2]))
        else:
            raise ValueError(f"cannot parse condition {tok!r}")
    seen, unique = set(), []
    for c in out:
        if c.key not in seen:
            seen.add(c.key)
            unique.append(c)
    return unique


@dataclass(frozen=True)
class ExperimentRecord:
    condition: Condition
    method: MethodId
    rep: int
    seed: int
    accuracy: float = math.nan
    msep: float = math.nan
    deviance: float = math.nan
    prop_correct: float = math.nan
    tpr: Optional[float] = None
    fpr: Optional[float] = None
    fdr: float = math.nan
    log_seconds: float = math.nan
    status: str = "ok"
    error_tag: str = ""

    @property
    def sort_key(self):
        return (ALL_CONDITIONS.index(self.condition) if self.condition in ALL_CONDITIONS
                else len(ALL_CONDITIONS), self.condition.key, ALL_METHODS.index(self.method),
                self.rep)

    def to_row(self):
        def fmt(x):
            if x is None or (isinstance(x, float) and math.isnan(x)):
                return "NA"
            return repr(float(x))
        c = self.condition
        return {
            "condition_fraction": repr(c.missing_fraction),
            "condition_missing_view": c.missing_view,
            "condition_noise_view": c.noise_view,
            "method": self.method.value,
            "rep": str(self.rep),
            "seed": str(self.seed),
            **{k: fmt(getattr(self, k)) for k in METRIC_FIELDS},
            "status": self.status,
            "error_tag": self.error_tag,
        }

    @classmethod
    def from_row(cls, row):
        def num(s):
            return math.nan if s in ("", "NA") else float(s)
        def opt(s):
            return None if s in ("", "NA") else float(s)
        return cls(
            Condition(float(row["condition_fraction"]), row["condition_missing_view"],
                      row["condition_noise_view"]),
            MethodId(row["method"]), int(row["rep"]), int(row["seed"]),
            num(row["accuracy"]), num(row["msep"]), num(row["deviance"]),
            num(row["prop_correct"]), opt(row["tpr"]), opt(row["fpr"]), num(row["fdr"]),
            num(row["log_seconds"]), row["status"], row.get("error_tag", "") or "")


# --------------------------------------------------------------------- seeds

def replication_seed(master_seed, rep):
    return int(np.random.SeedSequence([int(master_seed), int(rep)]).generate_state(1)[0])


def stage_seed(rep_seed, stage):
    return int(np.random.SeedSequence([int(rep_seed), int(stage)]).generate_state(1)[0])


GEN, MISSING, FOLDS, IMPUTER = range(4)


# ---------------------------------------------------------------- one replication

def _fit_method(method, train, config, fold_seed, imputer_seed):
    if method in (MethodId.CDA, MethodId.CCA):
        data = impute.complete_cases(train) if method is MethodId.CCA else train
        return staplr.fit_stacked(data, config, fold_seed)
    spec = replace(_SPECS[method], seed=imputer_seed)
    if spec.level is Level.FEATURE:
        return staplr.fit_stacked(impute.impute_features(train, spec), config, fold_seed)
    completed = impute.impute_meta(train, spec, config, fold_seed)
    base = staplr.fit_base_learners(train, config, fold_seed)
    meta = staplr.fit_meta(completed.z, train.y, config, fold_seed)
    return StackedModel(base, meta, train.layout)


@dataclass(frozen=True)
class ReplicationData:
    complete: staplr.MultiViewDataset
    incomplete: staplr.MultiViewDataset
    test: staplr.MultiViewDataset
    truth: simgen.GroundTruth


def replication_data(condition, rep_seed, preset="desk", sim_overrides=None):
    """Train (with and without the missing view), test and truth for one replication."""
    sim = simgen.preset(preset, **(sim_overrides or {}))
    sizes = sim.view_sizes
    sim = replace(sim, seed=stage_seed(rep_seed, GEN),
                  noise_view=Condition.view_index(condition.noise_view, sizes))
    train, test, truth = simgen.gen_dataset(sim)
    plan = simgen.MissingnessPlan(Condition.view_index(condition.missing_view, sizes),
                                  condition.missing_fraction, stage_seed(rep_seed, MISSING))
    return ReplicationData(train, simgen.inject_missingness(train, plan), test, truth)


def run_replication(condition, method, rep_seed, preset="desk", rep=0, config=None,
                    sim_overrides=None):
    """Generate, (mask), impute, fit, evaluate; failures become records."""
    method = MethodId(method)
    config = config or StaplrConfig()
    base = ExperimentRecord(condition, method, rep, int(rep_seed))
    try:
        data = replication_data(condition, rep_seed, preset, sim_overrides)
        train = data.complete if method is MethodId.CDA else data.incomplete
        start = time.perf_counter()
        model = _fit_method(method, train, config, stage_seed(rep_seed, FOLDS),
                            stage_seed(rep_seed, IMPUTER))
        elapsed = time.perf_counter() - start
        p_hat = model.predict_proba(data.test.X)
        pred = metrics.evaluate_predictions(p_hat, data.test.y, data.truth.p_test)
        sel = metrics.selection_eval(model.selected_views(), data.truth.signal_views)
        return replace(base, accuracy=pred.accuracy, msep=pred.msep, deviance=pred.deviance,
                       prop_correct=sel.proportion_correct, tpr=sel.tpr, fpr=sel.fpr,
                       fdr=sel.fdr, log_seconds=metrics.log_runtime(elapsed))
    except Exception as exc:  # recorded, never retried
        tag = getattr(exc, "tag", type(exc).__name__)
        return replace(base, status="failed", error_tag=tag)


# ----------------------------------------------------------------------- grid

def _warm_up():
    """Load compiled kernels once so that no timed section pays for it."""
    from .forest import fit_forest
    from .glm import Penalty, fit_penalized_logistic
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [3.0, 0.0]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    for pen in Penalty:
        fit_penalized_logistic(X, y, pen, 0.1)
    fit_penalized_logistic(np.tile(X, 2), y, Penalty.RIDGE, 0.1)
    fit_forest(X, y, n_trees=1).predict(X)


def _job(args):
    condition, method, rep, master_seed, preset, config, sim_overrides = args
    return run_replication(condition, method, replication_seed(master_seed, rep), preset,
                           rep, config, sim_overrides)


def write_records(records, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS)
        w.writeheader()
        for r in sorted(records, key=lambda r: r.sort_key):
            w.writerow(r.to_row())
    return path


def read_records(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ExperimentRecord.from_row(row) for row in reader]


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    return max(1, int(threads))


def run_grid(methods=ALL_METHODS, conditions=ALL_CONDITIONS, reps=1, preset="desk",
             threads=None, seed=0, out=None, resume=False, config=None, sim_overrides=None):
    """All (condition, method, rep) jobs; records come back in a fixed order.

    With ``out`` each finished record is appended to the CSV immediately and
    the file is rewritten sorted at the end.  ``resume`` keeps records already
    present in ``out`` and only runs the missing jobs.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    methods = [MethodId(m) for m in methods]
    jobs = [(c, m, r) for c in conditions for m in methods for r in range(reps)]
    done = {}
    if out is not None and resume and Path(out).exists():
        for rec in read_records(out):
            done[(rec.condition.key, rec.method, rec.rep)] = rec
    todo = [j for j in jobs if (j[0].key, j[1], j[2]) not in done]
    args = [(c, m, r, seed, preset, config, sim_overrides) for c, m, r in todo]

    fh = writer = None
    if out is not None:
        path = Path(out)
        fresh = not (resume and path.exists())
        fh = path.open("w" if fresh else "a", newline="", encoding="utf-8")
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        if fresh:
            writer.writeheader()
            fh.flush()
    try:
        threads = resolve_threads(threads)
        if threads == 1:
            _warm_up()
            results = map(_job, args)
        else:
            pool = ProcessPoolExecutor(max_workers=threads, initializer=_warm_up)
            results = pool.map(_job, args)
        for rec in results:
            done[(rec.condition.key, rec.method, rec.rep)] = rec
            if writer is not None:
                writer.writerow(rec.to_row())
                fh.flush()
        if threads != 1:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    records = sorted((done[(c.key, m, r)] for c, m, r in jobs), key=lambda r: r.sort_key)
    if out is not None:
        write_records(records, out)
    return records


# ------------------------------------------------------------------- summaries

SUMMARY_FIELDS = ("condition_fraction", "condition_missing_view", "condition_noise_view",
                  "method", "metric", "n", "n_failed", "mean", "sd", "min", "q1", "median",
                  "q3", "max")


@dataclass(frozen=True)
class SummaryRow:
    condition: Condition
    method: MethodId
    metric: str
    n: int
    n_failed: int
    mean: float
    sd: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def summarize(records: Sequence[ExperimentRecord]):
    """Per (condition, method, metric) statistics over successful records.

    Undefined values (e.g. tpr without signal views) are left out of ``n``.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.condition, r.method), []).append(r)
    rows = []
    for (cond, method), recs in sorted(groups.items(), key=lambda kv: kv[1][0].sort_key):
        ok = [r for r in recs if r.status == "ok"]
        failed = len(recs) - len(ok)
        for metric in METRIC_FIELDS:
            vals = np.array([getattr(r, metric) for r in ok
                             if getattr(r, metric) is not None
                             and not math.isnan(getattr(r, metric))], dtype=float)
            if vals.size:
                q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
                sd = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
                rows.append(SummaryRow(cond, method, metric, int(vals.size), failed,
                                       float(vals.mean()), sd, *map(float, q)))
            else:
                rows.append(SummaryRow(cond, method, metric, 0, failed, *([math.nan] * 7)))
    return rows


def write_summary(rows, path):
    def fmt(x):
        return "NA" if isinstance(x, float) and math.isnan(x) else repr(x)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for s in rows:
            c = s.condition
            w.writerow([repr(c.missing_fraction), c.missing_view, c.noise_view, s.method.value,
                        s.metric, s.n, s.n_failed, fmt(s.mean), fmt(s.sd), fmt(s.min),
                        fmt(s.q1), fmt(s.median), fmt(s.q3), fmt(s.max)])
    return Path(path)


def mean_table(rows, metric):
    """``{(condition_key, method): mean}`` for one metric."""
    return {(s.condition.key, s.method): s.mean for s in rows if s.metric == metric}


# ------------------------------------------------------------- PMM failure demo

@dataclass(frozen=True)
class DemoReport:
    seed: int
    small_eps: float
    large_eps: float
    ks_small: float
    ks_large: float
    imputed_small: np.ndarray
    imputed_large: np.ndarray
    observed: np.ndarray

    def text(self):
        return (f"seed {self.seed}: KS(imputed, observed) = {self.ks_small:.3f} with "
                f"stabilizer {self.small_eps:g}, {self.ks_large:.3f} with {self.large_eps:g}")


DEMO_N, DEMO_M, DEMO_MISSING = 200, 400, 50
DEMO_SMALL_EPS = 1e-6
DEMO_LARGE_EPS = ImputationSpec().ridge_eps


def appendix_a_demo(seed=0, small_eps=DEMO_SMALL_EPS, large_eps=DEMO_LARGE_EPS):
    """PMM on 200 x 400 independent normals with feature 1 missing for 50 rows.

    Feature 1 is imputed twice, with a small posterior stabilizer and with
    the package default, and each result is compared with the observed feature-1
    values by a two-sample Kolmogorov-Smirnov statistic.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    X = rng.standard_normal((DEMO_N, DEMO_M))
    missing = np.zeros_like(X, dtype=bool)
    missing[:DEMO_MISSING, 0] = True
    M = IncompleteMatrix(X, missing)
    observed = X[DEMO_MISSING:, 0]
    out = []
    for eps in (small_eps, large_eps):
        spec = ImputationSpec(Algorithm.PMM, Level.FEATURE, n_imputations=1, ridge_eps=eps,
                              seed=int(seed), allow_feature_pmm=True)
        imputed = impute.pmm_impute(M, spec)[0][:DEMO_MISSING, 0]
        out.append((imputed, float(stats.ks_2samp(imputed, observed).statistic)))
    (imp_s, ks_s), (imp_l, ks_l) = out
    return DemoReport(int(seed), small_eps, large_eps, ks_s, ks_l, imp_s, imp_l, observed)
