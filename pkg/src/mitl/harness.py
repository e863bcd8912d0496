"""Pipeline composition, evaluation protocols and result statistics.

A pipeline is ``alignment -> spatial filters -> log-variance features ->
optional feature selection -> classifier``. :func:`run_pipeline` evaluates one
pipeline for one target domain and one draw of labeled target trials;
:func:`sweep` repeats that over target subjects, labeled-set sizes and random
repeats, sharing each draw across all configurations so that comparisons are
paired.
"""
import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import special

from .alignment import align_covariances, reference_from_covariances, trial_covariances
from .classify import WarParams, clda_fit, lda_fit, lda_predict, war_fit, war_predict
from .exceptions import ConfigInfeasible, LengthMismatch, MissingBaseline, TooShort
from .featsel import crelieff, relieff, select_top
from .spatial import features_from_covs, fit_filters_from_covs

__all__ = [
    "PipelineConfig",
    "RunResult",
    "TTestReport",
    "SummaryRow",
    "Domain",
    "prepare",
    "full_grid",
    "featsel_configs",
    "cell_seed",
    "sample_labeled",
    "transfer_tasks",
    "run_pipeline",
    "pipeline_features",
    "PipelineFeatures",
    "sweep",
    "feature_selection_experiment",
    "summarize",
    "paired_ttest",
    "write_results",
    "read_results",
    "RESULT_COLUMNS",
]

log = logging.getLogger(__name__)

ALIGNS = ("none", "ea", "ps")
SPATIALS = ("csp", "ccsp", "rcsp")
SELECTS = ("none", "relieff", "crelieff")
CLFS = ("lda", "clda", "war", "owar")
MODES = ("offline", "online")
TRANSFERS = ("cross_subject", "cross_session")
DEFAULT_NL_GRID = (0, 4, 8, 12, 16, 20)
RESULT_COLUMNS = ("dataset", "target_subject", "config", "align", "spatial", "select", "clf",
                  "mode", "transfer", "n_l", "repeat", "seed", "accuracy")

_CLF_NAMES = {"lda": "LDA", "clda": "CLDA", "war": "wAR", "owar": "OwAR"}
_SELECT_NAMES = {"relieff": "ReliefF", "crelieff": "CReliefF"}


@dataclass(frozen=True)
class PipelineConfig:
    """One cell of the algorithm grid.

    Field names double as the JSON config-file schema.
    """

    align: str = "none"
    spatial: str = "csp"
    n_filters: int = 3
    beta: float = 0.1
    gamma: float = 0.1
    select: str = "none"
    n_select: int = 6
    clf: str = "lda"
    wt: float = 10.0
    lambda1: float = 0.1
    lambda2: float = 10.0
    lambda3: float = 10.0
    kernel: str = "linear"
    n_em_iters: int = 5
    mode: str = "offline"
    transfer: str = "cross_subject"
    stratified: bool = False
    relief_k: int = 10
    relief_iters: int = 100
    relief_replace: bool = True
    relief_range_normalize: bool = True
    trace_normalize: bool = True
    label: str = None

    def __post_init__(self):
        for name, allowed in (("align", ALIGNS), ("spatial", SPATIALS), ("select", SELECTS),
                              ("clf", CLFS), ("mode", MODES), ("transfer", TRANSFERS)):
            value = getattr(self, name)
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
        if self.mode == "online" and self.clf == "war":
            raise ValueError("wAR uses unlabeled target trials; use 'owar' in online mode")
        if self.select != "none" and not 1 <= self.n_select <= 2 * self.n_filters:
            raise ValueError("n_select must lie in [1, 2 * n_filters]")

    @property
    def name(self):
        if self.label:
            return self.label
        parts = []
        if self.align != "none":
            parts.append(self.align.upper())
        sp = self.spatial.upper()
        if self.select != "none" or self.n_filters != 3:
            sp += str(2 * self.n_filters)
        parts.append(sp)
        if self.select != "none":
            parts.append(f"{_SELECT_NAMES[self.select]}{self.n_select}")
        parts.append(_CLF_NAMES[self.clf])
        return "-".join(parts)

    @property
    def war_params(self):
        return WarParams(self.wt, self.lambda1, self.lambda2, self.lambda3, self.kernel,
                         None, self.n_em_iters)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        data = dict(data)
        if "transfer" in data:
            data["transfer"] = data["transfer"].replace("-", "_")
        return cls(**data)

    @classmethod
    def from_name(cls, name, **overrides):
        """Parse grid names such as ``"EA-RCSP-wAR"`` or ``"CSP-LDA"``."""
        tokens = name.split("-")
        kw = {}
        if tokens[0].lower() in ("ea", "ps"):
            kw["align"] = tokens.pop(0).lower()
        kw["spatial"] = tokens.pop(0).lower()
        kw["clf"] = tokens.pop(-1).lower()
        if tokens:
            raise ValueError(f"cannot parse config name {name!r}")
        kw.update(overrides)
        return cls(**kw)


def full_grid(mode="offline", transfer="cross_subject", **overrides):
    """The 27 align x spatial x classifier pipelines.

    Online grids use OwAR in place of wAR; cross-session grids lower the
    target weight ``wt`` to 2.
    """
    clfs = ("lda", "clda", "owar" if mode == "online" else "war")
    base = {"mode": mode, "transfer": transfer}
    if transfer == "cross_session":
        base["wt"] = 2.0
    base.update(overrides)
    return [PipelineConfig(align=a, spatial=s, clf=c, **base)
            for a in ALIGNS for s in SPATIALS for c in clfs]


def featsel_configs(aligns=("none", "ea"), spatials=("csp", "rcsp"), clfs=("lda", "war"),
                    n_filters=10, n_select=6, **overrides):
    """Arms of the feature-selection comparison.

    For every (align, spatial, clf) combination: the standard 6-filter
    pipeline, and ``2 * n_filters`` features reduced to ``n_select`` by ReliefF
    and by CReliefF.
    """
    configs = []
    for a in aligns:
        for s in spatials:
            for c in clfs:
                base = PipelineConfig(align=a, spatial=s, clf=c, **overrides)
                configs.append(base)
                for sel in ("relieff", "crelieff"):
                    configs.append(replace(base, n_filters=n_filters, select=sel,
                                           n_select=n_select))
    return configs


@dataclass(frozen=True)
class RunResult:
    dataset: str
    target_subject: str
    config: str
    align: str
    spatial: str
    select: str
    clf: str
    mode: str
    transfer: str
    n_l: int
    repeat: int
    seed: int
    accuracy: float

    @property
    def key(self):
        return (self.dataset, self.target_subject, self.n_l, self.repeat)


@dataclass(frozen=True)
class TTestReport:
    t: float
    df: int
    p: float
    significant: bool


@dataclass(frozen=True)
class SummaryRow:
    config: str
    mean: float
    std: float
    improvement: float
    n: int
    ttest: TTestReport = None


# ---------------------------------------------------------------------------
# data preparation

@dataclass
class Domain:
    """Trial covariances of one subject/session with cached alignments."""

    covs: np.ndarray
    y: np.ndarray
    subject_id: str
    session_id: str = "0"
    _aligned: dict = field(default_factory=dict, repr=False)

    def aligned(self, method):
        if method == "none":
            return self.covs
        if method not in self._aligned:
            ref = reference_from_covariances(self.covs, method)
            self._aligned[method] = align_covariances(self.covs, ref)
        return self._aligned[method]


def prepare(trialset):
    if isinstance(trialset, Domain):
        return trialset
    return Domain(trial_covariances(trialset.X), np.asarray(trialset.y), str(trialset.subject_id),
                  str(trialset.session_id))


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def cell_seed(base_seed, subject_id, n_l, repeat):
    """Deterministic 63-bit seed for one (subject, N_l, repeat) cell."""
    subject_hash = int.from_bytes(
        hashlib.blake2b(str(subject_id).encode("utf-8"), digest_size=8).digest(), "little")
    h = _splitmix64(int(base_seed) & 0xFFFFFFFFFFFFFFFF)
    for part in (subject_hash, int(n_l), int(repeat)):
        h = _splitmix64(h ^ (part & 0xFFFFFFFFFFFFFFFF))
    return h >> 1


def sample_labeled(y, n_l, rng, stratified=False):
    """Indices of ``n_l`` target trials designated as labeled.

    Uniform without replacement; when ``n_l >= 2`` draws lacking one class
    are redrawn. ``stratified`` takes ``n_l // 2`` per class instead (the
    extra trial of an odd ``n_l`` goes to a random class).
    """
    y = np.asarray(y)
    n = y.shape[0]
    if not 0 <= n_l < n:
        raise ConfigInfeasible(f"cannot designate {n_l} of {n} target trials as labeled")
    if n_l == 0:
        return np.zeros(0, dtype=int)
    if stratified:
        pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == -1)
        half = n_l // 2
        first = rng.integers(2)
        counts = [half + (n_l % 2) * (first == 0), half + (n_l % 2) * (first == 1)]
        if counts[0] > len(pos) or counts[1] > len(neg):
            raise ConfigInfeasible("not enough trials per class for stratified sampling")
        idx = np.concatenate([rng.choice(pos, counts[0], replace=False),
                              rng.choice(neg, counts[1], replace=False)])
        return np.sort(idx)
    if n_l >= 2 and len(np.unique(y)) < 2:
        raise ConfigInfeasible("target set holds a single class")
    while True:
        idx = rng.choice(n, n_l, replace=False)
        if n_l < 2 or len(np.unique(y[idx])) == 2:
            return np.sort(idx)


def _check_feasible(config, n_l):
    if n_l == 0:
        if config.spatial == "csp":
            raise ConfigInfeasible("no CSP filters can be trained without labeled target trials")
        if config.clf == "lda":
            raise ConfigInfeasible("no LDA classifier can be trained without labeled target trials")
        if config.select == "relieff":
            raise ConfigInfeasible("ReliefF needs labeled target trials")
        if config.mode == "online" and config.align != "none":
            raise ConfigInfeasible("online alignment needs labeled target trials")


# ---------------------------------------------------------------------------
# single pipeline

@dataclass
class PipelineFeatures:
    """Classifier inputs of one pipeline run.

    ``selected`` lists the kept feature columns (None without selection).
    """

    source: np.ndarray
    source_y: np.ndarray
    labeled: np.ndarray
    labeled_y: np.ndarray
    evaluation: np.ndarray
    evaluation_y: np.ndarray
    bank: object
    selected: np.ndarray = None


def pipeline_features(config, sources, target, labeled, rng):
    """Align, filter and (optionally) select features for one run.

    ``labeled`` indexes the target trials used for calibration; all other
    target trials form the evaluation set.
    """
    target = prepare(target)
    sources = [prepare(s) for s in sources]
    ev = np.setdiff1d(np.arange(target.y.shape[0]), labeled)

    # sources use their own references; the online target uses labeled trials only
    if config.align != "none" and config.mode == "online":
        ref = reference_from_covariances(target.covs[labeled], config.align)
        Ct = align_covariances(target.covs, ref)
    else:
        Ct = target.aligned(config.align)
    yt = target.y
    if sources:
        Cs = np.concatenate([s.aligned(config.align)[s.y != 0] for s in sources])
        ys = np.concatenate([s.y[s.y != 0] for s in sources])
    else:
        Cs, ys = np.zeros((0,) + Ct.shape[1:]), np.zeros(0, dtype=int)

    bank = fit_filters_from_covs(Ct[labeled], yt[labeled], Cs, ys, f=config.n_filters,
                                 method=config.spatial, beta=config.beta, gamma=config.gamma,
                                 normalize=config.trace_normalize)
    width = 2 * config.n_filters
    Fs = features_from_covs(Cs, bank) if len(Cs) else np.zeros((0, width))
    Fl = features_from_covs(Ct[labeled], bank) if len(labeled) else np.zeros((0, width))
    Fe = features_from_covs(Ct[ev], bank)
    out = PipelineFeatures(Fs, ys, Fl, yt[labeled], Fe, yt[ev], bank)

    if config.select != "none":
        sel_seed = int(rng.integers(2 ** 63))
        opts = dict(k=config.relief_k, n_iter=config.relief_iters, seed=sel_seed,
                    replace=config.relief_replace,
                    range_normalize=config.relief_range_normalize)
        if config.select == "relieff":
            weights = relieff(Fl, out.labeled_y, **opts)
        else:
            weights = crelieff(Fs, ys, Fl, out.labeled_y, **opts)
        keep = select_top(weights, config.n_select)
        out = replace(out, source=Fs[:, keep], labeled=Fl[:, keep], evaluation=Fe[:, keep],
                      selected=keep)
    return out


def run_pipeline(config, source_sets, target_set, n_l, seed, repeat=0, dataset=""):
    """Evaluate ``config`` on one target domain for one labeled-trial draw.

    ``source_sets`` may be TrialSets or :class:`Domain` objects; only their
    labeled trials enter supervised steps, all trials enter the alignment
    reference. ``target_set`` must be fully labeled: the drawn ``n_l`` trials
    form the labeled calibration set and the rest are scored.
    """
    _check_feasible(config, n_l)
    target = prepare(target_set)
    if np.any(target.y == 0):
        raise ValueError("target set must be fully labeled for evaluation")
    rng = np.random.default_rng(seed)
    lab = sample_labeled(target.y, n_l, rng, config.stratified)
    F = pipeline_features(config, source_sets, target, lab, rng)

    if config.clf == "lda":
        model = lda_fit(F.labeled, F.labeled_y)
        pred = lda_predict(model, F.evaluation)
    elif config.clf == "clda":
        model = clda_fit(F.source, F.source_y, F.labeled, F.labeled_y)
        pred = lda_predict(model, F.evaluation)
    else:
        unlabeled = F.evaluation if config.clf == "war" else None
        model = war_fit(F.source, F.source_y, F.labeled, F.labeled_y, unlabeled,
                        config.war_params)
        pred = war_predict(model, F.evaluation)

    accuracy = float(np.mean(pred == F.evaluation_y))
    return RunResult(dataset, target.subject_id, config.name, config.align, config.spatial,
                     config.select, config.clf, config.mode, config.transfer, int(n_l),
                     int(repeat), int(seed), accuracy)


# ---------------------------------------------------------------------------
# protocols

def transfer_tasks(sets, transfer):
    """List of ``(target_domain, source_domains)`` pairs."""
    by_subject = {}
    for s in sets:
        d = prepare(s)
        by_subject.setdefault(d.subject_id, []).append(d)
    for doms in by_subject.values():
        doms.sort(key=lambda d: d.session_id)
    subjects = sorted(by_subject)
    tasks = []
    if transfer == "cross_subject":
        if len(subjects) < 2:
            raise ValueError("cross-subject transfer needs at least two subjects")
        for subj in subjects:
            sources = [by_subject[o][0] for o in subjects if o != subj]
            tasks.append((by_subject[subj][0], sources))
    elif transfer == "cross_session":
        for subj in subjects:
            doms = by_subject[subj]
            if len(doms) < 2:
                raise ValueError(f"subject {subj} lacks a second session")
            tasks.append((doms[1], [doms[0]]))
    else:
        raise ValueError(f"unknown transfer {transfer!r}")
    return tasks


def _run_cell(config, sources, target, n_l, seed, repeat, dataset):
    try:
        return run_pipeline(config, sources, target, n_l, seed, repeat, dataset)
    except ConfigInfeasible as exc:
        log.info("skipping %s at N_l=%d: %s", config.name, n_l, exc)
        return None


def sweep(sets, configs, n_l_grid=DEFAULT_NL_GRID, repeats=30, base_seed=0,
          transfer="cross_subject", dataset="", n_jobs=1):
    """Leave-one-subject-out (or train-to-evaluation session) evaluation.

    Every (target, N_l, repeat) cell uses ``cell_seed(base_seed, subject, N_l,
    repeat)`` for all configs. Cells whose config is infeasible at that N_l
    (e.g. target-only CSP with N_l = 0) are skipped. Results are returned
    sorted by (target, config order, N_l, repeat).
    """
    transfer = transfer.replace("-", "_")
    configs = list(configs)
    jobs = []
    for target, sources in transfer_tasks(sets, transfer):
        for ci, config in enumerate(configs):
            if config.transfer != transfer:
                config = replace(config, transfer=transfer)
            for n_l in n_l_grid:
                for r in range(repeats):
                    seed = cell_seed(base_seed, target.subject_id, n_l, r)
                    jobs.append(((target.subject_id, ci, n_l, r),
                                 (config, sources, target, n_l, seed, r, dataset)))
    if n_jobs == 1:
        out = [(key, _run_cell(*args)) for key, args in jobs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(*args) for _, args in jobs)
        out = list(zip((key for key, _ in jobs), results))
    out.sort(key=lambda kv: kv[0])
    return [res for _, res in out if res is not None]


def feature_selection_experiment(sets, n_l_grid=(4, 8, 12, 16, 20), repeats=30, base_seed=0,
                                 transfer="cross_subject", dataset="", configs=None, n_jobs=1):
    """Sweep over :func:`featsel_configs` (6 leading filters vs 20 filters
    reduced to 6 by ReliefF / CReliefF)."""
    if configs is None:
        configs = featsel_configs()
    return sweep(sets, configs, n_l_grid, repeats, base_seed, transfer, dataset, n_jobs)


# ---------------------------------------------------------------------------
# statistics

def paired_ttest(a, b, alpha=0.05):
    """Two-tailed paired t-test of ``a - b``.

    A zero-variance difference with zero mean gives ``t = 0, p = 1``; with a
    non-zero mean, ``t = +-inf, p = 0``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise TooShort("paired t-test needs at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    df = n - 1
    if sd == 0:
        if mean == 0:
            return TTestReport(0.0, df, 1.0, False)
        t = math.copysign(math.inf, mean)
        return TTestReport(t, df, 0.0, True)
    t = mean / (sd / math.sqrt(n))
    p = float(special.betainc(df / 2, 0.5, df / (df + t * t)))
    p = min(max(p, 0.0), 1.0)
    return TTestReport(float(t), df, p, p < alpha)


def summarize(results, baseline="CSP-LDA", min_n_l=1, alpha=0.05):
    """Per-config mean accuracy over cells with ``n_l >= min_n_l``.

    ``std`` is taken across the per-N_l means (how much the accuracy curve
    moves with N_l). ``improvement`` is the relative gain over ``baseline`` in
    percent, and ``ttest`` pairs each config with the baseline cell by cell.
    Rows keep first-appearance order of the configs.
    """
    cells = {}
    for r in results:
        if r.n_l < min_n_l:
            continue
        cells.setdefault(r.config, {})[(r.dataset, r.target_subject, r.n_l, r.repeat)] = r.accuracy
    if baseline not in cells:
        raise MissingBaseline(f"baseline {baseline!r} not among the results")
    base = cells[baseline]
    base_mean = float(np.mean(list(base.values())))
    rows = []
    for name, acc in cells.items():
        values = np.array(list(acc.values()))
        mean = float(values.mean())
        by_nl = {}
        for (_, _, n_l, _), v in acc.items():
            by_nl.setdefault(n_l, []).append(v)
        std = float(np.std([np.mean(v) for v in by_nl.values()], ddof=1)) if len(by_nl) > 1 else 0.0
        shared = sorted(set(acc) & set(base))
        report = None
        if name != baseline and len(shared) >= 2:
            report = paired_ttest([acc[k] for k in shared], [base[k] for k in shared], alpha)
        rows.append(SummaryRow(name, mean, std, 100.0 * (mean - base_mean) / base_mean,
                               len(values), report))
    return rows


# ---------------------------------------------------------------------------
# CSV

def write_results(results, path):
    """Write results as CSV to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_rows(results, path)
        return
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        _write_rows(results, fh)


def _write_rows(results, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in results:
        row = asdict(r)
        row["accuracy"] = repr(float(r.accuracy))
        writer.writerow([row[c] for c in RESULT_COLUMNS])


def read_results(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"unexpected result header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(RunResult(
                row["dataset"], row["target_subject"], row["config"], row["align"],
                row["spatial"], row["select"], row["clf"], row["mode"], row["transfer"],
                int(row["n_l"]), int(row["repeat"]), int(row["seed"]), float(row["accuracy"])))
        return out
