"""Command-line entry point: ``mitl <subcommand> ...``.

Datasets on disk are directories holding one TrialSet directory per
subject/session (as written by ``mitl synth``). Results are CSV files with
the columns of :data:`mitl.harness.RESULT_COLUMNS`.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data import SynthParams, load_trialset, save_trialset, synth_generate
from .harness import (
    DEFAULT_NL_GRID,
    PipelineConfig,
    feature_selection_experiment,
    featsel_configs,
    paired_ttest,
    full_grid,
    read_results,
    run_pipeline,
    summarize,
    sweep,
    write_results,
    transfer_tasks,
    cell_seed,
)

log = logging.getLogger("mitl")

# CLI flag -> PipelineConfig field
_FLAG_FIELDS = {
    "align": "align", "spatial": "spatial", "filters": "n_filters", "beta": "beta",
    "gamma": "gamma", "select": "select", "top": "n_select", "clf": "clf", "wt": "wt",
    "lambda1": "lambda1", "lambda2": "lambda2", "lambda3": "lambda3", "mode": "mode",
    "transfer": "transfer", "stratified": "stratified",
}


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def load_dataset(path):
    """Load every TrialSet directory below ``path`` (or ``path`` itself)."""
    path = Path(path)
    if (path / "manifest.json").is_file():
        return [load_trialset(path)]
    dirs = sorted(p for p in path.iterdir() if (p / "manifest.json").is_file())
    if not dirs:
        raise FileNotFoundError(f"no TrialSet directories under {path}")
    return [load_trialset(p) for p in dirs]


def _config_from_args(args):
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[name] = value
    return PipelineConfig.from_dict(base)


def _add_pipeline_flags(p):
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--align", choices=("none", "ea", "ps"))
    p.add_argument("--spatial", choices=("csp", "ccsp", "rcsp"))
    p.add_argument("--filters", type=int, help="filters per class")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--select", choices=("none", "relieff", "crelieff"))
    p.add_argument("--top", type=int, help="features kept after selection")
    p.add_argument("--clf", choices=("lda", "clda", "war", "owar"))
    p.add_argument("--wt", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--stratified", action="store_true", default=None)


def _add_protocol_flags(p, nl_default=DEFAULT_NL_GRID):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--dataset", default=None, help="dataset label for the CSV (default: dir name)")
    p.add_argument("--mode", choices=("offline", "online"))
    p.add_argument("--transfer", choices=("cross-subject", "cross-session"))
    p.add_argument("--nl", type=_int_list, default=nl_default)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="result CSV (default: stdout)")


def _emit(results, out):
    if out:
        write_results(results, out)
        print(f"wrote {len(results)} rows to {out}", file=sys.stderr)
    else:
        write_results(results, sys.stdout)


def cmd_synth(args):
    params = SynthParams(n_subjects=args.subjects, n_trials_per_class=args.trials,
                         channels=args.channels, samples=args.samples, contrast=args.contrast,
                         mix_scale=args.mix, noise_scale=args.noise, n_sessions=args.sessions,
                         session_scale=args.session_mix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ts in synth_generate(params, args.seed):
        save_trialset(ts, out / f"{ts.subject_id}_{ts.session_id}")
    return 0


def cmd_run(args):
    config = _config_from_args(args)
    sets = load_dataset(args.data)
    dataset = args.dataset or Path(args.data).name
    results = []
    for target, sources in transfer_tasks(sets, config.transfer):
        if args.target and target.subject_id != args.target:
            continue
        for n_l in args.nl:
            for r in range(args.repeats):
                seed = cell_seed(args.seed, target.subject_id, n_l, r)
                results.append(run_pipeline(config, sources, target, n_l, seed, r, dataset))
    _emit(results, args.out)
    return 0


def _grid(args):
    mode = args.mode or "offline"
    transfer = (args.transfer or "cross-subject").replace("-", "_")
    if args.configs:
        raw = json.loads(Path(args.configs).read_text(encoding="utf-8"))
        return [replace(PipelineConfig.from_dict(c), mode=mode, transfer=transfer) for c in raw]
    return full_grid(mode, transfer)


def cmd_sweep(args):
    sets = load_dataset(args.data)
    configs = _grid(args)
    results = sweep(sets, configs, args.nl, args.repeats, args.seed,
                    configs[0].transfer, args.dataset or Path(args.data).name, args.jobs)
    _emit(results, args.out)
    return 0


def cmd_featsel(args):
    sets = load_dataset(args.data)
    transfer = (args.transfer or "cross-subject").replace("-", "_")
    configs = featsel_configs(mode=args.mode or "offline", transfer=transfer)
    results = feature_selection_experiment(sets, args.nl, args.repeats, args.seed, transfer,
                                           args.dataset or Path(args.data).name, configs,
                                           args.jobs)
    _emit(results, args.out)
    return 0


def cmd_summarize(args):
    results = []
    for path in args.results:
        results.extend(read_results(path))
    rows = summarize(results, baseline=args.baseline)
    print("config,mean,std,improvement_pct,n,t,p,significant")
    for r in rows:
        t = p = sig = ""
        if r.ttest is not None:
            t, p, sig = f"{r.ttest.t:.4f}", f"{r.ttest.p:.4g}", str(r.ttest.significant).lower()
        print(f"{r.config},{r.mean:.4f},{r.std:.4f},{r.improvement:.2f},{r.n},{t},{p},{sig}")
    return 0


def cmd_ttest(args):
    results = []
    for path in args.results:
        results.extend(read_results(path))
    acc = {}
    for r in results:
        if r.n_l >= 1:
            acc.setdefault(r.config, {})[(r.dataset, r.target_subject, r.n_l, r.repeat)] = r.accuracy
    for name in (args.a, args.b):
        if name not in acc:
            raise SystemExit(f"config {name!r} not in results")
    keys = sorted(set(acc[args.a]) & set(acc[args.b]))
    report = paired_ttest([acc[args.a][k] for k in keys], [acc[args.b][k] for k in keys],
                          args.alpha)
    print(json.dumps({"a": args.a, "b": args.b, "n": len(keys), "t": report.t,
                      "df": report.df, "p": report.p, "significant": report.significant}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mitl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    defaults = SynthParams()
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=defaults.n_subjects)
    p.add_argument("--trials", type=int, default=defaults.n_trials_per_class,
                   help="trials per class")
    p.add_argument("--channels", type=int, default=defaults.channels)
    p.add_argument("--samples", type=int, default=defaults.samples)
    p.add_argument("--contrast", type=float, default=defaults.contrast)
    p.add_argument("--mix", type=float, default=defaults.mix_scale)
    p.add_argument("--noise", type=float, default=defaults.noise_scale)
    p.add_argument("--sessions", type=int, default=defaults.n_sessions)
    p.add_argument("--session-mix", type=float, default=defaults.session_scale)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="evaluate one pipeline")
    _add_pipeline_flags(p)
    _add_protocol_flags(p, nl_default=(4,))
    p.add_argument("--target", help="only this target subject")
    p.set_defaults(func=cmd_run, repeats=1)

    p = sub.add_parser("sweep", help="evaluate the full algorithm grid")
    _add_protocol_flags(p)
    p.add_argument("--configs", help="JSON list of PipelineConfig objects (default: full grid)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("featsel-sweep", help="compare CSP6 with ReliefF/CReliefF selection")
    _add_protocol_flags(p, nl_default=(4, 8, 12, 16, 20))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_featsel)

    p = sub.add_parser("summarize", help="mean/std/improvement table from result CSVs")
    p.add_argument("results", nargs="+")
    p.add_argument("--baseline", default="CSP-LDA")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("ttest", help="paired t-test between two configs")
    p.add_argument("results", nargs="+")
    p.add_argument("--a", required=True)
    p.add_argument("--b", default="CSP-LDA")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_ttest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
