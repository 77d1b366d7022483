"""Command-line entry point: ``subband-svm <command> [options]``.

Commands share the experiment flags (``--config`` plus overrides); models are
cached in the configured cache directory, so ``train-*`` commands followed
by ``evaluate`` or ``sweep`` reuse work.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from .corpus import SyntheticSpec, load_class_map, load_corpus, make_synthetic_corpus, timit_class_map
from .ensemble import save_ensemble, write_weight_report
from .filterbank import design_cmfb
from .harness import (FRONT_ENDS, REGIMES, ConfigError, Experiment, ExperimentConfig, compute_error,
                      emit_plot_data, read_results, run_sweep)


def _snr(text):
    return "quiet" if text == "quiet" else float(text)


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--cache", dest="cache_dir", help="model cache directory")
    p.add_argument("--no-cache", action="store_true", help="disable the model cache")
    p.add_argument("--front-ends", nargs="+", choices=FRONT_ENDS)
    p.add_argument("--regimes", nargs="+", choices=sorted(REGIMES))
    p.add_argument("--noise", dest="noise_kinds", nargs="+", help="white, pink, babble or file:<path>")
    p.add_argument("--snr-grid", nargs="*", type=_snr, help="dB values and/or 'quiet'")
    p.add_argument("--S", type=int)
    p.add_argument("--theta", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--lambda", dest="lam", help="'empirical' or a fixed value in [0, 1]")
    p.add_argument("--seed", type=int, help="corpus seed (synthetic corpora)")


def _config(args) -> ExperimentConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for name in ("output_dir", "cache_dir", "front_ends", "regimes", "noise_kinds", "snr_grid",
                 "S", "theta", "C", "T"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if getattr(args, "no_cache", False):
        data["cache_dir"] = None
    if getattr(args, "lam", None) is not None:
        data["fusion"] = {"mode": "empirical"} if args.lam == "empirical" else {"mode": "fixed", "lam": float(args.lam)}
    if getattr(args, "seed", None) is not None:
        corpus = dict(data.get("corpus", ExperimentConfig().corpus))
        corpus["seed"] = args.seed
        data["corpus"] = corpus
    return ExperimentConfig.from_dict(data)


def cmd_prepare(args) -> int:
    if args.dump_taps:
        bank = design_cmfb(args.dump_taps)
        sys.stdout.write(bank.taps_text() + "\n")
        return 0
    if args.synthetic:
        spec = SyntheticSpec(n_classes=args.classes, n_utterances=args.n_utterances)
        utts = make_synthetic_corpus(spec, seed=args.seed or 0, out_dir=args.synthetic)
        n = sum(len(u.phones) for u in utts)
        print(f"wrote {len(utts)} utterances ({n} phones) to {args.synthetic}")
        return 0
    if args.audio_dir:
        cmap = load_class_map(args.class_map) if args.class_map else timit_class_map()
        result = load_corpus(args.audio_dir, args.alignment_dir, cmap)
        n = sum(len(u.phones) for u in result.utterances)
        print(f"loaded {len(result.utterances)} utterances ({n} phones)")
        for err in result.errors:
            print(f"error: {err}", file=sys.stderr)
        return 1 if result.errors else 0
    print("prepare needs --synthetic DIR, --audio-dir DIR or --dump-taps S", file=sys.stderr)
    return 2


def cmd_train_base(args) -> int:
    exp = Experiment(_config(args))
    ens = exp.base_ensemble()
    print(f"base ensemble: {ens.N} problems x {ens.S} subbands on {len(ens.train)} training phones")
    if args.save:
        save_ensemble(ens, args.save)
        print(f"saved to {args.save}")
    return 0


def _non_matched(cfg):
    return [r for r in cfg.regimes if REGIMES[r][0] != "matched"]


def cmd_train_mfcc(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    for regime in _non_matched(cfg):
        clf = exp.mfcc(regime, exp.test_corruption(regime, cfg.noise_kinds[0], None))
        print(f"{regime}: {clf.N} MFCC models ({clf.scenario.kind})")
    return 0


def cmd_train_meta(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    for regime in _non_matched(cfg):
        st = exp.stacked(regime, exp.test_corruption(regime, cfg.noise_kinds[0], None))
        fb = st.info.get("fallback_problems", [])
        print(f"{regime}: meta level over {st.info['n_dev']} dev score vectors, {len(fb)} fallback problems")
        if args.weights:
            Path(args.weights).mkdir(parents=True, exist_ok=True)
            write_weight_report(st, Path(args.weights) / f"{regime}.csv")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    snr = None if args.at == "quiet" else float(args.at)
    regime = args.regime or cfg.regimes[0]
    noise = args.noise_kind or cfg.noise_kinds[0]
    results = exp.evaluate(regime, noise, snr, cfg.front_ends)
    for fe in FRONT_ENDS:
        if fe in results:
            pred, truth = results[fe]
            print(f"{fe:9s} {regime} {noise} {args.at}: {compute_error(pred, truth, exp.class_map):.2f}% "
                  f"of {len(truth)}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    table = run_sweep(cfg)
    print(f"{len(table.rows)} rows written to {Path(cfg.output_dir) / 'results.csv'}")
    return 0


def cmd_report(args) -> int:
    table = read_results(args.results)
    out = args.plot_dir or str(Path(args.results).parent / "plot")
    for path in emit_plot_data(table, out):
        print(path.read_text().rstrip())
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subband-svm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="generate a synthetic corpus or check a recorded one")
    p.add_argument("--synthetic", metavar="DIR", help="write a synthetic corpus to DIR")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--n-utterances", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audio-dir")
    p.add_argument("--alignment-dir")
    p.add_argument("--class-map")
    p.add_argument("--dump-taps", type=int, metavar="S", help="print the analysis filter taps for S channels")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-base", help="train the per-subband base SVMs")
    _add_experiment_flags(p)
    p.add_argument("--save", metavar="DIR", help="also store the ensemble in DIR")
    p.set_defaults(func=cmd_train_base)

    p = sub.add_parser("train-mfcc", help="train the MFCC classifiers of the configured regimes")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train_mfcc)

    p = sub.add_parser("train-meta", help="train the meta-level classifiers of the configured regimes")
    _add_experiment_flags(p)
    p.add_argument("--weights", metavar="DIR", help="write weight reports to DIR")
    p.set_defaults(func=cmd_train_meta)

    p = sub.add_parser("evaluate", help="score the front-ends at one grid point")
    _add_experiment_flags(p)
    p.add_argument("--regime", choices=sorted(REGIMES))
    p.add_argument("--noise-kind")
    p.add_argument("--at", default="quiet", help="SNR in dB or 'quiet'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the full grid and write results, plots data and manifest")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="write plot-data files from results.csv")
    p.add_argument("results")
    p.add_argument("--plot-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
