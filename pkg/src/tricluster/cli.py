"""``tricluster`` command line: generate, train, cluster, evaluate, weights, clique-demo.

Exit codes: 0 success, 1 usage, 2 data or contract error, 3 capacity error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .core import ClusterTimeline, Partition
from .errors import TriclusterError
from .exp_model import TrainingSet, exp_predict, train_exponential
from .experiments import SynthConfig, evaluate_timeline, gen_synthetic, inverse_vol_weights
from .hardness import build_reduction, decide_kclique_via_map, map_structure_report, read_edge_list, solve_reduction
from .hmm import filter_timeline, hmm_train, viterbi_decode
from .mcmc import ChainConfig, chain_rng, run_chain
from .similarity import SimilarityConfig, similarity_at
from .spectral import DescentConfig, shi_malik_timeline, spectral_timeline
from .triangular import triangular_timeline

METHODS = ("shi-malik", "spectral", "exponential", "triangular-exact", "triangular-mcmc", "hmm")
SUPERVISED = {"exponential", "triangular-exact", "triangular-mcmc", "hmm"}
SIM_DEFAULTS = {"window": 20, "norm": "L2", "scale_c": 1.0, "threshold_lambda": 0.0, "decay": 1.0}
CHAIN_FLAGS = ("steps", "burn_in", "thin", "frag_prob", "estimator", "trace")
SPECTRAL_FLAGS = ("c_min", "c_max", "gd_step", "gd_iters", "restarts")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _range(text: str):
    """``a:b`` (1-based, inclusive, either end optional) or ``all``."""
    if text == "all":
        return (None, None)
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected a:b or all, got {text!r}")
    try:
        out = (int(lo) if lo else None, int(hi) if hi else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers in {text!r}") from None
    if out[0] is not None and out[1] is not None and out[0] > out[1]:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return out


def _add_similarity(p):
    g = p.add_argument_group("similarity")
    g.add_argument("--window", type=_positive_int)
    g.add_argument("--norm", choices=("L1", "L2"))
    g.add_argument("--scale-c", type=float)
    g.add_argument("--threshold-lambda", type=float)
    g.add_argument("--decay", type=float)


def _add_spectral(p):
    g = p.add_argument_group("spectral")
    g.add_argument("--c-min", type=_positive_int)
    g.add_argument("--c-max", type=_positive_int)
    g.add_argument("--gd-step", type=float)
    g.add_argument("--gd-iters", type=_positive_int)
    g.add_argument("--restarts", type=_nonneg_int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tricluster", description="Cluster panels of time series over time.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic regime-switching panel and its truth timeline")
    p.add_argument("--n", type=_positive_int, default=3)
    p.add_argument("--steps", type=_positive_int, default=5000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--change-prob", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--panel-out", default="panel.csv")
    p.add_argument("--truth-out", default="truth.csv")

    p = sub.add_parser("train", help="fit the exponential model (and optionally the HMM)")
    p.add_argument("--panel", required=True)
    p.add_argument("--truth")
    p.add_argument("--labels", choices=("truth", "spectral"), default="truth")
    p.add_argument("--rates", choices=("conditional", "pooled"), default="conditional")
    p.add_argument("--hmm", action="store_true", help="also fit the clustering-state HMM")
    p.add_argument("--alpha", type=float, default=1.0, help="HMM transition smoothing")
    p.add_argument("--train-range", type=_range)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="model")
    _add_similarity(p)
    _add_spectral(p)

    p = sub.add_parser("cluster", help="cluster every step of a panel")
    p.add_argument("--panel", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--model", help="directory written by 'train'")
    p.add_argument("--test-range", type=_range)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="pred.csv")
    p.add_argument("--dump-similarity", metavar="DIR")
    p.add_argument("--decode", choices=("viterbi", "filter"))
    _add_similarity(p)
    _add_spectral(p)
    g = p.add_argument_group("triangular-mcmc")
    g.add_argument("--steps", type=_positive_int)
    g.add_argument("--burn-in", type=_nonneg_int)
    g.add_argument("--thin", type=_positive_int)
    g.add_argument("--frag-prob", type=float)
    g.add_argument("--estimator", choices=("mode", "max-score", "mean"))
    g.add_argument("--trace", metavar="DIR", help="write one chain trace CSV per step")

    p = sub.add_parser("evaluate", help="score prediction timelines against truth")
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--exclude-after", type=_nonneg_int, default=0)
    p.add_argument("--out", help="summary CSV")
    p.add_argument("--detail", help="per-step CSV")

    p = sub.add_parser("weights", help="inverse-volatility weights for a clustering")
    p.add_argument("--panel", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--partition", type=Partition.parse)
    src.add_argument("--timeline")
    p.add_argument("--at", type=_positive_int)
    p.add_argument("--window", type=_positive_int, default=20)
    p.add_argument("--out", default="weights.csv")

    p = sub.add_parser("clique-demo", help="decide k-clique through the triangular MAP reduction")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--q", type=float, default=0.75)
    p.add_argument("--slack", type=_nonneg_int, default=0)

    for name, sp in sub.choices.items():
        sp.add_argument("--config", metavar="FILE", help="key=value file mirroring the flags; flags win")
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file")
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv) -> argparse.Namespace:
    argv = list(argv)
    parser = build_parser()
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    sp = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sp._actions}
    try:
        values = io.read_keyvalue(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r} for '{command}'")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = raw.split()
        else:
            defaults[key] = raw
        # a flag the config supplies is no longer required on the command line
        action.required = False
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _similarity_config(args, model_cfg: dict | None = None) -> SimilarityConfig:
    model_cfg = model_cfg or {}
    val = {}
    for key, default in SIM_DEFAULTS.items():
        v = getattr(args, key)
        if v is None:
            v = model_cfg.get(key, default)
        val[key] = type(default)(v)
    return SimilarityConfig(norm=val["norm"], scale=val["scale_c"], threshold=val["threshold_lambda"],
                            window=val["window"], decay=val["decay"])


def _sim_record(cfg: SimilarityConfig) -> dict:
    return {"window": cfg.window, "norm": cfg.norm, "scale_c": io.fmt(cfg.scale),
            "threshold_lambda": io.fmt(cfg.threshold), "decay": io.fmt(cfg.decay)}


def _descent_config(args) -> DescentConfig:
    base = DescentConfig()
    return DescentConfig(
        step=base.step if args.gd_step is None else args.gd_step,
        iters=base.iters if args.gd_iters is None else args.gd_iters,
        restarts=base.restarts if args.restarts is None else args.restarts,
        seed=args.seed,
    )


def _steps(rng, default, window: int, m: int) -> range:
    lo, hi = default if rng is None else rng
    lo = window if lo is None else max(lo, window)
    hi = m if hi is None else min(hi, m)
    if lo > hi:
        raise TriclusterError(f"no time steps left in range (window {window}, panel length {m})")
    return range(lo, hi + 1)


def _spectral_bounds(args, n: int) -> tuple[int, int]:
    return (args.c_min or 2, args.c_max or n)


def cmd_generate(args) -> int:
    cfg = SynthConfig(n=args.n, steps=args.steps, noise_sd=args.noise,
                      regime_change_prob=args.change_prob, seed=args.seed)
    panel, truth = gen_synthetic(cfg)
    io.write_panel(args.panel_out, panel)
    io.write_timeline(args.truth_out, truth)
    changes = sum(p != q for p, q in zip(truth.partitions, truth.partitions[1:]))
    print(f"wrote {panel.n_steps} steps x {panel.n_series} series to {args.panel_out}; "
          f"truth with {changes} regime changes to {args.truth_out}")
    return 0


def cmd_train(args) -> int:
    if args.labels == "truth" and not args.truth:
        raise UsageError("train: --truth is required unless --labels spectral")
    panel = io.read_panel(args.panel)
    cfg = _similarity_config(args)
    m = panel.n_steps
    times = _steps(args.train_range, (1, m // 2), cfg.window, m)
    sims = [similarity_at(panel, k, cfg) for k in times]
    if args.labels == "truth":
        truth = io.read_timeline(args.truth).as_dict()
        missing = [k for k in times if k not in truth]
        if missing:
            raise TriclusterError(f"{args.truth}: no label for time {missing[0]}")
        labels = [truth[k] for k in times]
    else:
        c_min, c_max = _spectral_bounds(args, panel.n_series)
        labels = spectral_timeline(panel, cfg, c_min, c_max, _descent_config(args), times=times).partitions
    data = TrainingSet.from_pairs(sims, labels)
    out = Path(args.out_dir)
    params = train_exponential(data, rates=args.rates)
    io.write_params(out / "params.csv", params)
    if args.hmm:
        io.write_hmm(out, hmm_train(data, alpha=args.alpha, rates=args.rates))
    io.write_keyvalue(out / "model.cfg", {**_sim_record(cfg), "n": params.n, "rates": args.rates,
                                          "labels": args.labels, "hmm": str(args.hmm).lower()})
    print(f"trained on steps {times.start}..{times.stop - 1} ({len(times)} steps, n={params.n}); "
          f"model written to {out}")
    return 0


def _check_method_flags(args) -> None:
    def given(names):
        return [n for n in names if getattr(args, n) is not None]

    if args.method in SUPERVISED and args.model is None:
        raise UsageError(f"cluster: --method {args.method} needs --model")
    if args.method not in SUPERVISED and args.model is not None:
        raise UsageError(f"cluster: --method {args.method} does not use --model")
    stray = []
    if args.method != "triangular-mcmc":
        stray += given(CHAIN_FLAGS)
    if args.method != "spectral":
        stray += given(SPECTRAL_FLAGS)
    if args.method != "hmm" and args.decode is not None:
        stray.append("decode")
    if stray:
        flags = ", ".join("--" + s.replace("_", "-") for s in stray)
        raise UsageError(f"cluster: {flags} not used by --method {args.method}")


def _chain_config(args) -> ChainConfig:
    base = ChainConfig()
    pick = lambda name: getattr(base, name) if getattr(args, name) is None else getattr(args, name)
    return ChainConfig(steps=pick("steps"), burn_in=pick("burn_in"), thin=pick("thin"), seed=args.seed,
                       frag_prob=pick("frag_prob"), estimator=pick("estimator"),
                       trace=args.trace is not None)


def cmd_cluster(args) -> int:
    _check_method_flags(args)
    panel = io.read_panel(args.panel)
    model_dir = Path(args.model) if args.model else None
    model_cfg = {}
    if model_dir is not None and (model_dir / "model.cfg").exists():
        model_cfg = io.read_keyvalue(model_dir / "model.cfg")
    cfg = _similarity_config(args, model_cfg)
    m = panel.n_steps
    default = (m // 2 + 1, m)
    times = _steps(args.test_range, default, cfg.window, m)
    width = len(str(m))

    if args.dump_similarity:
        for k in times:
            io.write_similarity(Path(args.dump_similarity) / f"similarity_{k:0{width}d}.csv",
                                similarity_at(panel, k, cfg))

    method = args.method
    if method == "shi-malik":
        tl = shi_malik_timeline(panel, cfg, times=times)
    elif method == "spectral":
        c_min, c_max = _spectral_bounds(args, panel.n_series)
        tl = spectral_timeline(panel, cfg, c_min, c_max, _descent_config(args), times=times)
    else:
        obs = [(k, similarity_at(panel, k, cfg)) for k in times]
        if method == "hmm":
            if not (model_dir / "hmm_transition.csv").exists():
                raise UsageError(f"cluster: {model_dir} has no HMM; rerun train with --hmm")
            hmm = io.read_hmm(model_dir)
            _check_n(hmm.n, panel.n_series, model_dir)
            decode = filter_timeline if args.decode == "filter" else viterbi_decode
            tl = decode(hmm, obs)
        else:
            params = io.read_params(model_dir / "params.csv")
            _check_n(params.n, panel.n_series, model_dir)
            if method == "exponential":
                tl = ClusterTimeline(tuple((k, exp_predict(s, params)) for k, s in obs))
            elif method == "triangular-exact":
                tl = triangular_timeline(obs, params)
            else:
                tl = _mcmc(obs, params, _chain_config(args), args.trace, width)
    io.write_timeline(args.out, tl)
    print(f"{method}: clustered steps {times.start}..{times.stop - 1} ({len(tl)} steps) -> {args.out}")
    return 0


def _check_n(model_n: int, panel_n: int, where) -> None:
    if model_n != panel_n:
        raise TriclusterError(f"model in {where} has n={model_n} but the panel has {panel_n} series")


def _mcmc(obs, params, chain: ChainConfig, trace_dir, width: int) -> ClusterTimeline:
    out = []
    for t, (k, s) in enumerate(obs):
        stats, res = run_chain(s, params, chain, rng=chain_rng(chain.seed, t))
        out.append((k, res.partition))
        if trace_dir:
            fh, w = io._writer(Path(trace_dir) / f"chain_{k:0{width}d}.csv")
            with fh:
                w.writerow(["step", "accepted", "log_score", "partition"])
                for step, acc, score, part in stats.trace:
                    w.writerow([step, int(acc), io.fmt(score), part])
    return ClusterTimeline(tuple(out))


REPORT_FIELDS = ("exact_match", "rand_index", "adjusted_rand", "stability", "n_steps", "n_excluded")


def cmd_evaluate(args) -> int:
    truth = io.read_timeline(args.truth)
    reports = []
    for path in args.pred:
        rep = evaluate_timeline(io.read_timeline(path), truth, exclude_after=args.exclude_after)
        reports.append((path, rep))
        summary = rep.summary()
        print(f"{path}: " + " ".join(
            f"{k}={summary[k] if isinstance(summary[k], int) else io.fmt(summary[k])}" for k in REPORT_FIELDS))
    if args.out:
        fh, w = io._writer(args.out)
        with fh:
            w.writerow(("pred",) + REPORT_FIELDS)
            for path, rep in reports:
                s = rep.summary()
                w.writerow([path] + [s[k] if isinstance(s[k], int) else io.fmt(s[k]) for k in REPORT_FIELDS])
    if args.detail:
        fh, w = io._writer(args.detail)
        with fh:
            w.writerow(["pred", "time", "predicted", "truth", "exact", "rand_index", "adjusted_rand", "excluded"])
            for path, rep in reports:
                for k, p, t, e, r, a, x in rep.rows:
                    w.writerow([path, k, p, t, e, io.fmt(r), io.fmt(a), x])
    return 0


def cmd_weights(args) -> int:
    panel = io.read_panel(args.panel)
    at = args.at or panel.n_steps
    if args.partition is not None:
        part = args.partition
    else:
        tl = io.read_timeline(args.timeline).as_dict()
        if args.at is None:
            at = max(tl)
        if at not in tl:
            raise TriclusterError(f"{args.timeline}: no clustering at time {at}")
        part = tl[at]
    weights = inverse_vol_weights(panel, part, args.window, at=at)
    io.write_weights(args.out, weights)
    print(f"weights at step {at} for {part.to_string()}: " + " ".join(io.fmt(x) for x in weights))
    return 0


def cmd_clique_demo(args) -> int:
    g = read_edge_list(args.graph)
    inst = build_reduction(g, args.k, q=args.q, slack=args.slack)
    sol = solve_reduction(inst)
    answer = decide_kclique_via_map(inst, sol)
    print("YES" if answer else "NO")
    print(f"graph: {g.n_vertices} vertices, {len(g.edges)} edges, k={args.k}")
    print(f"reduction: N={inst.N} appended vertices, {inst.graph_prime.n_vertices} total, q={io.fmt(args.q)}")
    print(f"MAP clustering: {sol.partition.to_string()} (log score {io.fmt(sol.log_score)})")
    for line in map_structure_report(inst, sol).lines():
        print(line)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "weights": cmd_weights,
    "clique-demo": cmd_clique_demo,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TriclusterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
