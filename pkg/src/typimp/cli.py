"""Command-line driver.

Subcommands
-----------
mine       score and rank candidate implications
eval       hide-and-recover accuracy curves for several models
compare    Kendall tau between two ranked lists
treestats  distance profile of one tree against another
synth      write a synthetic dataset with its ground truth

``mine`` and ``eval`` read an optional flat ``key = value`` config file;
command-line flags override it, and the effective settings are written to
``<out>/config.effective`` so a run can be repeated from that file alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .dataset import FeatureMatrix, parse_dataset, read_merge_rules
from .errors import ConfigError, NumericError, ParseError, TypimpError, ValidationError
from .evaluation import DEFAULT_K_GRID, evaluate, kendall_tau, tree_distance_profile, write_curve
from .flat import FlatHyper
from .hier import HierHyper
from .search import (
    MODELS,
    FilterSpec,
    candidate_key,
    enumerate_pairs,
    enumerate_triples,
    rank,
    read_blocklist,
    read_ranked,
    score_candidates,
    write_ranked,
)
from .synthgen import GLOBAL, Planted, SynthSpec, TreeShape, generate_flat, generate_hier, write_synthetic
from .trees import ClusterSpec, LanguageTree, build_areal_tree, build_phylo_tree, read_tree

log = logging.getLogger("typimp")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

# Every config key, its parser and its default. Paths default to "".
_DEFAULTS = {
    "dataset": (str, ""),
    "merges": (str, ""),
    "blocklist": (str, ""),
    "model": (str, "flat"),
    "tree": (str, ""),
    "filters": (str, "250,15,0.5"),
    "triples": (str, "no"),
    "iterations": (int, 1000),
    "burn_in": (int, 200),
    "rejection_attempts": (int, 20),
    "seed": (int, 0),
    "workers": (int, 1),
    "top": (int, 0),
    "folds": (int, 10),
    "fraction": (float, 0.10),
    "k_grid": (str, ",".join(str(k) for k in DEFAULT_K_GRID)),
    "macro_clusters": (int, 6),
    "micro_clusters": (int, 25),
    "out": (str, ""),
}


class UsageError(TypimpError):
    """Bad command line or config file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file; ``#`` starts a comment, dashes in keys read as underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        if key not in _DEFAULTS:
            raise UsageError(f"{path}: line {lineno}: unknown config key {key!r}")
        out[key] = value.strip()
    return out


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags given on the command line."""
    raw = {k: str(d) for k, (_, d) in _DEFAULTS.items()}
    if getattr(args, "config", None):
        raw.update(read_config(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = str(value)
    cfg = {}
    for key, (kind, _) in _DEFAULTS.items():
        try:
            cfg[key] = kind(raw[key])
        except ValueError:
            raise UsageError(f"config key {key}: cannot read {raw[key]!r} as {kind.__name__}") from None
    return cfg


def write_config(cfg: dict, path) -> None:
    Path(path).write_text("".join(f"{k} = {cfg[k]}\n" for k in _DEFAULTS), encoding="utf-8")


def parse_filters(text: str) -> FilterSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--filters needs three comma-separated values, got {text!r}")
    try:
        return FilterSpec(int(parts[0]), int(parts[1]), float(parts[2]))
    except ValueError:
        raise UsageError(f"--filters expects int,int,float, got {text!r}") from None


def parse_models(text: str) -> list[str]:
    models = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        raise UsageError(f"unknown model {', '.join(bad) or text!r}; expected one of {', '.join(MODELS)}")
    return models


def parse_k_grid(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"--k-grid expects comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--k-grid values must be positive")
    return ks


def _flag(value: str) -> bool:
    if value.lower() in ("yes", "true", "1", "on"):
        return True
    if value.lower() in ("no", "false", "0", "off", ""):
        return False
    raise UsageError(f"expected yes or no, got {value!r}")


def load_matrix(cfg: dict) -> FeatureMatrix:
    if not cfg["dataset"]:
        raise UsageError("no dataset given (--dataset or 'dataset =' in the config)")
    rules = read_merge_rules(cfg["merges"]) if cfg["merges"] else ()
    return parse_dataset(cfg["dataset"], rules)


def tree_for(model: str, matrix: FeatureMatrix, cfg: dict) -> LanguageTree | None:
    """Tree used by ``model``: the tree file if one is given, otherwise built from the data."""
    if model not in ("hier-phylo", "hier-areal"):
        return None
    ids = [lang.id for lang in matrix.languages]
    if cfg["tree"]:
        return read_tree(cfg["tree"], ids)
    if model == "hier-phylo":
        return build_phylo_tree(matrix)
    return build_areal_tree(matrix, ClusterSpec(cfg["macro_clusters"], cfg["micro_clusters"], seed=cfg["seed"]))


def hyper_for(model: str, cfg: dict) -> FlatHyper:
    kind = HierHyper if model.startswith("hier") else FlatHyper
    return kind(iterations=cfg["iterations"], burn_in=cfg["burn_in"],
                rejection_attempts=cfg["rejection_attempts"], seed=cfg["seed"])


def _prepare_out(cfg: dict) -> Path:
    if not cfg["out"]:
        raise UsageError("no output directory given (--out or 'out =' in the config)")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mine(args) -> int:
    cfg = effective_config(args)
    model = cfg["model"]
    if parse_models(model) != [model]:
        raise UsageError("mine takes a single model")
    filt = parse_filters(cfg["filters"])
    hyper = hyper_for(model, cfg)
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    matrix = load_matrix(cfg)
    blocklist = read_blocklist(cfg["blocklist"]) if cfg["blocklist"] else ()
    enum = enumerate_triples if _flag(cfg["triples"]) else enumerate_pairs
    cands = enum(matrix, filt, blocklist)
    print(f"{len(cands)} candidates pass the filters")
    summaries = score_candidates(matrix, cands, model, hyper=hyper,
                                 tree=tree_for(model, matrix, cfg), workers=cfg["workers"])
    for s in summaries:
        s.model = model
    ranked = rank(matrix, cands, [s.score for s in summaries], model, seed=cfg["seed"])
    if cfg["top"] > 0:
        ranked = ranked[: cfg["top"]]
    write_ranked(out / "ranked.tsv", ranked)
    by_key = {candidate_key(matrix, c): s for c, s in zip(cands, summaries)}
    sdir = out / "summaries"
    sdir.mkdir(exist_ok=True)
    for old in sdir.glob("*.json"):
        old.unlink()
    for r in ranked:
        doc = {"rank": r.rank, **by_key[r.key].to_json(matrix)}
        (sdir / f"{r.rank:05d}.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    write_config(cfg, out / "config.effective")
    print(f"wrote {len(ranked)} implications to {out / 'ranked.tsv'} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = effective_config(args)
    models = parse_models(cfg["model"])
    filt = parse_filters(cfg["filters"])
    k_values = parse_k_grid(cfg["k_grid"])
    hier = any(m.startswith("hier") for m in models)
    hyper = hyper_for("hier" if hier else "flat", cfg)
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    matrix = load_matrix(cfg)
    blocklist = read_blocklist(cfg["blocklist"]) if cfg["blocklist"] else ()
    trees = {m: tree_for(m, matrix, cfg) for m in models if m.startswith("hier")}
    curve = evaluate(matrix, models, folds=cfg["folds"], fraction=cfg["fraction"], k_values=k_values,
                     filt=filt, blocklist=blocklist, hyper=hyper,
                     trees=trees, seed=cfg["seed"], workers=cfg["workers"])
    write_curve(out / "curve.csv", curve)
    if args.per_fold:
        with open(out / "curve_folds.csv", "w", encoding="utf-8") as fh:
            fh.write("fold,k,model,accuracy,covered_cells\n")
            for f in range(cfg["folds"]):
                for i, k in enumerate(curve.k_values):
                    for m in models:
                        a = curve.accuracies[m][f, i]
                        acc = "" if a != a else f"{a:.6f}"
                        fh.write(f"{f},{k},{m},{acc},{int(curve.covered[m][f, i])}\n")
    write_config(cfg, out / "config.effective")
    print(f"wrote {len(curve.k_values) * len(models)} curve rows to {out / 'curve.csv'} "
          f"in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_ranked(args.ranked_a), read_ranked(args.ranked_b)
    tau, tau01 = kendall_tau([r.key for r in a], [r.key for r in b])
    print(f"items\t{len(a)}")
    print(f"tau_standard\t{tau:.6f}")
    print(f"tau01\t{tau01:.6f}")
    return EXIT_OK


def _named_tree(spec: str, matrix: FeatureMatrix, args) -> LanguageTree:
    if spec == "phylo":
        return build_phylo_tree(matrix)
    if spec == "areal":
        return build_areal_tree(matrix, ClusterSpec(args.macro_clusters, args.micro_clusters, seed=args.seed))
    return read_tree(spec, [lang.id for lang in matrix.languages])


def cmd_treestats(args) -> int:
    rules = read_merge_rules(args.merges) if args.merges else ()
    matrix = parse_dataset(args.dataset, rules)
    tree_a, tree_b = _named_tree(args.tree_a, matrix, args), _named_tree(args.tree_b, matrix, args)
    print("distance_a\tmean_distance_b\tpairs\tshifted_distance_a\tshifted_mean_distance_b")
    for row in tree_distance_profile(tree_a, tree_b):
        print(f"{row.distance_a}\t{row.mean_distance_b:.4f}\t{row.pairs}\t"
              f"{row.paper_distance_a}\t{row.paper_mean_distance_b:.4f}")
    return EXIT_OK


def parse_planted(text: str) -> tuple[Planted, ...]:
    """``0:1,2:3@1,4:5@0+2``: implicant:implicand, optionally scoped to '+'-joined families."""
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        pair, _, scope = item.partition("@")
        try:
            f1, f2 = (int(v) for v in pair.split(":"))
            fams = tuple(int(v) for v in scope.split("+")) if scope else ()
        except ValueError:
            raise UsageError(f"bad planted implication {item!r}; expected like 0:1 or 0:1@2") from None
        out.append(Planted(f1, f2, (fams[0] if len(fams) == 1 else fams) if fams else GLOBAL))
    return tuple(out)


def cmd_synth(args) -> int:
    spec = SynthSpec(languages=args.languages, families=args.families, features=args.features,
                     planted=parse_planted(args.planted), pi=args.pi, noise=args.noise,
                     missing=args.missing, seed=args.seed)
    if args.kind == "flat":
        matrix, truth = generate_flat(spec)
    else:
        matrix, truth = generate_hier(spec, TreeShape(sigma2=args.sigma2))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_synthetic(matrix, truth, args.out)
    print(f"wrote {matrix.n_languages} languages x {matrix.n_features} features to {args.out}")
    return EXIT_OK


def _run_flags(p: argparse.ArgumentParser, model_help: str) -> None:
    # default None so that unset flags leave config-file values alone
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--dataset", help="raw CSV dataset")
    p.add_argument("--merges", help="feature merge rules")
    p.add_argument("--blocklist", help="banned 'a -> b' implications")
    p.add_argument("--model", help=model_help)
    p.add_argument("--tree", help="tree file used instead of building one")
    p.add_argument("--filters", help="min both-known, min joint-true, min conditional rate (250,15,0.5)")
    p.add_argument("--triples", choices=("yes", "no"), help="score two-implicant triples instead of pairs")
    p.add_argument("--iterations", type=int, help="sweeps per chain (1000)")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="discarded sweeps (200)")
    p.add_argument("--seed", type=int, help="global seed (0)")
    p.add_argument("--workers", type=int, help="worker processes (1)")
    p.add_argument("--macro-clusters", dest="macro_clusters", type=int, help="areal tree macro clusters (6)")
    p.add_argument("--micro-clusters", dest="micro_clusters", type=int, help="areal tree micro clusters (25)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="typimp", description="Discover typological implications with Bayesian models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", help="rank candidate implications")
    _run_flags(p, f"one of {', '.join(MODELS)}")
    p.add_argument("--top", type=int, help="keep only the top N implications (0 keeps all)")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("eval", help="accuracy curves on hidden cells")
    _run_flags(p, "comma-separated models")
    p.add_argument("--folds", type=int, help="evaluation folds (10)")
    p.add_argument("--fraction", type=float, help="share of known cells hidden per fold (0.1)")
    p.add_argument("--k-grid", dest="k_grid", help="comma-separated k values (2,4,...,1024)")
    p.add_argument("--per-fold", action="store_true", help="also write curve_folds.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="Kendall tau between two ranked.tsv files")
    p.add_argument("ranked_a")
    p.add_argument("ranked_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("treestats", help="distance profile of tree A against tree B")
    p.add_argument("tree_a", help="'phylo', 'areal' or a tree file")
    p.add_argument("tree_b", help="'phylo', 'areal' or a tree file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--merges")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--macro-clusters", dest="macro_clusters", type=int, default=6)
    p.add_argument("--micro-clusters", dest="micro_clusters", type=int, default=25)
    p.set_defaults(func=cmd_treestats)

    p = sub.add_parser("synth", help="write a synthetic dataset and its ground truth")
    p.add_argument("--kind", choices=("flat", "hier"), default="flat")
    p.add_argument("--languages", type=int, default=200)
    p.add_argument("--families", type=int, default=4)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--planted", default="", help="e.g. 0:1,2:3@1 (scope after @, families joined by +)")
    p.add_argument("--pi", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--missing", type=float, default=0.3)
    p.add_argument("--sigma2", type=float, default=1.0, help="tree variance for --kind hier")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; the truth goes next to it")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"typimp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, OSError) as exc:
        print(f"typimp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"typimp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
