"""Command-line entry point: ``paa {fit,scree,ordinate,bench}``.

Exit codes: 0 success, 2 invalid configuration, 3 input parse error,
4 engine error. Messages go to standard error; data only to files in the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .compdata import CompositionError, format_composition_table, load_composition_table
from .diversity import LossKind, LossSpec
from .hpaa import ConstraintLevel, HPAAError, cut, run_hpaa, scree
from .ordination import ordination_compare
from .render import PlotStyle, render_dendrogram, render_ordination, render_scree
from .simbench import (
    distance_preservation_report,
    hpaa_reducer,
    prevalence_reducer,
    rows_to_csv,
    runtime_scaling_report,
)
from .taxonomy import TreeError, load_tree

log = logging.getLogger("paa")

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_ENGINE = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class ParseError(Exception):
    pass


@dataclass
class RunConfig:
    input: str | None = None
    tree: str | None = None
    loss: str = "sdi"
    level: str = "none"
    k: int | None = None
    out: str = "."
    seed: int = 0
    threads: int | None = None
    log_scale: bool = False
    levels: str | None = None
    study: str | None = None
    dims: str | None = None
    replicates: int = 5
    restarts: int = 0
    total_count: int = 10_000
    n: int | None = None


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    t = _TYPES[key]
    if value is None or not isinstance(value, str):
        return value
    try:
        if "int" in t:
            return int(value)
        if "bool" in t:
            v = value.strip().lower()
            if v not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return v in ("1", "true", "yes")
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return value


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes equal underscores."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _TYPES:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            values[key] = v
    cfg = RunConfig(**values)
    if cfg.threads is None:
        env = os.environ.get("PAA_THREADS")
        cfg.threads = _coerce("threads", env) if env else (os.cpu_count() or 1)
    if cfg.threads < 1:
        raise ConfigError("--threads must be at least 1")
    try:
        LossKind(cfg.loss)
    except ValueError:
        raise ConfigError(f"unknown loss {cfg.loss!r}; choose from sdi, swi, bc, wuf") from None
    try:
        ConstraintLevel(cfg.level)
    except ValueError:
        raise ConfigError(f"unknown level {cfg.level!r}; choose from none, weak, strong") from None
    return cfg


def _check_engine_config(cfg: RunConfig, levels=None):
    levels = levels or [cfg.level]
    if cfg.loss == "wuf" and not cfg.tree:
        raise ConfigError("WUF loss requires a taxonomy tree (--tree)")
    if cfg.loss == "wuf" and "none" in levels:
        raise ConfigError("WUF loss requires --level weak or strong")
    if any(lv != "none" for lv in levels) and not cfg.tree:
        raise ConfigError("weak and strong levels require a taxonomy tree (--tree)")


def _load_inputs(cfg: RunConfig):
    if not cfg.input:
        raise ConfigError("--input is required")
    X = _parse(cfg.input, load_composition_table)
    T = _parse(cfg.tree, load_tree) if cfg.tree else None
    if cfg.k is not None and not 1 <= cfg.k <= X.p:
        raise ConfigError(f"--k must lie in [1, {X.p}], got {cfg.k}")
    return X, T


def _parse(path, loader):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        return loader(text)
    except (CompositionError, TreeError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from None


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec(cfg, tree):
    return LossSpec(LossKind(cfg.loss), tree)


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def cmd_fit(cfg: RunConfig) -> int:
    _check_engine_config(cfg)
    X, T = _load_inputs(cfg)
    trace = run_hpaa(X, T, _spec(cfg, T), cfg.level)
    out = _outdir(cfg)
    (out / "trace.json").write_text(trace.to_json())
    (out / "dendrogram.newick").write_text(trace.to_newick() + "\n")
    (out / "dendrogram.svg").write_text(render_dendrogram(trace, T, PlotStyle(log_scale=cfg.log_scale)))
    if cfg.k is not None:
        g, scores, _ = cut(trace, cfg.k)
        groups = [
            {"label": lab, "members": [X.taxon_ids[j] for j in grp]}
            for lab, grp in zip(g.group_labels, g.groups)
        ]
        (out / "grouping.json").write_text(json.dumps({"k": cfg.k, "groups": groups}, indent=2) + "\n")
        (out / "principal_compositions.tsv").write_text(format_composition_table(scores))
    log.info("fit: %d merges written to %s", len(trace.steps), out)
    return EXIT_OK


def cmd_scree(cfg: RunConfig) -> int:
    if cfg.levels in (None, ""):
        levels = [cfg.level]
    elif cfg.levels == "all":
        levels = ["none", "weak", "strong"]
        if cfg.loss == "wuf":
            levels = ["weak", "strong"]
    else:
        levels = [s.strip() for s in cfg.levels.split(",") if s.strip()]
        for lv in levels:
            if lv not in ("none", "weak", "strong"):
                raise ConfigError(f"unknown level {lv!r} in --levels")
    _check_engine_config(cfg, levels)
    X, T = _load_inputs(cfg)
    series = {lv: scree(run_hpaa(X, T, _spec(cfg, T), lv)) for lv in levels}
    rows = [["k", "level", "percent_loss"]]
    for lv, pts in series.items():
        rows += [[k, lv, repr(float(v))] for k, v in pts]
    out = _outdir(cfg)
    (out / "scree.csv").write_text(_csv(rows))
    (out / "scree.svg").write_text(render_scree(series, PlotStyle(log_scale=cfg.log_scale)))
    return EXIT_OK


def cmd_ordinate(cfg: RunConfig) -> int:
    if cfg.k is None:
        raise ConfigError("ordinate requires --k")
    _check_engine_config(cfg)
    X, T = _load_inputs(cfg)
    trace = run_hpaa(X, T, _spec(cfg, T), cfg.level)
    g, _, _ = cut(trace, cfg.k)
    res = ordination_compare(X, g, restarts=cfg.restarts, seed=cfg.seed)
    n = X.n
    rows = [["point_id", "block", "x", "y"]]
    for i, pid in enumerate(res.embedding.point_ids):
        c = res.embedding.coords[i]
        rows.append([pid, "original" if i < n else "principal", repr(float(c[0])), repr(float(c[1]))])
    out = _outdir(cfg)
    (out / "embedding.csv").write_text(_csv(rows))
    drows = [["sample_id", "radius", "distance"]]
    drows += [[s, repr(float(r)), repr(float(2 * r))] for s, r in zip(X.sample_ids, res.radii)]
    drows += [["(mean)", "", repr(res.mean)], ["(sd)", "", repr(res.sd)]]
    (out / "distortion.csv").write_text(_csv(drows))
    (out / "ordination.svg").write_text(render_ordination(res, PlotStyle()))
    return EXIT_OK


def _parse_dims(s: str):
    try:
        dims = [tuple(int(v) for v in part.lower().split("x")) for part in s.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"invalid --dims {s!r}; expected e.g. 100x25,100x50") from None
    if not dims or any(len(d) != 2 or min(d) < 1 for d in dims):
        raise ConfigError(f"invalid --dims {s!r}; expected e.g. 100x25,100x50")
    return dims


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.study not in ("time", "distance"):
        raise ConfigError(f"unknown study {cfg.study!r}; choose time or distance")
    if cfg.replicates < 1:
        raise ConfigError("--replicates must be at least 1")
    out = _outdir(cfg)
    if cfg.study == "time":
        if not cfg.dims:
            raise ConfigError("time study requires --dims")
        dims = _parse_dims(cfg.dims)
        tree_factory = None
        if cfg.tree:
            T = _parse(cfg.tree, load_tree)
            tree_factory = lambda taxa: T  # noqa: E731
        if cfg.loss == "wuf" and cfg.level == "none":
            raise ConfigError("WUF loss requires --level weak or strong")
        rows = runtime_scaling_report(dims, cfg.loss, cfg.level, cfg.replicates, cfg.seed, tree_factory)
        text = rows_to_csv(rows, ["n", "p", "loss", "mean_seconds", "sd_seconds"])
        (out / "runtime.csv").write_text(text)
        return EXIT_OK
    # distance study: probabilities are the column means of the input table
    if cfg.k is None:
        raise ConfigError("distance study requires --k")
    X, T = _load_inputs(cfg)
    level = cfg.level if T is not None else "none"
    methods = {"Simple": prevalence_reducer()}
    for loss in ("sdi", "swi", "bc"):
        methods[f"HPAA-{loss.upper()}"] = hpaa_reducer(loss, level, T)
    if T is not None and level != "none":
        methods["HPAA-WUF"] = hpaa_reducer("wuf", level, T)
    rows = distance_preservation_report(
        X, methods, cfg.k, cfg.replicates, cfg.seed, n=cfg.n or X.n,
        total_count=cfg.total_count, threads=cfg.threads,
    )
    (out / "distance.csv").write_text(rows_to_csv(rows, ["replicate", "method", "mse", "rmse"]))
    summary = [["method", "median_mse", "median_rmse"]]
    for m in sorted(methods):
        sel = [r for r in rows if r["method"] == m]
        summary.append([m, repr(float(np.median([r["mse"] for r in sel]))),
                        repr(float(np.median([r["rmse"] for r in sel])))])
    (out / "distance_summary.csv").write_text(_csv(summary))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "scree": cmd_scree, "ordinate": cmd_ordinate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--input", help="samples x taxa table (TSV or CSV) of counts or proportions")
    common.add_argument("--tree", help="lineage table or Newick file")
    common.add_argument("--loss", choices=[k.value for k in LossKind])
    common.add_argument("--level", choices=[c.value for c in ConstraintLevel])
    common.add_argument("--k", type=int, help="number of principal compositions to cut at")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (default: PAA_THREADS or all cores)")
    common.add_argument("--log-scale", action="store_true", default=None, help="log-scale loss axes")
    common.add_argument("--levels", help="'all' or a comma list of levels (scree)")
    common.add_argument("--study", help="time or distance (bench)")
    common.add_argument("--dims", help="comma list of NxP settings, e.g. 100x25,100x50 (bench)")
    common.add_argument("--replicates", type=int)
    common.add_argument("--restarts", type=int, help="extra NMDS starts with seeded jitter (ordinate)")
    common.add_argument("--total-count", type=int, help="multinomial total count (bench)")
    common.add_argument("--n", type=int, help="simulated samples per replicate (bench)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="paa", description="Principal amalgamation analysis of compositional data.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="trace the full merge path")
    sub.add_parser("scree", parents=[common], help="percent loss against number of compositions")
    sub.add_parser("ordinate", parents=[common], help="NMDS of original vs principal compositions")
    sub.add_parser("bench", parents=[common], help="runtime or distance-preservation study")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"paa: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as e:
        print(f"paa: parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (HPAAError, TreeError, ValueError) as e:
        print(f"paa: engine error: {e}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
