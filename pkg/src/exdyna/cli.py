"""Experiment runner.

    exdyna run --sparsifier exdyna --workers 8 --density 0.001 --iters 1000 \\
        --workload synthetic --seed 7 --out run.csv
    exdyna compare exdyna hardthreshold --workers 8 --iters 500 --out-dir cmp/

Settings may also come from a ``--config`` file of ``key = value`` lines
(``#`` starts a comment); keys are the long flag names without dashes, with
``-`` or ``_`` accepted. Command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .core import CSV_COLUMNS, CSV_SCHEMA_VERSION, ConfigError, LedgerRow, SparsifierConfig, validate
from .engine import SPARSIFIERS, Simulator
from .workloads import (StreamSpec, SyntheticSource, TaskSpec, make_task, layered_segments)

log = logging.getLogger("exdyna")

# flag name -> (type, default)
OPTIONS = {
    "sparsifier": (str, "exdyna"),
    "workers": (int, 8),
    "gradients": (int, None),
    "density": (float, 0.001),
    "iters": (int, 1000),
    "blocks": (int, None),
    "alpha": (float, 1.1),
    "beta": (float, 2.0),
    "gamma": (float, 0.01),
    "blk-move": (int, 1),
    "min-blk": (int, 2),
    "delta0": (float, None),
    "fixed-delta": (float, None),
    "max-density-cap": (float, None),
    "eta": (float, None),
    "workload": (str, "synthetic"),
    "distribution": (str, "laplace"),
    "segments": (int, 16),
    "skew": (float, 4.0),
    "decay": (float, 1.0),
    "decay-step": (int, None),
    "step-factor": (float, 0.1),
    "dataset-size": (int, 1000),
    "batch-size": (int, 32),
    "static-partitions": (bool, False),
    "seed": (int, 0),
    "out": (str, None),
}


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(name: str, text: str):
    typ, _ = OPTIONS[name]
    if text.strip().lower() in ("", "none"):
        return None
    if typ is bool:
        return _parse_bool(text)
    try:
        return typ(float(text)) if typ is int and "e" in text.lower() else typ(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict keyed by flag name."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        name = key.replace("_", "-")
        if name not in OPTIONS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[name] = _convert(name, value)
    return out


def format_config_text(settings: dict) -> str:
    lines = []
    for name in OPTIONS:
        if name in settings:
            v = settings[name]
            lines.append(f"{name} = {'none' if v is None else repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def _add_options(p: argparse.ArgumentParser, skip=()):
    for name, (typ, _) in OPTIONS.items():
        if name in skip:
            continue
        flag = "--" + name
        if typ is bool:
            p.add_argument(flag, dest=name, action="store_const", const=True, default=None)
        elif name == "sparsifier":
            p.add_argument(flag, dest=name, choices=SPARSIFIERS, default=None)
        elif name == "workload":
            p.add_argument(flag, dest=name, choices=("synthetic", "quadratic", "logistic"), default=None)
        else:
            p.add_argument(flag, dest=name, type=lambda s, n=name: _convert(n, s), default=None)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def resolve_settings(ns: argparse.Namespace) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    settings = {name: default for name, (_, default) in OPTIONS.items()}
    if getattr(ns, "config", None) is not None:
        settings.update(parse_config_text(Path(ns.config).read_text()))
    for name in OPTIONS:
        v = getattr(ns, name, None)
        if v is not None:
            settings[name] = v
    return settings


def build(settings: dict):
    """Create ``(config, source, simulator)`` from resolved settings."""
    workload = settings["workload"]
    n_g = settings["gradients"]
    if n_g is None:
        n_g = 1_000_000 if workload == "synthetic" else 10_000
    seed = settings["seed"]
    if workload == "synthetic":
        spec = StreamSpec(
            n_g=n_g, segments=layered_segments(n_g, settings["skew"], settings["segments"], seed),
            distribution=settings["distribution"], decay=settings["decay"],
            decay_step=settings["decay-step"], step_factor=settings["step-factor"], seed=seed)
        source = SyntheticSource(spec)
        eta = settings["eta"] if settings["eta"] is not None else 1.0
    else:
        source = make_task(TaskSpec(kind=workload, dimension=n_g, n_samples=settings["dataset-size"],
                                    batch_size=settings["batch-size"], skew=settings["skew"], seed=seed))
        eta = settings["eta"] if settings["eta"] is not None else 0.5
    config = validate(SparsifierConfig(
        n=settings["workers"], n_g=n_g, d=settings["density"], n_b=settings["blocks"],
        delta_0=settings["delta0"], alpha=settings["alpha"], beta=settings["beta"],
        gamma=settings["gamma"], blk_move=settings["blk-move"], min_blk=settings["min-blk"],
        eta=eta, seed=seed, max_density_cap=settings["max-density-cap"]))
    sim = Simulator(config, source, settings["sparsifier"],
                    static_partitions=bool(settings["static-partitions"]),
                    fixed_delta=settings["fixed-delta"])
    return config, source, sim


def write_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.as_csv_fields())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows: list[LedgerRow], k: int) -> dict:
    dens = np.array([r.density for r in rows])
    f = np.array([r.f_t for r in rows])
    return {
        "iterations": len(rows),
        "target_k": k,
        "mean_density": float(dens.mean()) if len(rows) else math.nan,
        "mean_f_t": float(f.mean()) if len(rows) else math.nan,
        "mean_eps": float(np.mean([r.eps for r in rows])) if rows else math.nan,
        "duplicates": int(sum(r.duplicates for r in rows)),
        "final_delta": rows[-1].delta if rows else None,
        "final_loss": rows[-1].loss if rows else None,
    }


def _summary_text(settings: dict, config: SparsifierConfig, sim: Simulator, stats: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {CSV_SCHEMA_VERSION}\n# effective config\n")
    buf.write(format_config_text(settings))
    buf.write(f"# derived\nk = {config.k}\nn_b = {config.n_b}\n# results\n")
    for key, v in stats.items():
        buf.write(f"{key} = {v}\n")
    d = sim.diagnostics
    buf.write(f"adjust_moves = {d.adjust_moves}\nadjust_skips = {d.adjust_skips}\n"
              f"cap_fired = {d.cap_fired}\nidle_worker_iters = {d.idle_worker_iters}\n")
    return buf.getvalue()


def execute(settings: dict, out: Path | None):
    config, _, sim = build(settings)
    rows = sim.run(settings["iters"])
    stats = summarize(rows, config.k)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh)
        out.with_suffix(".summary.txt").write_text(_summary_text(settings, config, sim, stats))
    return rows, stats


def cmd_run(ns) -> int:
    settings = resolve_settings(ns)
    out = Path(settings["out"]) if settings["out"] else None
    _, stats = execute(settings, out)
    if out is None:
        for key, v in stats.items():
            print(f"{key} = {v}")
    return 0


def cmd_compare(ns) -> int:
    if len(ns.names) < 2:
        raise ConfigError("compare needs at least two sparsifiers")
    settings = resolve_settings(ns)
    out_dir = Path(ns.out_dir) if ns.out_dir else None
    results = []
    for name in ns.names:
        s = dict(settings)
        if name == "exdyna-static":
            s.update(sparsifier="exdyna", **{"static-partitions": True})
        elif name in SPARSIFIERS:
            s["sparsifier"] = name
        else:
            raise ConfigError(f"unknown sparsifier {name!r}")
        if s["sparsifier"] != "hardthreshold":
            s["fixed-delta"] = None
        out = out_dir / f"{name}.csv" if out_dir else None
        _, stats = execute(s, out)
        results.append((name, stats))
    print(f"{'sparsifier':<16}{'mean_density':>14}{'mean_f_t':>10}{'duplicates':>12}")
    for name, st in results:
        print(f"{name:<16}{st['mean_density']:>14.6g}{st['mean_f_t']:>10.4f}{st['duplicates']:>12d}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exdyna", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one sparsifier and write a metrics CSV")
    _add_options(run_p)
    run_p.set_defaults(func=cmd_run)
    cmp_p = sub.add_parser("compare", help="run several sparsifiers on the same stream")
    cmp_p.add_argument("names", nargs="+",
                       help=f"two or more of {', '.join(SPARSIFIERS)}, exdyna-static")
    _add_options(cmp_p, skip=("sparsifier", "out"))
    cmp_p.add_argument("--out-dir", default=None)
    cmp_p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"exdyna: invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"exdyna: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
