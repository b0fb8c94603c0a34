"""Command-line driver: ``stabfrag <command> [flags]``.

Every run resolves its flags (and an optional ``--config`` JSON file) into
one config dict, validates it against ``run_config.schema.json`` and writes
``manifest.json`` into ``--out`` before any other file.

Randomness: replicate ``i`` draws from ``RngStream(seed, i)``; dislocation
calibration for ``frag-kernel`` uses ``RngStream(seed, CALIBRATION_STREAM)``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import frag, sampler, specfun, validation
from .errors import ConfigurationError, DomainError, NumericAccuracyError, StabfragError
from .rng import RngStream

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CALIBRATION_STREAM = 2**63

DEFAULTS = {
    "seed": 1,
    "out": "out",
    "threads": 1,
    "eps": 1e-3,
    "eps_cut": 0.1,
    "dust": None,
    "floor": 1e-6,
    "t_grid": [0.1, 0.3, 1.0],
    "n_rep": 100,
    "mode": "normalized",
    "delta_dur": frag.DEFAULT_DELTA_DUR,
    "kind": "q",
    "sampler": "semigroup",
    "suite": "quick",
    "x": 1.0,
}


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0+unknown"


def load_schema() -> dict:
    return json.loads(resources.files("stabfrag").joinpath("run_config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    """Raise ``UsageError`` naming the offending field."""
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "(root)"
        if err.validator == "required":
            where = err.message.split("'")[1]
        raise UsageError(f"config field {where}: {err.message}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with config fields; flags override it")
    common.add_argument("--alpha", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--threads", type=int, help="worker processes for replicates")
    common.add_argument("--eps", type=float, help="jump truncation level of path-level runs")
    common.add_argument("--eps-cut", dest="eps_cut", type=float, help="dislocation cutoff 1 - s_1 > eps_cut")
    common.add_argument("--dust", type=float, help="partition dust (relative); for frag-kernel the size of the smallest resolved part")
    common.add_argument("--floor", type=float, help="kernel-level freezing mass")
    common.add_argument("--t-grid", dest="t_grid", type=_floats, help="comma-separated times")
    common.add_argument("--n-rep", dest="n_rep", type=int, help="replicates")
    common.add_argument("--mode", choices=["normalized", "first_passage"])
    common.add_argument("--delta-dur", dest="delta_dur", type=float, help="duration window of normalized mode")

    p = _Parser(prog="stabfrag", description="Fragmentations of the stable tree: samplers and checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("constants", parents=[common], help="print the constants for alpha")
    d = sub.add_parser("density", parents=[common], help="tabulate q_1, rho_t or the semigroup weight to CSV")
    d.add_argument("--kind", choices=["q", "rho", "weight"])
    s = sub.add_parser("sample", parents=[common], help="draw partitions (or values) to JSONL")
    s.add_argument("--sampler", choices=["stable", "partition", "semigroup", "dislocation", "small-time", "bridge", "jump-field"])
    s.add_argument("--x", type=float, help="local time x of partition and bridge draws, horizon of jump-field draws")
    sub.add_parser("frag-path", parents=[common], help="path-level fragmentation traces")
    sub.add_parser("frag-kernel", parents=[common], help="kernel-level fragmentation traces")
    v = sub.add_parser("validate", parents=[common], help="run an acceptance suite")
    v.add_argument("suite_name", nargs="?", metavar="suite", help="quick or full")
    v.add_argument("--suite", dest="suite_flag")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config is not None:
        try:
            cfg.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}") from None
    for key in ("alpha", "seed", "out", "threads", "eps", "eps_cut", "dust", "floor", "t_grid", "n_rep", "mode", "delta_dur"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("kind", "sampler", "x"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if args.command == "validate":
        name = args.suite_name or args.suite_flag
        if name is not None:
            cfg["suite"] = name
        # the suites carry their own alpha values
        cfg.setdefault("alpha", 1.5)
    cfg["command"] = args.command
    validate_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# outputs


class Run:
    """Output directory with manifest-first bookkeeping."""

    def __init__(self, cfg: dict, files: list[str]):
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = {"artifact": "stabfrag", "version": _version(), "config": cfg, "files": files}
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.files = set(files)

    def write(self, name: str, text: str) -> Path:
        if name not in self.files:
            raise RuntimeError(f"{name} is not named in the manifest")
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return path


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _map(fn, n: int, threads: int) -> list:
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n), chunksize=max(1, n // (4 * threads))))


# ---------------------------------------------------------------------------
# commands


def cmd_constants(cfg: dict) -> int:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    doc = {"alpha": p.alpha, "c_big": p.c_big, "c_small": p.c_small, "d_const": p.d_const}
    run = Run(cfg, ["constants.json"])
    text = json.dumps(doc, indent=2) + "\n"
    run.write("constants.json", text)
    print(text, end="")
    return EXIT_OK


def cmd_density(cfg: dict) -> int:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    run = Run(cfg, ["density.csv"])
    rows = []
    if cfg["kind"] == "q":
        tab = specfun.q1_table(p)
        s = np.geomspace(1e-3, 1e4, 1401)
        rows = [("q", 1.0, float(x), float(f), float(c)) for x, f, c in zip(s, tab.pdf(s), tab.cdf(s))]
    else:
        for t in cfg["t_grid"]:
            if t <= 0:
                raise DomainError("density tables need t > 0")
            tab = specfun.rho_table(p, t) if cfg["kind"] == "rho" else specfun.weight_table(p, t)
            rows += [(cfg["kind"], float(t), float(x), float(f), float(c)) for x, f, c in zip(tab.grid, tab.pdf, tab.cdf)]
    run.write("density.csv", _csv(["kind", "t", "x", "pdf", "cdf"], rows))
    return EXIT_OK


def _sample_one(cfg: dict, i: int) -> str:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    rng = RngStream(cfg["seed"], i)
    kind = cfg["sampler"]
    t = float(cfg["t_grid"][0])
    x = float(cfg["x"])
    if kind == "stable":
        rec = {"value": sampler.sample_one_sided_stable(p, p.beta, 1.0, rng), "stream_id": i}
    elif kind == "partition":
        rec = sampler.sample_conditioned_partition(p, x, 1.0, cfg["dust"], rng).to_record(None, i)
    elif kind == "semigroup":
        rec = sampler.sample_semigroup_marginal(p, t, cfg["dust"], rng).to_record(t, i)
    elif kind == "dislocation":
        part, rate = sampler.sample_dislocation(p, cfg["eps_cut"], cfg["dust"], rng)
        rec = {**part.to_record(None, i), "rate": rate}
    elif kind == "small-time":
        rec = sampler.sample_small_time_limit(p, cfg["dust"], rng).to_record(None, i)
    elif kind == "bridge":
        rec = {**sampler.sample_subordinator_bridge(p, x, 1.0, cfg["dust"], rng).to_record(), "stream_id": i}
    else:
        rec = {**sampler.sample_jump_field(p, x, cfg["eps"], rng).to_record(), "stream_id": i}
    return json.dumps(rec)


def cmd_sample(cfg: dict) -> int:
    run = Run(cfg, ["samples.jsonl"])
    lines = _map(partial(_sample_one, cfg), cfg["n_rep"], cfg["threads"])
    run.write("samples.jsonl", "".join(line + "\n" for line in lines))
    return EXIT_OK


def _path_trace(cfg: dict, i: int) -> frag.FragmentationTrace:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    return frag.frag_path_level(p, cfg["t_grid"], cfg["eps"], cfg["mode"], RngStream(cfg["seed"], i), cfg["delta_dur"])


def _kernel_trace(cfg: dict, disl: sampler.DislocationSampler, i: int) -> frag.FragmentationTrace:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    res = frag.KERNEL_RESOLUTION if cfg["dust"] is None else cfg["dust"]
    grid = cfg["t_grid"]
    return frag.frag_kernel_level(
        p, cfg["eps_cut"], cfg["floor"], grid[-1], RngStream(cfg["seed"], i), t_grid=grid, sampler=disl, resolution=res
    )


def _write_traces(run: Run, traces: list[frag.FragmentationTrace]) -> None:
    run.write("traces.jsonl", "".join(line + "\n" for line in frag.trace_records(traces)))
    run.write("summary.csv", frag.summary_csv(frag.summarize(traces)))


def cmd_frag_path(cfg: dict) -> int:
    run = Run(cfg, ["traces.jsonl", "summary.csv"])
    _write_traces(run, _map(partial(_path_trace, cfg), cfg["n_rep"], cfg["threads"]))
    return EXIT_OK


def cmd_frag_kernel(cfg: dict) -> int:
    p = specfun.derive_constants(cfg["alpha"], allow_edge=True)
    run = Run(cfg, ["traces.jsonl", "summary.csv"])
    disl = sampler.DislocationSampler.calibrate(p, cfg["eps_cut"], RngStream(cfg["seed"], CALIBRATION_STREAM))
    _write_traces(run, _map(partial(_kernel_trace, cfg, disl), cfg["n_rep"], cfg["threads"]))
    return EXIT_OK


def cmd_validate(cfg: dict) -> int:
    run = Run(cfg, ["reports.jsonl", "validation.csv"])
    reports = validation.run_suite(cfg["suite"], cfg["seed"], log=print)
    run.write("reports.jsonl", "".join(json.dumps(r.to_record(), default=float) + "\n" for r in reports))
    rows = [(r.name, float(r.statistic), float(r.p_value), r.n, "pass" if r.passed else "fail") for r in reports]
    run.write("validation.csv", _csv(["name", "statistic", "p_value", "n", "result"], rows))
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"failed: {r.line()} {json.dumps(r.details, default=float)}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "density": cmd_density,
    "sample": cmd_sample,
    "frag-path": cmd_frag_path,
    "frag-kernel": cmd_frag_kernel,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[cfg["command"]](cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericAccuracyError as err:
        print(f"numeric accuracy error: {err} (achieved {err.achieved:.3g})", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ConfigurationError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except StabfragError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
