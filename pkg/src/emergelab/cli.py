"""Command-line runner: every run writes a manifest plus deterministic data files."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, _kernels
from .emergence import DegenerateCloudError, EmergenceQuery, SaturationError, curve_svg, emergence_curve
from .jets import verify_covered_domain
from .sinks import sink_census
from .systems import CATALOGUE, DynamicsError, UsageError, orbit, system_from_dict

log = logging.getLogger("emergelab")

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_INCONCLUSIVE, EXIT_NEGATIVE = 0, 2, 3, 4, 5
OUT_ENV = "EMERGELAB_OUT"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def load_schema(name: str) -> dict:
    return json.loads(resources.files("emergelab").joinpath(f"schemas/{name}.schema.json").read_text())


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class Run:
    """Output directory plus manifest; the manifest is written first and finalised last."""

    def __init__(self, out: Path, command: str, config: dict, seed: int | None, threads: int,
                 inputs: dict[str, str]):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[dict] = []
        self.manifest = {
            "command": command, "config": config, "seed": seed, "threads": threads,
            "version": __version__, "backend": _kernels.BACKEND, "started": _now(),
            "finished": None, "status": "running", "exit_code": None, "message": None,
            "inputs": inputs, "outputs": [],
        }
        self._write_manifest()

    def _write_manifest(self):
        jsonschema.validate(self.manifest, load_schema("manifest"))
        (self.out / "manifest.json").write_text(_dump_json(self.manifest), newline="\n")

    def write(self, name: str, text: str):
        data = text.encode()
        (self.out / name).write_bytes(data)
        self.outputs.append({"path": name, "sha256": _sha256(data)})

    def finish(self, code: int, message: str | None = None, summary: dict | None = None):
        self.manifest.update(finished=_now(), exit_code=code, message=message, outputs=self.outputs,
                             status="ok" if code in (EXIT_OK, EXIT_INCONCLUSIVE, EXIT_NEGATIVE) else "failed")
        if summary is not None:
            self.manifest["summary"] = summary
        self._write_manifest()


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def read_config(path: str | None) -> tuple[dict, dict[str, str]]:
    if path is None:
        return {}, {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, load_schema("config"))
    except jsonschema.ValidationError as exc:
        raise CliError(f"config {path} rejected: {exc.message}") from None
    return cfg, {str(p): _sha256(raw)}


def _system(cfg: dict):
    if "system" not in cfg:
        raise CliError("config has no 'system' section")
    return system_from_dict(cfg["system"])


def _param(cfg: dict, system):
    return cfg.get("param", [0.0] * system.k)


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUT_ENV)
    return Path(base) / command if base else Path("runs") / command


def _seed(args, cfg: dict, section: dict | None = None) -> int:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise CliError("--seed must be an unsigned 64-bit integer")
        return args.seed
    return int((section or {}).get("seed", cfg.get("seed", 0)))


def _csv_rows(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def catalogue_listing() -> list[dict]:
    rows = []
    for kind, cls in CATALOGUE.items():
        sysm = cls()
        lo, hi = sysm.box
        rows.append({"kind": kind, "dim": sysm.dim, "param_arity": sysm.k,
                     "box": [[float(a), float(b)] for a, b in zip(lo, hi)],
                     "branches": sysm.n_branches, "defaults": sysm.to_dict()})
    return rows


def cmd_systems(args) -> int:
    rows = catalogue_listing()
    if args.json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    print(f"{'kind':<16} {'dim':>3} {'params':>6} {'branches':>8}  box")
    for r in rows:
        box = " x ".join(f"[{a:g}, {b:g}]" for a, b in r["box"])
        print(f"{r['kind']:<16} {r['dim']:>3} {r['param_arity']:>6} {r['branches']:>8}  {box}")
    return EXIT_OK


def cmd_emergence(args) -> int:
    cfg, inputs = read_config(args.config)
    system = _system(cfg)
    section = dict(cfg.get("emergence", {}))
    section["seed"] = _seed(args, cfg, section)
    query = EmergenceQuery(**section)
    run = Run(_out_dir(args, "emergence"), "emergence", cfg, query.seed, args.threads, inputs)
    try:
        curve = emergence_curve(system, _param(cfg, system), query, threads=args.threads)
    except (DegenerateCloudError, SaturationError) as exc:
        run.finish(EXIT_DEGENERATE, str(exc))
        raise CliError(str(exc), EXIT_DEGENERATE) from None
    summary = {"system": system.label(), **curve.summary()}
    run.write("curve.csv", curve.to_csv())
    run.write("curve.json", _dump_json(summary))
    run.write("curve.svg", curve_svg(curve, _now()))
    run.finish(EXIT_OK, summary=summary)
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"{system.label()}: N = {curve.counts.tolist()} at eps = {curve.epsilons.tolist()}, "
              f"slope {curve.slope:.4f}, class {curve.scaling}")
    return EXIT_OK


def cmd_sinks(args) -> int:
    cfg, inputs = read_config(args.config)
    system = _system(cfg)
    opts = cfg.get("sinks", {})
    # --seed jitters the seed grid; without it the grid is the plain cell-centre lattice
    jitter = args.seed if args.seed is not None else opts.get("jitter_seed")
    run = Run(_out_dir(args, "sinks"), "sinks", cfg, jitter, args.threads, inputs)
    census = sink_census(system, _param(cfg, system), opts.get("max_period", 1),
                         grid=opts.get("grid", 50), jitter_seed=jitter,
                         dedup_tol=opts.get("dedup_tol", 1e-6), threads=args.threads)
    run.write("census.csv", census.to_csv())
    run.write("census.json", census.to_json())
    summary = {"system": system.label(), "sink_count": len(census),
               "max_period": census.max_period}
    run.finish(EXIT_OK, summary=summary)
    if args.json:
        print(census.to_json(), end="")
    else:
        print(f"{system.label()}: {len(census)} sink(s) of period <= {census.max_period}")
        for o in census.sinks:
            print(f"  p={o.period} z={o.representative.tolist()} |mult|={np.abs(o.multipliers).tolist()}")
    return EXIT_OK


def _parse_fraction(text: str) -> Fraction:
    try:
        val = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise CliError(f"bad contraction {text!r}") from None
    if not 0 < val < 1:
        raise CliError("contraction must lie in (0, 1)")
    return val


def cmd_verify_parablender(args) -> int:
    cfg, inputs = read_config(args.config)
    opts = dict(cfg.get("parablender", {}))
    for key in ("d", "k", "contraction"):
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    d, k = int(opts.get("d", 1)), int(opts.get("k", 1))
    contraction = _parse_fraction(str(opts.get("contraction", "2/3")))
    cert = verify_covered_domain(d, k, contraction)  # raises UsageError on the |E| guard
    run = Run(_out_dir(args, "verify-parablender"), "verify-parablender",
              {**cfg, "parablender": {"d": d, "k": k, "contraction": str(contraction)}},
              None, args.threads, inputs)
    run.write("certificate.json", cert.to_json())
    run.write("certificate.txt", cert.render())
    run.finish(cert.exit_code, summary={"verdict": cert.verdict, "d": d, "k": k})
    print(cert.to_json() if args.json else cert.render(), end="")
    return cert.exit_code


def _scatter_svg(points: np.ndarray, stamp: str) -> str:
    W = H = 400
    M = 30
    P = points if points.shape[1] > 1 else np.column_stack([points[:-1, 0], points[1:, 0]])
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    uv = (P - lo) / span
    dots = "".join(f'<circle cx="{M + u * (W - 2 * M):.2f}" cy="{H - M - v * (H - 2 * M):.2f}" r="1"/>'
                   for u, v in uv[:20000])
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n<!-- generated {stamp} -->\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">'
            f'<rect width="{W}" height="{H}" fill="white"/><g fill="#236">{dots}</g></svg>\n')


def cmd_orbit(args) -> int:
    cfg, inputs = read_config(args.config)
    system = _system(cfg)
    if "orbit" not in cfg:
        raise CliError("config has no 'orbit' section")
    orbit_cfg = cfg["orbit"]
    run = Run(_out_dir(args, "orbit"), "orbit", cfg, None, args.threads, inputs)
    t = orbit(system, _param(cfg, system), orbit_cfg["start"], orbit_cfg.get("n", 1000))
    header = ["step"] + [f"x{j}" for j in range(system.dim)] + ["escaped"]
    rows = ([s] + [f"{v:.17g}" for v in z] + [int(e)] for s, (z, e) in enumerate(zip(t.coords, t.escaped)))
    run.write("orbit.csv", _csv_rows(header, rows))
    run.write("orbit.svg", _scatter_svg(t.coords[~t.escaped] if (~t.escaped).any() else t.coords, _now()))
    run.finish(EXIT_OK, summary={"system": system.label(), "n": len(t), "escape_time": t.escape_time})
    print(f"{system.label()}: {len(t)} points, escape time {t.escape_time}")
    return EXIT_OK


REPORT_HEADER = ["run", "command", "system", "eps_min", "eps_max", "N_min", "N_max", "N_final",
                 "scaling", "sink_count", "verdict"]


def cmd_report(args) -> int:
    if not args.runs:
        raise CliError("report needs at least one run directory")
    rows = []
    for d in args.runs:
        mpath = Path(d) / "manifest.json"
        if not mpath.is_file():
            log.warning("skipping %s: no manifest", d)
            continue
        m = json.loads(mpath.read_text())
        s = m.get("summary", {})
        eps, N = s.get("epsilons") or [], s.get("N") or []
        rows.append([Path(d).name, m.get("command", ""), s.get("system", ""),
                     f"{min(eps):.17g}" if eps else "", f"{max(eps):.17g}" if eps else "",
                     min(N) if N else "", max(N) if N else "", N[-1] if N else "",
                     s.get("scaling", ""), s.get("sink_count", ""), s.get("verdict", "")])
    out = _out_dir(args, "report")
    run = Run(out, "report", {"runs": [str(r) for r in args.runs]}, None, args.threads, {})
    run.write("report.csv", _csv_rows(REPORT_HEADER, rows))
    md = ["| " + " | ".join(REPORT_HEADER) + " |", "|" + "---|" * len(REPORT_HEADER)]
    md += ["| " + " | ".join(str(v) for v in r) + " |" for r in rows]
    run.write("report.md", "# Run summary\n\n" + "\n".join(md) + "\n")
    run.finish(EXIT_OK, summary={"rows": len(rows)})
    print("\n".join(md))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV}/<command> or runs/<command>)")
    common.add_argument("--seed", metavar="U64", type=_u64, help="override the configured seed")
    common.add_argument("--threads", metavar="N", type=_positive, default=os.cpu_count() or 1)
    common.add_argument("--json", action="store_true", help="print machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="emergelab", description="Emergence and parablender laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("systems", parents=[common], help="list the built-in systems").set_defaults(fn=cmd_systems)
    sub.add_parser("emergence", parents=[common], help="emergence curve of a system").set_defaults(fn=cmd_emergence)
    sub.add_parser("sinks", parents=[common], help="sink census").set_defaults(fn=cmd_sinks)
    vp = sub.add_parser("verify-parablender", parents=[common], help="jet-space covering certificate")
    vp.add_argument("--d", type=int)
    vp.add_argument("--k", type=int)
    vp.add_argument("--contraction", help="y-contraction as a fraction, e.g. 1/3")
    vp.set_defaults(fn=cmd_verify_parablender)
    sub.add_parser("orbit", parents=[common], help="dump a trajectory").set_defaults(fn=cmd_orbit)
    rp = sub.add_parser("report", parents=[common], help="summarise run directories")
    rp.add_argument("runs", nargs="*", metavar="RUN_DIR")
    rp.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"emergelab: {exc}", file=sys.stderr)
        return exc.code
    except (UsageError, TypeError, ValueError) as exc:
        print(f"emergelab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateCloudError as exc:
        print(f"emergelab: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DynamicsError as exc:
        print(f"emergelab: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
