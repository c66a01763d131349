"""``drenv`` command line.

Exit codes: 0 success, 1 validation (bad config, failed condition), 2 runtime
or resource limit, 3 property check failed (a counterexample was found).
Every batch command writes its outputs plus ``manifest.json`` into ``--out``
and records ``config hash -> outputs`` in ``--out/index.json``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from . import experiments as ex
from .barrier import side_function_from_lfield, side_function_from_rfield, verify_barrier, NoBarrierEvidence
from .cluster import (
    backward_cluster, depth_box, forward_cluster, l_field, mutual_cluster, r_field, save_cluster,
)
from .environment import EnvironmentField, from_explicit, funny_backward_fixture
from .lattice import BoxError, LatticeBox, ResourceError, transverse_window
from .model import ConditionError, SpecError, load_spec, spec_from_dict

log = logging.getLogger("drenv")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PROPERTY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# --- config helpers ----------------------------------------------------------


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


def _spec_from(value, base: Path):
    if isinstance(value, dict):
        return spec_from_dict(value)
    return load_spec(base / value)


def _site(text: str | None, d: int):
    if text is None:
        return (0,) * d
    vals = tuple(int(v) for v in str(text).replace("(", "").replace(")", "").split(","))
    if len(vals) != d:
        raise ConfigError(f"site {text!r} must have {d} coordinates")
    return vals


def _grid(value) -> list[Fraction]:
    if isinstance(value, dict):
        start, stop, step = (Fraction(str(value[k])) for k in ("start", "stop", "step"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        out, p = [], start
        while p <= stop:
            out.append(p)
            p += step
        return out
    return [Fraction(str(v)) for v in value]


def _depths(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = value.split(",")
    return tuple(int(v) for v in value)


def load_experiment(path) -> tuple[dict, object]:
    """Experiment config: ``spec`` (path or inline), plus per-command keys."""
    path = Path(path)
    cfg = _read_json(path)
    if "spec" not in cfg:
        raise ConfigError(f"{path}: missing 'spec'")
    return cfg, _spec_from(cfg["spec"], path.parent)


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


class Run:
    """Output directory bookkeeping: files, manifest and index."""

    def __init__(self, args, payload: dict):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = args.command
        self.seed = getattr(args, "seed", None)
        self.hash = config_hash({"command": args.command, "seed": self.seed, **payload})
        self.started = _now()
        self.outputs: list[str] = []

    def write(self, name: str, data: str | bytes) -> Path:
        p = self.out / name
        if isinstance(data, str):
            p.write_text(data, encoding="utf-8", newline="\n")
        else:
            p.write_bytes(data)
        self.outputs.append(name)
        return p

    def finish(self, status: str = "ok") -> None:
        manifest = {
            "command": self.command,
            "config_hash": self.hash,
            "version": __version__,
            "base_seed": self.seed,
            "started": self.started,
            "finished": _now(),
            "status": status,
            "outputs": self.outputs,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        index_path = self.out / "index.json"
        index = json.loads(index_path.read_text()) if index_path.exists() else {}
        index[self.hash] = {"command": self.command, "outputs": self.outputs}
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# --- subcommands -------------------------------------------------------------


def cmd_cluster(args) -> int:
    spec = load_spec(args.spec)
    origin = _site(args.origin, spec.d)
    box = depth_box(origin, args.radius)
    field = EnvironmentField(spec, args.seed)
    fn = {"forward": forward_cluster, "backward": backward_cluster, "mutual": mutual_cluster}[args.kind]
    cl = fn(field, origin, box)
    run = Run(args, {"spec": spec.canonical(), "kind": args.kind, "radius": args.radius, "origin": origin})
    name = f"{args.kind}_cluster.grid"
    save_cluster(cl, run.out / name)
    run.outputs.append(name)
    run.finish()
    print(f"{args.kind} cluster: {len(cl)} sites in {box}; touched boundary: {cl.touched_boundary}")
    return EXIT_OK


def _field_cmd(args, kind: str) -> int:
    spec = load_spec(args.spec)
    origin = _site(args.origin, spec.d)
    window = transverse_window(spec.d, args.window_radius)
    depths = _depths(args.depths)
    field = EnvironmentField(spec, args.seed)
    F = (l_field if kind == "L" else r_field)(field, origin, window, depths)
    run = Run(args, {"spec": spec.canonical(), "window": args.window_radius, "depths": depths, "origin": origin})
    run.write(f"{kind.lower()}field.csv", F.to_csv())
    run.finish()
    print(f"{kind} field: {int(F.stable.sum())}/{F.stable.size} lines stable (coverage {F.coverage:.3f})")
    return EXIT_OK


def cmd_lfield(args) -> int:
    return _field_cmd(args, "L")


def cmd_rfield(args) -> int:
    return _field_cmd(args, "R")


def cmd_barrier(args) -> int:
    spec = load_spec(args.spec)
    origin = _site(args.origin, spec.d)
    window = transverse_window(spec.d, args.window_radius)
    depths = _depths(args.depths)
    field = EnvironmentField(spec, args.seed)
    blk = field.block(depth_box(origin, depths[-1]))
    fn, extract = (l_field, side_function_from_lfield) if args.source == "L" else (r_field, side_function_from_rfield)
    try:
        w, _ = extract(fn(blk, origin, window, depths))
    except NoBarrierEvidence as exc:
        print(str(exc))
        run = Run(args, {"spec": spec.canonical(), "window": args.window_radius, "depths": depths})
        run.finish("no-evidence")
        return EXIT_OK
    report = verify_barrier(w, blk)
    run = Run(args, {"spec": spec.canonical(), "window": args.window_radius, "depths": depths,
                     "source": args.source})
    run.write("barrier.txt", report.to_text())
    run.write("barrier_violations.csv", report.to_csv())
    run.finish(report.verdict)
    sys.stdout.write(report.to_text())
    return EXIT_PROPERTY if report.verdict == "fail" else EXIT_OK


def cmd_theorem1(args) -> int:
    cfg, spec = load_experiment(args.config)
    window = transverse_window(spec.d, int(cfg.get("window_radius", 20)))
    depths = _depths(cfg.get("depths", [100, 200]))
    samples = int(cfg.get("samples", 100))
    run = Run(args, {"config": cfg})
    failures = 0
    ps = [p for p in _grid(cfg["p_values"])] if "p_values" in cfg else [None]
    for p in ps:
        s = spec if p is None else spec.with_p(p)
        verdicts = ex.theorem1_test(s, window, depths, samples, args.seed, workers=args.workers)
        tag = "" if p is None else f"_p{float(p):g}"
        run.write(f"theorem1{tag}.csv", ex.coupling_csv(verdicts))
        ok = sum(v.l_equal and v.ray_equal for v in verdicts)
        print(f"p={s.p_float:g}: {ok}/{len(verdicts)} samples with L equality and ray-closure equality")
        failures += len(verdicts) - ok
    run.finish("ok" if not failures else "property-failure")
    return EXIT_PROPERTY if failures else EXIT_OK


def cmd_inclusions(args) -> int:
    cfg, spec = load_experiment(args.config)
    box = LatticeBox.cube(spec.d, int(cfg.get("box_radius", 30)))
    samples = int(cfg.get("samples", 200))
    rep = ex.inclusion_suite(spec, box, samples, args.seed, workers=args.workers)
    run = Run(args, {"config": cfg})
    run.write("inclusions.csv", ex.inclusion_csv(rep))
    run.finish("ok" if rep.passed else "property-failure")
    for name, n in rep.checks.items():
        print(f"{name}: {n} violations in {samples} samples")
    return EXIT_OK if rep.passed else EXIT_PROPERTY


def _scan_args(cfg, spec):
    window = transverse_window(spec.d, int(cfg.get("window_radius", 3)))
    return (_grid(cfg.get("grid", {"start": "0.05", "stop": "0.95", "step": "0.05"})), window,
            _depths(cfg.get("depths", [200, 400])), int(cfg.get("samples", 200)))


def cmd_pcscan(args) -> int:
    cfg, spec = load_experiment(args.config)
    grid, window, depths, samples = _scan_args(cfg, spec)
    res = ex.pc_scan(spec, grid, window, depths, samples, args.seed, workers=args.workers)
    run = Run(args, {"config": cfg})
    run.write("pcscan.csv", res.to_csv())
    run.write("pcscan_crossings.csv", res.summary_csv())
    run.finish()
    c = res.p_c
    print(f"p_c estimate {c.estimate:.4f} (95% CI {c.lo:.4f}..{c.hi:.4f})")
    return EXIT_OK


def cmd_backcompare(args) -> int:
    cfg, spec = load_experiment(args.config)
    grid, window, depths, samples = _scan_args(cfg, spec)
    cmp_ = ex.backward_transition_compare(spec, grid, window, depths, samples, args.seed, workers=args.workers)
    run = Run(args, {"config": cfg})
    run.write("backcompare.csv", cmp_.to_csv())
    run.write("backcompare_crossings.csv", cmp_.scan.summary_csv())
    run.finish()
    lc, rc = cmp_.l_crossing, cmp_.r_crossing
    print(f"L crossing {lc.estimate:.4f} [{lc.lo:.4f}, {lc.hi:.4f}]; "
          f"R crossing {rc.estimate:.4f} [{rc.lo:.4f}, {rc.hi:.4f}]; gap {cmp_.gap:+.4f}; "
          f"{'agree' if cmp_.agree else 'DISAGREE'}")
    return EXIT_OK


def cmd_zeta(args) -> int:
    cfg, spec = load_experiment(args.config)
    try:
        v = tuple(int(c) for c in cfg["v"])
        n_list = [int(n) for n in cfg["n"]]
    except KeyError as exc:
        raise ConfigError(f"zeta config needs {exc.args[0]!r}") from None
    p = cfg.get("p", None)
    rows = ex.zeta_estimate(spec, v, str(p) if p is not None else spec.p, n_list,
                            int(cfg.get("samples", 100)), args.seed,
                            depths=_depths(cfg["depths"]) if "depths" in cfg else None,
                            workers=args.workers)
    run = Run(args, {"config": cfg})
    run.write("zeta.csv", ex.zeta_csv(rows))
    run.finish()
    for r in rows:
        print(f"n={r.n}: mean L/n = {r.mean:.4f} +- {r.stderr:.4f} ({r.stable}/{r.samples} stable)")
    return EXIT_OK


def cmd_render(args) -> int:
    from .render import RenderJob, render

    job = RenderJob(args.grid, args.output, mode=args.mode, palette=args.palette, scale=args.scale,
                    plane=args.plane, preset=args.preset)
    data = render(job)
    print(f"wrote {args.output} ({len(data)} bytes, sha256 {hashlib.sha256(data).hexdigest()[:16]})")
    return EXIT_OK


def cmd_fixture(args) -> int:
    fx = funny_backward_fixture()
    box = LatticeBox.cube(3, 6)
    expected = set(fx.loop)
    ok = 0
    for i in range(args.seeds):
        B = backward_cluster(from_explicit(fx, args.seed + i), (0, 0, 0), box)
        got = set(B.sites())
        if got == expected:
            ok += 1
        else:
            print(f"seed {args.seed + i}: extra {sorted(got - expected)} missing {sorted(expected - got)}")
    status = "PASS" if ok == args.seeds else "FAIL"
    print(f"{status}: B_o = {len(expected)}-vertex loop ({ok}/{args.seeds} seeds)")
    return EXIT_OK if ok == args.seeds else EXIT_PROPERTY


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation failures, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="drenv", description="Degenerate random environments on Z^d.")
    ap.add_argument("--version", action="version", version=f"drenv {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, required=True, help="base seed (required)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="parallel worker processes (default: logical cores)")

    p = sub.add_parser("cluster", help="forward/backward/mutual cluster grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--kind", choices=["forward", "backward", "mutual"], default="forward")
    p.add_argument("--radius", type=int, default=50, help="half-width of the cube box")
    p.add_argument("--origin")
    common(p)
    p.set_defaults(fn=cmd_cluster)

    for name, fn in (("lfield", cmd_lfield), ("rfield", cmd_rfield)):
        p = sub.add_parser(name, help=f"{name[0].upper()} boundary field over a transverse window")
        p.add_argument("--spec", required=True)
        p.add_argument("--window-radius", type=int, default=10)
        p.add_argument("--depths", default="100,200", help="comma-separated increasing depths")
        p.add_argument("--origin")
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("barrier", help="extract a side function from L or R and verify it")
    p.add_argument("--spec", required=True)
    p.add_argument("--source", choices=["L", "R"], default="L")
    p.add_argument("--window-radius", type=int, default=5)
    p.add_argument("--depths", default="200,400")
    p.add_argument("--origin")
    common(p)
    p.set_defaults(fn=cmd_barrier)

    for name, fn, helptext in (
        ("theorem1", cmd_theorem1, "coupled L-field and ray-closure equality"),
        ("inclusions", cmd_inclusions, "shared-seed cluster inclusion suite"),
        ("pcscan", cmd_pcscan, "barrier-fraction scan over p and its 50% crossing"),
        ("backcompare", cmd_backcompare, "forward vs backward transition crossings"),
        ("zeta", cmd_zeta, "L_{nv}/n slope estimates"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("render", help="PPM/SVG image of one or two cluster grids")
    p.add_argument("--grid", action="append", required=True, help="cluster grid file (repeat for overlay)")
    p.add_argument("--output", required=True, help="output .ppm or .svg")
    p.add_argument("--mode", choices=["2d", "3d"], default="2d")
    p.add_argument("--palette", default="default")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--plane", type=int, help="x_1 coordinate of the 3d section")
    p.add_argument("--preset", type=int, default=0, help="3d axis preset 0-2")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("fixture-funnyb", help="golden test: backward cluster of the shipped 3-D fixture")
    p.add_argument("--seeds", type=int, default=5, help="number of completion seeds")
    p.add_argument("--seed", type=int, default=0, help="first completion seed (default 0)")
    p.set_defaults(fn=cmd_fixture)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConditionError as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        if exc.report is not None:
            print(exc.report, file=sys.stderr)
        return EXIT_VALIDATION
    except (SpecError, ConfigError, BoxError, ValueError, KeyError, TypeError) as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ResourceError, MemoryError, OSError, RuntimeError) as exc:
        print(f"error (runtime): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
