"""Command-line front end: ``sepapprox <command> [options]``.

Configuration comes from an optional JSON file (``--config``) whose keys
mirror :data:`DEFAULTS`; command-line flags override file values.  Every
output file carries the hash of the effective configuration.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .errors import ConfigurationError, ParameterError, TableError
from .exterior import Variant, build_exterior_mesh
from .fem import MaterialField
from .mesh import build_structured_mesh

log = logging.getLogger("sepapprox")

# Values the experiments are expected to land near, echoed next to the
# computed ones in the JSON summaries.
REFERENCE_VALUES = {
    "curves": {"lam=1": {"Linear": 209.54, "SMWdiag": 0.1665, "TDcirc": 0.5793,
                         "SMWapprox": 0.0118},
               "lam=1000": {"Linear": 0.2521, "SMWdiag": 0.0099, "TDcirc": 0.4943,
                            "SMWapprox": 0.0146}},
    "error-map": {"homogeneous": {"SMWdiag": 0.47, "SMWapprox": 0.17},
                  "radial-ramp": {"SMWdiag": 1.00, "SMWapprox": 3.15}},
    "binary-step": {"SMWdiag": 280, "SMWapprox": 19, "MMA(0)": 930, "MMA(-5)": 102,
                    "MMA(-10)": 586},
    "alpha-sweep": {"1.0": 13.0, "-0.5": 3.15},
    "boundary": {"without": 0.779, "with": 0.166},
}


@dataclass
class RunConfig:
    n_ref: int = 5
    lam_lb: float = 1.0
    lam_ub: float = 1000.0
    R: float = 30.0
    N: int = 16
    alpha: float = -0.5
    omega: float = 7.5
    models: list = field(default_factory=lambda: ["Linear", "SMWdiag", "TDcirc", "SMWapprox"])
    table_dir: str = "tables"
    out: str = "out"
    threads: int = 0
    scenario: str = "homogeneous"          # homogeneous[:value] | radial-ramp | custom-file:PATH
    r1: float = 0.15
    r2: float = 0.35
    center: list = field(default_factory=lambda: [0.5, 0.5])
    boundary: str = "mixed"                # mixed | dirichlet
    probe: list = field(default_factory=lambda: [0.5, 0.25])
    alphas: list = field(default_factory=lambda: [-1.0, -0.5, -0.2, 0.5, 1.0])
    eta_refine: int = 4
    types: list = field(default_factory=lambda: [1, 2])
    variants: list = field(default_factory=lambda: ["interior"])
    method: str = "lift"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def n_threads(self):
        return self.threads or os.cpu_count() or 1


DEFAULTS = asdict(RunConfig())


# ----------------------------------------------------------------- helpers

def _material(cfg, mesh):
    from .experiments import homogeneous, radial_ramp

    name, _, arg = cfg.scenario.partition(":")
    if name == "homogeneous":
        return homogeneous(mesh, float(arg or cfg.lam_lb), cfg.lam_lb, cfg.lam_ub)
    if name == "radial-ramp":
        return radial_ramp(mesh, cfg.r1, cfg.r2, tuple(cfg.center), cfg.lam_lb, cfg.lam_ub)
    if name == "custom-file":
        if not arg:
            raise ConfigurationError("custom-file scenario needs a path: custom-file:PATH")
        vals = np.loadtxt(arg, dtype=float, ndmin=1)
        if len(vals) != mesh.n_elements:
            raise ConfigurationError(f"{arg}: {len(vals)} values for {mesh.n_elements} elements")
        return MaterialField(vals, (cfg.lam_lb, cfg.lam_ub))
    raise ConfigurationError(f"unknown scenario {cfg.scenario!r}")


def _load_tables(cfg, variants=("interior",), required=True):
    from .tables import load_table, table_filename

    out = {}
    for t in cfg.types:
        for vname in variants:
            v = Variant.parse(vname)
            path = os.path.join(cfg.table_dir, table_filename(t, v, cfg.N))
            if not os.path.exists(path):
                if required:
                    raise ConfigurationError(
                        f"missing table {path}; create it with `sepapprox precompute "
                        f"--table {cfg.table_dir} --variant {v}`")
                continue
            ext = build_exterior_mesh(R=cfg.R, elem_type=t, variant=v)
            out[(t, v)] = load_table(path, expected_hash=ext.mesh_hash())
    return out


def _eta_grid(cfg):
    from .experiments import default_eta_grid
    from .tables import equilibrated_nodes

    return default_eta_grid(equilibrated_nodes(cfg.N, cfg.lam_lb, cfg.lam_ub), cfg.eta_refine)


def _kinds(cfg):
    from .models import ModelKind

    return [ModelKind.parse(k) for k in cfg.models]


def _out(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _write_csv(path, cfg, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg.hash()}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else f"{v:.12g}" for v in r) + "\n")


def _write_summary(cfg, command, computed, reference=None):
    doc = {"command": command, "version": __version__, "config_hash": cfg.hash(),
           "config": asdict(cfg), "computed": computed}
    if reference is not None:
        doc["reference"] = reference
    path = _out(cfg, f"{command}_summary.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


# ----------------------------------------------------------------- commands

def cmd_nodes(cfg, args):
    from .tables import equilibrated_nodes

    ns = equilibrated_nodes(cfg.N, cfg.lam_lb, cfg.lam_ub)
    for i, v in enumerate(ns.nodes, 1):
        print(f"{i:3d}  {v:.3f}")
    return 0


def cmd_precompute(cfg, args):
    from .tables import (equilibrated_nodes, load_table, precompute_table, save_table,
                         table_filename)

    os.makedirs(cfg.table_dir, exist_ok=True)
    nodes = equilibrated_nodes(cfg.N, cfg.lam_lb, cfg.lam_ub)
    for t in cfg.types:
        for vname in cfg.variants:
            v = Variant.parse(vname)
            ext = build_exterior_mesh(R=cfg.R, elem_type=t, variant=v)
            path = os.path.join(cfg.table_dir, table_filename(t, v, cfg.N))
            log.info("type %d %s: %d elements, %d vertices", t, v, len(ext.elements),
                     len(ext.vertices))

            def progress(done, total, _t=t, _v=v):
                if done == total or done % max(1, total // 10) == 0:
                    log.info("type %d %s: %d/%d sector tuples", _t, _v, done, total)

            table = precompute_table(ext, nodes, method=cfg.method, threads=cfg.n_threads,
                                     progress=progress)
            save_table(table, path)
            load_table(path, expected_hash=ext.mesh_hash(), strict=True)
            print(path)
    return 0


def cmd_verify(cfg, args):
    from .experiments import boundary_data
    from .verification import run_all

    tables = _load_tables(cfg, required=False)
    # the suites default to the coarser mesh; --nref overrides
    results = run_all(n_ref=args.n_ref or 4, tables=tables or None,
                      bc=boundary_data(cfg.boundary))
    for r in results:
        print(r.line())
    _write_summary(cfg, "verify", {r.name: {"passed": r.passed, "metric": r.metric,
                                            "tolerance": r.tolerance} for r in results})
    return 0 if all(r.passed for r in results) else 1


def _context(cfg, tables):
    from .experiments import boundary_data
    from .models import build_context

    mesh = build_structured_mesh(cfg.n_ref)
    lam = _material(cfg, mesh)
    return build_context(mesh, lam, boundary_data(cfg.boundary), tables=tables,
                         alpha=cfg.alpha)


def cmd_curves(cfg, args):
    from .experiments import delta_error, model_curve

    kinds = _kinds(cfg)
    need = any(k.name == "SMWapprox" for k in kinds)
    ctx = _context(cfg, _load_tables(cfg) if need else None)
    ell = ctx.mesh.find_element(1, tuple(cfg.probe), "br")
    grid = _eta_grid(cfg)
    computed = {"element": ell}
    for k in kinds:
        curve = model_curve(ctx, k, ell, grid, with_oracle=True)
        _write_csv(_out(cfg, f"curve_{k}.csv"), cfg, ["eta", "model", "oracle"], curve)
        computed[str(k)] = delta_error(ctx, k, ell, grid)
        print(f"{k}: delta = {computed[str(k)]:.6g}")
    _write_summary(cfg, "curves", computed, REFERENCE_VALUES["curves"])
    return 0


def cmd_error_map(cfg, args):
    from .experiments import error_map

    kinds = _kinds(cfg)
    need = any(k.name == "SMWapprox" for k in kinds)
    ctx = _context(cfg, _load_tables(cfg) if need else None)
    grid = _eta_grid(cfg)
    computed = {}
    for k in kinds:
        em = error_map(ctx, k, grid)
        rows = [(str(i), em.centroid[i, 0], em.centroid[i, 1], em.delta[i])
                for i in np.flatnonzero(em.included)]
        _write_csv(_out(cfg, f"error_map_{k}.csv"), cfg, ["id", "cx", "cy", "delta"], rows)
        computed[str(k)] = {"max": em.max(), "argmax": em.argmax(), "rows": len(rows)}
        print(f"{k}: max delta = {em.max():.6g} over {len(rows)} elements")
    _write_summary(cfg, "error-map", computed, REFERENCE_VALUES["error-map"])
    return 0


def cmd_binary_step(cfg, args):
    from .experiments import binary_step, decision_diff
    from .models import LINEAR, MMA, SMW, SMW_APPROX, SMW_DIAG, TD_CIRC

    tables = _load_tables(cfg, required=False)
    ctx = _context(cfg, tables)
    ref = binary_step(ctx, SMW, cfg.omega)
    _write_csv(_out(cfg, "binary_SMW.csv"), cfg, ["id", "value"],
               [(str(i), v) for i, v in enumerate(ref.values)])
    kinds = [SMW_DIAG, TD_CIRC, LINEAR, MMA(0), MMA(-5), MMA(-10)]
    if tables:
        kinds.insert(1, SMW_APPROX)
    else:
        log.warning("no tables in %s; SMWapprox skipped", cfg.table_dir)
    computed = {"SMW_strong_interior": int(np.sum(ctx.mesh.interior_elements
                                                  & (ref.values == cfg.lam_ub)))}
    rows = []
    for k in kinds:
        d = binary_step(ctx, k, cfg.omega)
        n = decision_diff(d, ref, ctx.mesh)
        computed[str(k)] = n
        rows.append((str(k), str(n)))
        print(f"{k}: {n} wrongly decided interior elements")
    _write_csv(_out(cfg, "binary_decision_diff.csv"), cfg, ["kind", "wrong"], rows)
    _write_summary(cfg, "binary-step", computed, REFERENCE_VALUES["binary-step"])
    return 0


def cmd_alpha_sweep(cfg, args):
    from .experiments import alpha_sweep, error_map
    from .models import SMW_DIAG

    ctx = _context(cfg, _load_tables(cfg))
    grid = _eta_grid(cfg)
    sweep = alpha_sweep(ctx.mesh, ctx.lam, ctx.bc, ctx.tables, cfg.alphas, grid)
    diag = error_map(ctx, SMW_DIAG, grid).max()
    for a, v in sweep.items():
        print(f"alpha={a:+.2f}: max delta = {v:.6g}")
    print(f"SMWdiag: max delta = {diag:.6g}")
    _write_csv(_out(cfg, "alpha_sweep.csv"), cfg, ["alpha", "max_delta"], sweep.items())
    _write_summary(cfg, "alpha-sweep", {"SMWapprox": {str(a): v for a, v in sweep.items()},
                                        "SMWdiag": diag}, REFERENCE_VALUES["alpha-sweep"])
    return 0


def cmd_boundary(cfg, args):
    from .experiments import boundary_comparison

    interior = _load_tables(cfg)
    side = "top"
    boundary = _load_tables(cfg, variants=(f"{side}-neumann",))
    ctx = _context(cfg, None)
    res = boundary_comparison(ctx.mesh, ctx.lam, ctx.bc, interior, boundary, _eta_grid(cfg),
                              side=side)
    rows = [(str(e), a, b) for e, a, b in zip(res.elements, res.delta_without, res.delta_with)]
    _write_csv(_out(cfg, "boundary.csv"), cfg, ["id", "delta_without", "delta_with"], rows)
    print(f"without half-disk tables: max delta = {res.max_without:.6g}")
    print(f"with half-disk tables:    max delta = {res.max_with:.6g}")
    _write_summary(cfg, "boundary", {"without": res.max_without, "with": res.max_with,
                                     "elements": len(res.elements)},
                   REFERENCE_VALUES["boundary"])
    return 0


COMMANDS = {
    "precompute": (cmd_precompute, "tabulate Gamma-hat over the node grid"),
    "verify": (cmd_verify, "run the property suites"),
    "nodes": (cmd_nodes, "print the equilibrated interpolation nodes"),
    "curves": (cmd_curves, "model curves and errors on the probe element"),
    "error-map": (cmd_error_map, "per-element relative errors"),
    "binary-step": (cmd_binary_step, "one-step binary decision study"),
    "alpha-sweep": (cmd_alpha_sweep, "Hoelder exponent sweep"),
    "boundary": (cmd_boundary, "half-disk boundary tables on the top side"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="sepapprox", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--nref", type=int, dest="n_ref")
        s.add_argument("--table", dest="table_dir", help="table directory")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int)
        s.add_argument("--scenario", help="homogeneous[:value], radial-ramp or custom-file:PATH")
        s.add_argument("--boundary", choices=["mixed", "dirichlet"])
        s.add_argument("--alpha", type=float)
        s.add_argument("--omega", type=float)
        s.add_argument("--model", dest="models", type=lambda s: s.split(","),
                       help="comma-separated model kinds, e.g. SMWdiag,MMA(-5)")
        s.add_argument("--N", type=int)
        s.add_argument("--R", type=float)
        s.add_argument("--type", dest="types", type=lambda s: [int(x) for x in s.split(",")])
        s.add_argument("--variant", dest="variants", type=lambda s: s.split(","),
                       help="interior or EDGE-BC, e.g. top-neumann")
        s.add_argument("--method", choices=["lift", "direct"])
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return RunConfig.from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[args.command][0](cfg, args)
    except (ConfigurationError, ParameterError, TableError, OSError) as exc:
        print(f"sepapprox {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
