"""``mbmlab <subcommand> --config FILE [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import validate
from .analysis import (estimate_pointwise_holder, loglog_slope, parse_lags, tangent_convergence, truncated_A_n,
                       truncated_G_n, write_diagnostics_csv, write_tangent_csv, write_variogram_csv)
from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigurationError, CoverageError
from .noise import NoiseLattice
from .psi import build_psi_table, cached_psi_table, localization_constant, save_psi_table
from .synthesis import synthesize_mbm, synthesize_residual, synthesize_z, write_paths_csv
from .theory import exponent_bound, smoothing_condition, write_exponent_csv, write_region_csv

log = logging.getLogger("mbmlab")

SUBCOMMANDS = ("psi-table", "synthesize", "residual", "estimate-holder", "tangent", "diagnostics",
               "region", "exponent", "validate")


class Outputs:
    """Collects output files as temporaries and moves them into place only on success."""

    def __init__(self, out_dir: Path, preamble: list[str]):
        self.out_dir = out_dir
        self.preamble = preamble
        self._pending: list[tuple[Path, Path]] = []

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        tmp = self.out_dir / f".{name}.partial"
        self._pending.append((tmp, final))
        return tmp

    def commit(self) -> list[Path]:
        for tmp, final in self._pending:
            os.replace(tmp, final)
        return [final for _, final in self._pending]

    def discard(self) -> None:
        for tmp, final in self._pending:
            for p in (tmp, final):
                if p.exists():
                    p.unlink()


@contextmanager
def _outputs(out_dir: Path, preamble):
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = Outputs(out_dir, preamble)
    try:
        yield outs
    except BaseException:
        outs.discard()
        raise
    written = outs.commit()
    for p in written:
        log.info("wrote %s", p)


def _preamble(sub: str, cfg: ExperimentConfig, extra=()) -> list[str]:
    lines = [f"mbmlab {__version__} {sub}", f"seed = {cfg['seed']}"]
    lines += list(extra)
    lines += [f"config: {line}" for line in cfg.echo()]
    return lines


def _table(cfg: ExperimentConfig, n_max: int = 2):
    kw = cfg.psi_kwargs()
    kw["max_dtheta_order"] = n_max
    if cfg["psi.cache"]:
        return build_psi_table(cache_path=cfg["psi.cache"], **kw)
    return cached_psi_table(**kw)


def _hypotheses_note(cfg: ExperimentConfig) -> list[str]:
    H = cfg.hurst()
    notes = []
    if not H.regular:
        notes.append(f"outside the residual-smoothing hypotheses: Holder order beta={H.beta} is not above b={H.b}")
    if not smoothing_condition(H.a, H.b):
        notes.append(f"outside the residual-smoothing hypotheses: (a, b) = ({H.a}, {H.b}) fails 1 - b > (1 - a)(1 - a/b)")
    for note in notes:
        log.warning(note)
    return notes


# subcommands ---------------------------------------------------------------


def cmd_psi_table(cfg, out: Path):
    kw = cfg.psi_kwargs()
    table = build_psi_table(**kw, cache_path=cfg["psi.cache"] or None)
    with _outputs(out, _preamble("psi-table", cfg)) as o:
        save_psi_table(table, o.path("psi_table.bin"))
        rows = [(n, cfg["ell"], localization_constant(table, cfg["ell"], n))
                for n in range(table.max_dtheta_order + 1)]
        _write_simple(o.path("psi_summary.csv"), o.preamble, ["n", "ell", "localization_constant"], rows)
    return 0


def cmd_synthesize(cfg, out: Path):
    notes = _hypotheses_note(cfg)
    table = _table(cfg, 0)
    synth = synthesize_mbm if cfg["process"] == "X" else synthesize_z
    bundle = synth(cfg.hurst(), cfg.synthesis(), NoiseLattice(cfg["seed"]), table, cfg["components"])
    with _outputs(out, _preamble("synthesize", cfg, notes)) as o:
        write_paths_csv(bundle, o.path("paths.csv"), o.preamble)
    return 0


def cmd_residual(cfg, out: Path):
    notes = _hypotheses_note(cfg)
    table = _table(cfg, 0)
    bundle = synthesize_residual(cfg.hurst(), cfg.synthesis(), NoiseLattice(cfg["seed"]), table, cfg["components"])
    with _outputs(out, _preamble("residual", cfg, notes)) as o:
        write_paths_csv(bundle, o.path("residual.csv"), o.preamble)
    return 0


def cmd_estimate_holder(cfg, out: Path):
    t = cfg["t"]
    lags = cfg.lags()
    grid = np.unique(np.concatenate([cfg.t_grid(), [t], t + np.asarray(lags)]))
    synth = synthesize_mbm if cfg["process"] == "X" else synthesize_z
    bundle = synth(cfg.hurst(), cfg.synthesis(grid), NoiseLattice(cfg["seed"]), _table(cfg, 0))
    report = estimate_pointwise_holder(bundle[cfg["process"]], grid, t, lags)
    with _outputs(out, _preamble("estimate-holder", cfg)) as o:
        write_variogram_csv(report, o.path("variogram.csv"), o.preamble)
        _write_simple(o.path("holder.csv"), o.preamble, ["t", "hurst", "exponent", "slope", "intercept"],
                      [(t, float(cfg.hurst()(t)), report.exponent, report.slope, report.intercept)])
    return 0


def cmd_tangent(cfg, out: Path):
    rep = tangent_convergence(cfg.hurst(), cfg["t"], cfg.rhos(), cfg["u"], cfg.synthesis(),
                              NoiseLattice(cfg["seed"]), _table(cfg, 0), process=cfg["process"],
                              domain=(cfg["t_start"], cfg["t_end"]))
    with _outputs(out, _preamble("tangent", cfg)) as o:
        write_tangent_csv(rep, o.path("tangent.csv"), o.preamble)
    return 0


def cmd_diagnostics(cfg, out: Path):
    n = cfg["n"]
    table = _table(cfg, max(n, 0))
    t, theta, kw = cfg["t"], cfg["theta"], cfg["k_window"]
    j_values = cfg["diag.j_values"]
    a_vals = [truncated_A_n(t, theta, n, j, kw, table) for j in j_values]
    with _outputs(out, _preamble("diagnostics", cfg)) as o:
        write_diagnostics_csv(j_values, a_vals, o.path("diagnostics_A.csv"), o.preamble)
        if n >= 1:
            hs = parse_lags(cfg["diag.h_values"])
            g_vals = [truncated_G_n(t, t + h, theta, n, cfg.hurst(), max(j_values), kw, table) for h in hs]
            rows = [(h, g) for h, g in zip(hs, g_vals)]
            if all(g > 0 for g in g_vals):
                rows.append(("slope", loglog_slope(hs, g_vals)))
            _write_simple(o.path("diagnostics_G.csv"), o.preamble, ["h", "value"], rows)
    return 0


def cmd_region(cfg, out: Path):
    with _outputs(out, _preamble("region", cfg)) as o:
        write_region_csv(cfg["resolution"], o.path("region.csv"), o.preamble)
    return 0


def cmd_exponent(cfg, out: Path):
    rep = exponent_bound(cfg["a"], cfg["b"], cfg["beta"], cfg["ell"], cfg["epsilon_slack"], cfg["grid_resolution"])
    with _outputs(out, _preamble("exponent", cfg)) as o:
        write_exponent_csv(rep, o.path("exponent.csv"), o.preamble)
    print(f"feasible={rep.feasible} d={rep.d:.10g} eta*={rep.eta_star:.10g} gamma*={rep.gamma_star:.10g}")
    return 0


def cmd_validate(cfg, out: Path, only=None):
    results = validate(out, seed=cfg["seed"], only=only, replicates=cfg["replicates"])
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return 0 if passed == len(results) else 1


def _write_simple(path, preamble, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else f"{v:.17g}" for v in row])


COMMANDS = {
    "psi-table": cmd_psi_table,
    "synthesize": cmd_synthesize,
    "residual": cmd_residual,
    "estimate-holder": cmd_estimate_holder,
    "tangent": cmd_tangent,
    "diagnostics": cmd_diagnostics,
    "region": cmd_region,
    "exponent": cmd_exponent,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbmlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mbmlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key = value file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="override the config out_dir")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "validate":
            p.add_argument("--only", help="comma-separated check numbers (1-11)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        if args.seed is not None:
            cfg.override("seed", args.seed)
        if args.out is not None:
            cfg.override("out_dir", str(args.out))
        out = Path(cfg["out_dir"])
        if args.subcommand == "validate":
            only = {int(x) for x in args.only.split(",")} if args.only else None
            return cmd_validate(cfg, out, only)
        return COMMANDS[args.subcommand](cfg, out)
    except (ConfigurationError, CoverageError, OSError, RuntimeError) as exc:
        print(f"mbmlab {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
