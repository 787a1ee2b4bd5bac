"""Command line: ``smoothbf {fit, simulate, kernel-table}``.

Options can also come from a ``key = value`` file given with
``--config``; flags given on the command line win. Exit codes: 0 on
success, 2 for configuration errors, 3 for data errors and 4 for
numerical failures. Errors are reported on stderr as
``error: <category>: <message>``.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import simulate as sim
from .backfit import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, NORMINGS, SAMPLE_MEAN, fit
from .dataio import fmt, load_csv, read_config, write_csv, write_keyvalue
from .errors import ConfigError, DataError, NumericalError, SmoothBFError
from .kernels import (CONVENTIONAL, CORRECTED, KERNEL_MODES, Biweight, BoundaryKernel, C_K_ell,
                      make_L)
from .numerics import DEFAULT_GRID_SIZE, Grid1D

log = logging.getLogger("smoothbf")

CATEGORIES = ((ConfigError, "config"), (DataError, "data"), (NumericalError, "numerical"))


def _interval(text):
    try:
        lo, hi = (float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi but got {text!r}") from None
    return lo, hi


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value file; flags override it")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--kernel-mode", choices=KERNEL_MODES)
    common.add_argument("--norming", choices=NORMINGS)
    common.add_argument("--grid", type=int, help="points per component grid")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-sweeps", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="smoothbf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit an additive model to a CSV file")
    f.add_argument("--data", type=Path)
    f.add_argument("--response", help="response column (default: last)")
    f.add_argument("--interval", type=_interval, action="append",
                   help="lo,hi per covariate (repeat; one value applies to all)")
    bw = f.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float, action="append",
                    help="per component (repeat) or one for all")
    bw.add_argument("--oracle-bandwidth", action="store_true", default=None,
                    help="plug-in rule for the M1 components, data as design sample")
    f.add_argument("--noise-sd", type=float, help="noise level for --oracle-bandwidth")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo study on model M1")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--rho", type=float, action="append", help="repeat for several scenarios")
    s.add_argument("--noise-sd", type=float)
    bw = s.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float, action="append")
    bw.add_argument("--oracle-bandwidth", action="store_true", default=None)
    s.add_argument("--estimator", choices=("new", "nw"))
    s.add_argument("--with-oracle", action="store_true", default=None,
                   help="also fit the univariate oracle smoother")
    s.add_argument("--workers", type=int)

    k = sub.add_parser("kernel-table", parents=[common], help="dump boundary kernel moments")
    k.add_argument("--bandwidth", type=float, action="append")
    k.add_argument("--interval", type=_interval, action="append")
    return p


class Options:
    """Flag values with fallback to the config file, then to defaults."""

    def __init__(self, args):
        self.args = args
        self.file = read_config(args.config) if args.config else {}

    def get(self, name, cast=str, default=None, many=False):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name not in self.file:
            return default
        raw = self.file[name]
        items = raw if isinstance(raw, list) else [raw]
        try:
            if many:
                return [cast(v.strip()) for item in items for v in _split(item, cast)]
            if cast is bool:
                return items[-1].lower() in ("1", "true", "yes", "on")
            return cast(items[-1])
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"config key {name!r}: {exc}") from None


def _split(item, cast):
    # intervals are themselves comma separated, so they split on ';'
    return item.split(";") if cast is _interval else item.split(",")


def _outdir(opts):
    out = opts.get("out", Path)
    if out is None:
        raise ConfigError("--out is required")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _positive(value, name):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def cmd_fit(opts):
    data = opts.get("data", Path)
    if data is None:
        raise ConfigError("--data is required")
    intervals = opts.get("interval", _interval, many=True)
    ds = load_csv(data, intervals=intervals, response=opts.get("response"))
    out = _outdir(opts)
    mode = opts.get("kernel_mode", str, CORRECTED)
    norming = opts.get("norming", str, SAMPLE_MEAN)
    grid = opts.get("grid", int, DEFAULT_GRID_SIZE)
    tol = _positive(opts.get("tol", float, DEFAULT_TOL), "tol")
    max_sweeps = _positive(opts.get("max_sweeps", int, DEFAULT_MAX_SWEEPS), "max-sweeps")
    h = opts.get("bandwidth", float, many=True)
    if opts.get("oracle_bandwidth", bool, False):
        if h:
            raise ConfigError("give either bandwidths or the oracle rule, not both")
        if ds.d != sim.D:
            raise ConfigError(f"the oracle rule is defined for the {sim.D} M1 components")
        sd = _positive(opts.get("noise_sd", float, 0.1), "noise-sd")
        h = [sim.oracle_bandwidth(j, ds.n, sd**2, ds.X) for j in range(ds.d)]
    if not h:
        raise ConfigError("need --bandwidth or --oracle-bandwidth")
    if len(h) not in (1, ds.d):
        raise ConfigError(f"need 1 or {ds.d} bandwidths, got {len(h)}")
    if grid < 3:
        raise ConfigError("grid needs at least 3 points")
    result = fit(ds.X, ds.y, h if len(h) > 1 else h[0], intervals=ds.intervals,
                 kernel_mode=mode, norming=norming, grid_size=grid, tol=tol,
                 max_sweeps=max_sweeps)

    header, cols = ["index"], [np.arange(grid)]
    for name, c in zip(ds.names, result.components):
        header += [f"x_{name}", f"m_{name}"]
        cols += [c.grid.points, c.values]
    write_csv(out / "components.csv", header, cols)
    write_keyvalue(out / "fit_summary.txt", [
        ("data", Path(data).name),
        ("n", ds.n),
        ("covariates", ",".join(ds.names)),
        ("response", ds.response),
        ("interval_policy", ds.interval_policy),
        ("intervals", ";".join(f"{fmt(lo)},{fmt(hi)}" for lo, hi in ds.intervals)),
        ("kernel_mode", mode),
        ("norming", norming),
        ("grid", grid),
        ("bandwidths", ",".join(fmt(v) for v in result.bandwidths)),
        ("intercept", fmt(result.intercept)),
        ("sweeps", result.sweeps),
        ("final_residual", fmt(result.final_residual)),
        ("warnings", ",".join(result.warnings) or "none"),
    ])
    log.info("fit converged in %d sweeps", result.sweeps)
    return 0


def _rho_tag(rho):
    return format(rho, "g").replace(".", "p")


def cmd_simulate(opts):
    out = _outdir(opts)
    rhos = opts.get("rho", float, [0.0], many=True)
    h = opts.get("bandwidth", float, many=True) or None
    if h is not None and opts.get("oracle_bandwidth", bool, False):
        raise ConfigError("give either bandwidths or the oracle rule, not both")
    if h is not None and len(h) == 1:
        h = h * sim.D
    base = dict(
        n=opts.get("n", int, 400),
        reps=opts.get("reps", int, 500),
        noise_sd=opts.get("noise_sd", float, 0.1),
        kernel_mode=opts.get("kernel_mode", str, CONVENTIONAL),
        norming=opts.get("norming", str, SAMPLE_MEAN),
        grid_size=opts.get("grid", int, DEFAULT_GRID_SIZE),
        seed=opts.get("seed", int, 2006),
        bandwidths=h,
        estimator=opts.get("estimator", str, "new"),
        oracle=opts.get("with_oracle", bool, False),
    )
    workers = _positive(opts.get("workers", int, 1), "workers")

    rows = []
    summary = [
        "# Monte Carlo study, model M1: m1 = x^2, m2 = x^3, m3 = -x^4",
        f"# design: truncated normal on [0,1]^3, mean 0.5, variance {sim.DESIGN_VAR}",
        f"# n = {base['n']}, reps = {base['reps']}, noise sd = {fmt(base['noise_sd'])}",
        f"# estimator = {base['estimator']}, kernel mode = {base['kernel_mode']}, "
        f"norming = {base['norming']}, grid = {base['grid_size']}, seed = {base['seed']}",
        "# integrated values x 1e3",
    ]
    for rho in rhos:
        config = sim.SimConfig(rho=rho, **base)
        report = sim.run_mc(config, workers=workers)
        grid = report.targets[0].grid
        summary.append(f"# rho = {fmt(rho)}: bandwidths = "
                       + ", ".join(fmt(v) for v in report.bandwidths)
                       + f"; failures = {report.failures}; "
                       f"max sweeps = {max(report.sweeps)}")
        for j, comp in enumerate(report.components):
            header = ["x", "target", "bias", "variance", "mse"]
            cols = [grid.points, report.targets[j].values, comp.bias.values,
                    comp.variance.values, comp.mse.values]
            if report.oracle:
                o = report.oracle[j]
                header += ["oracle_bias", "oracle_variance", "oracle_mse"]
                cols += [o.bias.values, o.variance.values, o.mse.values]
            write_csv(out / f"curves_rho{_rho_tag(rho)}_m{j + 1}.csv", header, cols)
            m = comp.metrics
            row = [rho, j + 1, 1e3 * m.isb, 1e3 * m.ivar, 1e3 * m.imse]
            if report.oracle:
                row.append(1e3 * report.oracle[j].metrics.imse)
            rows.append(row)

    header = ["rho", "component", "isb_x1e3", "ivar_x1e3", "imse_x1e3"]
    if base["oracle"]:
        header.append("oracle_imse_x1e3")
    write_csv(out / "metrics.csv", header, [list(c) for c in zip(*rows)])
    summary.append("")
    summary.append(f"{'rho':>5} {'comp':>5} {'sq.bias':>12} {'variance':>12} {'MSE':>12}"
                   + (f" {'oracle MSE':>12}" if base["oracle"] else ""))
    for row in rows:
        summary.append(f"{row[0]:5.2f} {'m' + str(row[1]):>5} "
                       + " ".join(f"{v:12.4f}" for v in row[2:]))
    (out / "metrics.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return 0


def cmd_kernel_table(opts):
    out = _outdir(opts)
    hs = opts.get("bandwidth", float, many=True) or [0.1]
    if len(hs) != 1:
        raise ConfigError("kernel-table takes a single bandwidth")
    ivs = opts.get("interval", _interval, many=True) or [(0.0, 1.0)]
    if len(ivs) != 1:
        raise ConfigError("kernel-table takes a single interval")
    (lo, hi), h = ivs[0], hs[0]
    grid = Grid1D(lo, hi, opts.get("grid", int, DEFAULT_GRID_SIZE))
    base = Biweight()
    bk = BoundaryKernel(base, h, lo, hi, "K", CORRECTED)
    bl = BoundaryKernel(make_L(base), h, lo, hi, "L", CORRECTED)
    x = grid.points
    header = ["x"] + [f"mu_K{i}" for i in range(3)] + [f"mu_L{i}" for i in range(3)] \
        + [f"C_K{i}" for i in range(3)]
    cols = [x] + [bk.mu(x, i) for i in range(3)] + [bl.mu(x, i) for i in range(3)] \
        + [C_K_ell(bk, x, i) for i in range(3)]
    write_csv(out / "kernel_table.csv", header, cols)
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "kernel-table": cmd_kernel_table}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](Options(args))
    except SmoothBFError as exc:
        category = next((c for cls, c in CATEGORIES if isinstance(exc, cls)), "error")
        print(f"error: {category}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
