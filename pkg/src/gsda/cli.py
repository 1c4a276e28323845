"""Command-line interface: fit-quantile, fit-pot, simulate, gradcheck, minimize.

Configuration precedence is CLI flag > config-file entry > built-in
default; config files are flat ``key = value`` text.  Every run writes
its artifacts (fitted values, additive decomposition, iteration trace,
diagnostics) as plain comma-separated / key=value text into the output
directory.  Exit codes: 0 converged/success, 2 non-convergence,
3 input or configuration error, 4 numerical failure.
"""

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import datasets
from .engine import GsParams, gsda_minimize, l1_norm, nonsmooth_rosenbrock, sum_of_squares
from .errors import (
    GsdaError,
    InvalidInput,
    MissingColumn,
    NumericalFailure,
    ParseError,
    SamplingExhausted,
    SingularBlock,
)
from .pot import (
    FunctionalSpec,
    Lambda,
    fit_pot_additive,
    functional_map,
    gpd_loglik_grad,
    jacobian_blocks,
    negative_loglik_objective,
)
from .quantile import fit_quantile_additive, pinball_grad, pinball_loss
from .smoothing import SmootherSpec

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4

TASKS = ("fit-quantile", "fit-pot", "simulate", "gradcheck", "minimize")

_DEFAULTS = {
    "response": "y",
    "alpha": 0.9,
    "exceed_prob": None,
    "levels": None,
    "mode": None,  # per task: qp for minimize/gradcheck, average for the fits
    "seed": 0,
    "m": None,
    "beta": 0.1,
    "mu": 0.5,
    "lam": 0.5,
    "eps0": 0.1,
    "tau0": 1e-2,
    "eps_min": 1e-6,
    "tau_min": 1e-6,
    "max_iter": 5000,
    "max_backtracks": 30,
    "kind": "gpd",
    "n": 1000,
    "sigma": 2.0,
    "kappa": 0.2,
    "days": 28,
    "hours_per_day": 17,
    "objective": "nsrosenbrock",
    "x0": "-1,1",
    "dim": 2,
    "points": 100,
}

_FLOAT_KEYS = ("alpha", "exceed_prob", "beta", "mu", "lam", "eps0", "tau0",
               "eps_min", "tau_min", "sigma", "kappa")
_INT_KEYS = ("seed", "m", "max_iter", "max_backtracks", "n", "days",
             "hours_per_day", "dim", "points")


@dataclass
class RunConfig:
    """Fully resolved settings for one CLI run."""

    task: str
    input: str = None
    output_dir: str = "."
    smoothers: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    def __getattr__(self, key):
        if key in self.options:
            return self.options[key]
        raise AttributeError(key)

    def gs_params(self):
        o = self.options
        return GsParams(
            m=o["m"], beta=o["beta"], mu=o["mu"], lam=o["lam"],
            eps0=o["eps0"], tau0=o["tau0"], eps_min=o["eps_min"],
            tau_min=o["tau_min"], max_iter=o["max_iter"],
            max_backtracks=o["max_backtracks"],
            subgradient_mode=o["mode"], seed=o["seed"],
        )


def read_config_file(path):
    """Parse a flat key = value file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key = value", line=lineno)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _INT_KEYS:
        return int(value)
    if key == "levels":
        return [float(v) for v in value.split(",") if v.strip()]
    return value


def parse_smoother(text):
    """Parse ``<col>=<kind>[:bw=..|df=..]`` into (column, SmootherSpec kwargs)."""
    if "=" not in text:
        raise InvalidInput(f"smoother {text!r} must look like col=kind[:bw=..|df=..]")
    col, rest = text.split("=", 1)
    col = col.strip()
    kind, _, opt = rest.partition(":")
    kind = kind.strip()
    kwargs = {"kind": kind}
    if opt:
        okey, _, oval = opt.partition("=")
        okey = okey.strip()
        if okey == "bw":
            kwargs["bandwidth"] = float(oval)
        elif okey == "df":
            kwargs["target_df"] = float(oval)
        else:
            raise InvalidInput(f"unknown smoother option {okey!r} in {text!r}")
    return col, kwargs


def build_design(dataset, smoother_texts):
    """Assemble (W, specs, component names, level labels) from --smoother args."""
    cols, specs, names, level_maps = [], [], [], []
    for idx, text in enumerate(smoother_texts):
        col, kwargs = parse_smoother(text)
        kind = kwargs["kind"]
        if kind == "cell_factor":
            if ":" in col:
                a, b = col.split(":", 1)
                codes, labels = dataset.interaction(a, b)
            else:
                if dataset.kind_of(col) != "factor":
                    raise InvalidInput(f"cell_factor column {col!r} must be a factor")
                codes = dataset.column(col)
                labels = dataset.levels[col]
            cols.append(codes)
            level_maps.append(labels)
        else:
            if col not in dataset.columns:
                raise MissingColumn(f"covariate column {col!r} not in input")
            if dataset.kind_of(col) == "factor":
                raise InvalidInput(f"{kind} smoother needs a numeric column, "
                                   f"{col!r} is a factor")
            cols.append(dataset.column(col))
            level_maps.append(None)
        specs.append(SmootherSpec(covariate_index=idx, **kwargs))
        names.append(col)
    W = np.column_stack(cols) if cols else None
    return W, specs, names, level_maps


def factor_columns_needed(smoother_texts, extra):
    needed = set(extra)
    for text in smoother_texts:
        col, kwargs = parse_smoother(text)
        if kwargs["kind"] == "cell_factor":
            needed.update(col.split(":"))
    return sorted(needed)


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    return str(value)


def _write_table(path, header, columns):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_diagnostics(path, entries):
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key}={_fmt(value)}\n")


def _input_columns(dataset):
    header = [dataset.response]
    columns = [dataset.y]
    for name, kind in zip(dataset.columns, dataset.kinds):
        header.append(name)
        columns.append(dataset.labels(name) if kind == "factor" else dataset.column(name))
    return header, columns


def _write_trace(path, trace):
    rows = trace.to_rows()
    columns = list(zip(*rows)) if rows else [[] for _ in trace.COLUMNS]
    _write_table(path, trace.COLUMNS, columns)


def _write_decomposition(path, names, fits, prefixes=None):
    header, columns = [], []
    for p, fit in zip(prefixes or [""] * len(fits), [f for f in fits]):
        tag = f"{p}." if p else ""
        header.append(f"{tag}intercept")
        columns.append(np.full(fit.fitted.size, fit.intercept))
        for name, comp in zip(names, fit.components):
            header.append(f"{tag}component.{name}")
            columns.append(comp)
    _write_table(path, header, columns)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _run_fit_quantile(config, out):
    if config.input is None:
        raise InvalidInput("fit-quantile requires --input")
    data = datasets.load_csv(
        config.input, config.response,
        factor_columns_needed(config.smoothers, config.factors))
    W, specs, names, level_maps = build_design(data, config.smoothers)
    alpha = config.alpha
    model = fit_quantile_additive(data.y, W, alpha, specs, config.gs_params())

    header, columns = _input_columns(data)
    _write_table(os.path.join(out, "fitted.csv"),
                 header + [f"q{alpha:g}"], columns + [model.q])
    _write_decomposition(os.path.join(out, "decomposition.csv"),
                         names, [model.decomposition])
    _write_trace(os.path.join(out, "trace.csv"), model.trace)

    coverage = float(np.mean(data.y <= model.q))
    entries = [
        ("task", "fit-quantile"), ("alpha", alpha), ("n", data.n),
        ("dropped_rows", data.n_dropped), ("seed", config.seed),
        ("converged", model.trace.converged),
        ("iterations", len(model.trace)),
        ("accepted_steps", len(model.trace.accepted)),
        ("final_objective", model.trace.final_f()),
        ("coverage", coverage),
    ]
    for spec, name, labels in zip(specs, names, level_maps):
        if spec.kind != "cell_factor":
            continue
        codes = W[:, spec.covariate_index].astype(int)
        for code in np.unique(codes):
            mask = codes == code
            entries.append((f"coverage[{name}|{labels[code]}]",
                            float(np.mean(data.y[mask] <= model.q[mask]))))
    _write_diagnostics(os.path.join(out, "diagnostics.txt"), entries)
    return EXIT_OK if model.trace.converged else EXIT_NONCONVERGED


def _run_fit_pot(config, out):
    if config.input is None:
        raise InvalidInput("fit-pot requires --input")
    if config.exceed_prob is None:
        raise InvalidInput("fit-pot requires --exceed-prob (threshold exceedance "
                           "probability supplied at ingestion)")
    if not config.levels:
        raise InvalidInput("fit-pot requires --levels with one or two tail levels")
    levels = config.levels
    pair = "var_es" if len(levels) == 1 else "var_var"
    fspec = FunctionalSpec(pair, tuple(levels), config.exceed_prob)
    data = datasets.load_csv(
        config.input, config.response,
        factor_columns_needed(config.smoothers, config.factors))
    W, specs, names, _ = build_design(data, config.smoothers)
    model = fit_pot_additive(data.y, W, fspec, specs, config.gs_params())

    header, columns = _input_columns(data)
    fnames = list(model.functional_names)
    _write_table(os.path.join(out, "fitted.csv"), header + fnames,
                 columns + [model.state.theta_pair[0], model.state.theta_pair[1]])
    _write_decomposition(os.path.join(out, "decomposition.csv"),
                         names, list(model.decompositions), prefixes=fnames)
    _write_trace(os.path.join(out, "trace.csv"), model.trace)

    th1, th2 = model.state.theta_pair
    entries = [
        ("task", "fit-pot"), ("pair", fspec.pair),
        ("levels", ",".join(f"{a:g}" for a in fspec.levels)),
        ("exceed_prob", fspec.exceed_prob),
        ("scale_factors", ",".join(f"{c:g}" for c in fspec.c_values)),
        ("n", data.n), ("dropped_rows", data.n_dropped), ("seed", config.seed),
        ("converged", model.trace.converged),
        ("iterations", len(model.trace)),
        ("accepted_steps", len(model.trace.accepted)),
        ("final_negloglik", model.trace.final_f()),
        (f"mean_{fnames[0]}", float(th1.mean())),
        (f"mean_{fnames[1]}", float(th2.mean())),
        ("kappa_min", float(model.state.lam.kappa.min())),
        ("kappa_max", float(model.state.lam.kappa.max())),
    ]
    if fspec.pair == "var_var":
        entries.append(("levels_ordered_pointwise", bool(np.all(th2 > th1))))
    _write_diagnostics(os.path.join(out, "diagnostics.txt"), entries)
    return EXIT_OK if model.trace.converged else EXIT_NONCONVERGED


def _run_simulate(config, out):
    kind = config.kind
    if kind == "gpd":
        data = datasets.simulate_gpd(config.n, config.sigma, config.kappa, config.seed)
    elif kind == "gpd-sites":
        data = datasets.simulate_gpd_sites(config.n, config.seed, kappa=config.kappa)
    elif kind == "sales":
        data = datasets.simulate_sales(config.days, config.hours_per_day, config.seed)
    elif kind == "hetero":
        data = datasets.simulate_hetero(config.n, config.seed)
    else:
        raise InvalidInput(f"unknown simulate kind {kind!r}")
    datasets.write_csv(data, os.path.join(out, "data.csv"))
    _write_diagnostics(os.path.join(out, "diagnostics.txt"), [
        ("task", "simulate"), ("kind", kind), ("n", data.n), ("seed", config.seed),
    ])
    return EXIT_OK


def _central_diff(f, x, h=1e-6):
    out = np.empty(x.size)
    for i in range(x.size):
        step = np.zeros(x.size)
        step[i] = h
        out[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return out


def _rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _run_gradcheck(config, out):
    """Compare analytic gradients against central finite differences."""
    rng = np.random.default_rng(config.seed)
    points = config.points
    alpha = config.alpha
    worst = {"pinball": 0.0, "gpd_loglik": 0.0, "jacobian": 0.0, "pot_objective": 0.0}

    for _ in range(points):
        n = int(rng.integers(2, 6))
        y = rng.uniform(-3.0, 3.0, n)
        q = y + rng.choice([-1.0, 1.0], n) * rng.uniform(1e-2, 2.0, n)  # kink-avoiding
        fd = _central_diff(lambda v: pinball_loss(v, y, alpha), q)
        worst["pinball"] = max(worst["pinball"], _rel_err(pinball_grad(q, y, alpha), fd))

    for _ in range(points):
        n = int(rng.integers(1, 5))
        lam = Lambda(rng.uniform(-0.5, 1.5, n), rng.uniform(-0.25, 0.8, n))
        y = rng.uniform(0.05, 2.0, n) * lam.sigma
        fd = _central_diff(
            lambda v: -negative_loglik_objective(
                y, FunctionalSpec("var_var", (0.05, 0.01), 0.1)).eval(v),
            lam.as_vector())
        worst["gpd_loglik"] = max(worst["gpd_loglik"],
                                  _rel_err(gpd_loglik_grad(lam, y), fd))

        spec = FunctionalSpec("var_es", (0.01,), 0.1)
        jac, _ = jacobian_blocks(lam, spec)
        h = 1e-6
        for which in range(2):
            step = np.zeros(2 * n)
            for i in range(n):
                step[:] = 0.0
                step[i if which == 0 else n + i] = h
                up = Lambda.from_vector(lam.as_vector() + step)
                dn = Lambda.from_vector(lam.as_vector() - step)
                for fidx in range(2):
                    fd_entry = (functional_map(up, spec)[fidx][i]
                                - functional_map(dn, spec)[fidx][i]) / (2.0 * h)
                    worst["jacobian"] = max(
                        worst["jacobian"],
                        _rel_err(np.array([jac[i, fidx, which]]),
                                 np.array([fd_entry])))

        obj = negative_loglik_objective(y, spec)
        fd = _central_diff(obj.eval, lam.as_vector())
        worst["pot_objective"] = max(worst["pot_objective"],
                                     _rel_err(obj.grad(lam.as_vector()), fd))

    overall = max(worst.values())
    entries = [("task", "gradcheck"), ("points", points), ("seed", config.seed)]
    entries += [(f"max_rel_err.{k}", v) for k, v in sorted(worst.items())]
    entries += [("max_rel_err", overall), ("passed", overall < 1e-4)]
    _write_diagnostics(os.path.join(out, "gradcheck.txt"), entries)
    print(f"gradcheck: max relative error {overall:.3e} "
          f"({'PASS' if overall < 1e-4 else 'FAIL'})")
    return EXIT_OK if overall < 1e-4 else EXIT_NUMERIC


def _run_minimize(config, out):
    name = config.objective
    x0 = np.array([float(v) for v in str(config.x0).split(",")])
    if name == "nsrosenbrock":
        obj = nonsmooth_rosenbrock()
    elif name == "l1":
        obj = l1_norm(x0.size)
    elif name == "sumsq":
        obj = sum_of_squares(np.zeros(x0.size))
    else:
        raise InvalidInput(f"unknown objective {name!r}; "
                           "choose nsrosenbrock, l1, or sumsq")
    if x0.size != obj.dim:
        raise InvalidInput(f"objective {name!r} expects dimension {obj.dim}")
    x, trace = gsda_minimize(obj, x0, config.gs_params())
    _write_trace(os.path.join(out, "trace.csv"), trace)
    entries = [
        ("task", "minimize"), ("objective", name), ("seed", config.seed),
        ("converged", trace.converged), ("iterations", len(trace)),
        ("final_f", obj.eval(x)),
        ("final_x", ",".join(f"{v:.17g}" for v in x)),
    ]
    if name == "nsrosenbrock":
        entries.append(("distance_to_minimum",
                        float(np.linalg.norm(x - np.array([1.0, 1.0])))))
    _write_diagnostics(os.path.join(out, "diagnostics.txt"), entries)
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def run(config):
    """Execute one task; returns the process exit status."""
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    handlers = {
        "fit-quantile": _run_fit_quantile,
        "fit-pot": _run_fit_pot,
        "simulate": _run_simulate,
        "gradcheck": _run_gradcheck,
        "minimize": _run_minimize,
    }
    if config.task not in handlers:
        raise InvalidInput(f"unknown task {config.task!r}")
    return handlers[config.task](config, out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="gsda",
        description="Sampling-based descent for nonsmooth fitting: additive "
                    "quantile regression, smooth POT models, and generic "
                    "nonsmooth minimization.")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task)
        p.add_argument("--input")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--config")
        p.add_argument("--response")
        p.add_argument("--alpha", type=float)
        p.add_argument("--levels")
        p.add_argument("--exceed-prob", type=float, dest="exceed_prob")
        p.add_argument("--smoother", action="append", default=None,
                       metavar="COL=KIND[:bw=..|df=..]")
        p.add_argument("--factor", action="append", default=None)
        p.add_argument("--m", type=int)
        p.add_argument("--eps0", type=float)
        p.add_argument("--tau0", type=float)
        p.add_argument("--eps-min", type=float, dest="eps_min")
        p.add_argument("--tau-min", type=float, dest="tau_min")
        p.add_argument("--mu", type=float)
        p.add_argument("--lambda", type=float, dest="lam")
        p.add_argument("--beta", type=float)
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--max-backtracks", type=int, dest="max_backtracks")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=["qp", "average"])
        p.add_argument("--kind")
        p.add_argument("--n", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument("--kappa", type=float)
        p.add_argument("--days", type=int)
        p.add_argument("--hours-per-day", type=int, dest="hours_per_day")
        p.add_argument("--objective")
        p.add_argument("--x0")
        p.add_argument("--points", type=int)
    return parser


def resolve_config(args):
    options = dict(_DEFAULTS)
    file_cfg = {}
    smoothers = []
    factors = []
    output_dir = "."
    input_path = None
    if args.config:
        file_cfg = read_config_file(args.config)
        smoothers = [s.strip() for s in file_cfg.pop("smoother", "").split(",")
                     if s.strip()]
        factors = [s.strip() for s in file_cfg.pop("factor", "").split(",")
                   if s.strip()]
        output_dir = file_cfg.pop("output_dir", output_dir)
        input_path = file_cfg.pop("input", input_path)
        for key, value in file_cfg.items():
            if key not in options:
                raise InvalidInput(f"unknown config key {key!r}")
            options[key] = _coerce(key, value)
    for key in options:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            options[key] = _coerce(key, cli_value)
    if args.smoother is not None:
        smoothers = args.smoother
    if args.factor is not None:
        factors = args.factor
    if args.output_dir is not None:
        output_dir = args.output_dir
    if args.input is not None:
        input_path = args.input
    if options["mode"] is None:
        options["mode"] = "average" if args.task in ("fit-quantile", "fit-pot") else "qp"
    return RunConfig(task=args.task, input=input_path, output_dir=output_dir,
                     smoothers=smoothers, factors=factors, options=options)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return run(config)
    except (InvalidInput, ParseError, MissingColumn, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, SingularBlock, SamplingExhausted) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GsdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
