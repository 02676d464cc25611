"""Command-line interface.

    python -m splittree <subcommand> [options]

Settings come from ``--config file.json`` and command-line flags, flags
taking precedence.  A config file may describe the lifespan law either
under a "measure" key ({"family": "exponential", "d": 1, "b": 2}) or with
the same keys at top level.  Exit codes: 0 success, 1 failed validation,
2 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfig, SplitTreeError
from .lifespan import MutationContext, parse_measure

DEFAULTS = {
    "step": 1e-3,
    "replicates": 10_000,
    "cap": 10**7,
    "tolerance": 1e-8,
    "seed": 42,
    "out": "-",
    "stride": 0.1,
    "suite": "core",
}
MEASURE_KEYS = ("family", "b", "d", "shape", "rate", "c")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _emit(path, buf.getvalue())


def _write_json(path, payload):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, (np.floating, np.integer)):
            return clean(v.item())
        return v
    text = json.dumps({k: clean(v) for k, v in payload.items()}, indent=2) + "\n"
    _emit(path, text)


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- configuration ----------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file {path!r}: {exc}", key="config") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file {path!r} is not valid JSON: {exc}", key="config") from None
    if not isinstance(data, dict):
        raise InvalidConfig("config file must hold a JSON object", key="config")
    measure = data.pop("measure", None)
    if measure is not None:
        if not isinstance(measure, dict):
            raise InvalidConfig("'measure' must be a JSON object", key="measure")
        data = {**measure, **data}
    return data


def resolve(args) -> dict:
    """Merge defaults, config-file keys and flags (in increasing priority)."""
    cfg = dict(DEFAULTS)
    loaded = _load_config(getattr(args, "config", None))
    cfg.update(loaded)
    explicit = set(loaded)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command", "handler"):
            cfg[key] = value
            explicit.add(key)
    cfg["_explicit"] = explicit
    return cfg


def _measure(cfg):
    return parse_measure({k: cfg[k] for k in MEASURE_KEYS if k in cfg})


def _context(cfg):
    if "p" not in cfg:
        raise InvalidConfig("this command needs the mutation probability --p", key="p")
    return MutationContext(_measure(cfg), _number(cfg, "p"))


def _number(cfg, key, positive=False):
    try:
        value = float(cfg[key])
    except KeyError:
        raise InvalidConfig(f"missing required setting {key!r}", key=key) from None
    except (TypeError, ValueError):
        raise InvalidConfig(f"{key} must be numeric, got {cfg[key]!r}", key=key) from None
    if not math.isfinite(value) or (positive and value <= 0):
        raise InvalidConfig(f"{key} must be a {'positive ' if positive else ''}finite number, got {value}", key=key)
    return value


def _integer(cfg, key, minimum=0):
    value = cfg.get(key)
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise InvalidConfig(f"{key} must be an integer >= {minimum}, got {value!r}", key=key)
    return value


def _index_range(text, key):
    """'3' -> [3]; '1-5' -> [1..5]; '1,2,7' -> [1, 2, 7]."""
    try:
        if isinstance(text, int):
            return [text]
        text = str(text)
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise InvalidConfig(f"{key} must be an integer, a range like 1-5 or a list like 1,2,3; got {text!r}",
                            key=key) from None


def _step_for(cfg, rate):
    from .scale import MAX_STEP_RATE
    step = _number(cfg, "step", positive=True)
    if "step" not in cfg["_explicit"]:
        step = min(step, MAX_STEP_RATE / rate)
    return step


# -- subcommands ------------------------------------------------------------

def cmd_scale(cfg):
    from .scale import clonal_grid, solve_scale
    horizon = _number(cfg, "horizon", positive=True)
    stride = _number(cfg, "stride", positive=True)
    if "p" in cfg:
        ctx = _context(cfg)
        grid = clonal_grid(ctx, horizon, _step_for(cfg, ctx.clonal_rate))
    else:
        measure = _measure(cfg)
        grid = solve_scale(measure, horizon, _step_for(cfg, measure.birth_rate))
    every = max(1, int(round(stride / grid.step)))
    idx = range(0, len(grid.values), every)
    rows = ((k * grid.step, grid.values[k], grid.derivatives[k]) for k in idx)
    _write_csv(cfg["out"], ["t", "W", "Wprime"], rows)
    return 0


def cmd_limits(cfg):
    from .scale import extinction_probability, growth_constants
    measure = _measure(cfg)
    c = growth_constants(measure)
    out = {
        "regime": c.regime,
        "eta": c.eta,
        "eta_tilde": c.eta_tilde,
        "psi_prime_at_root": c.psi_prime_at_root,
        "w_growth_constant": c.w_growth_constant,
        "wprime_growth_constant": c.wprime_growth_constant,
        "extinction_probability": extinction_probability(measure),
    }
    if "p" in cfg:
        from .mutation import K_asymptotics, clonal_J, kappa_law
        from .scale import regime as regime_of
        from .spectrum import limit_J, _limit_grids
        ctx = _context(cfg)
        tol = _number(cfg, "tolerance", positive=True)
        ka = K_asymptotics(ctx, 0)
        out.update(clonal_regime=ka.regime, eta_c=ka.eta_p, C_p=ka.C_p)
        if c.regime == "supercritical":
            eta, grid_wc = _limit_grids(ctx, tol, cfg["step"])
            out["J"] = limit_J(grid_wc, eta, None, tol=tol)
        if regime_of(ctx.clonal_measure()) == "supercritical":
            out["J_c"] = clonal_J(ctx, tol)
            law = kappa_law(ctx, 1)
            out.update(kappa_atom_prob=law.atom_prob, kappa1_conditional_mean=law.conditional_mean)
    _write_json(cfg["out"], out)
    return 0


def cmd_spectrum(cfg):
    from .scale import clonal_grid, regime, solve_scale
    from .spectrum import SpectrumQuery, default_step, expected_spectrum, spectrum_limits
    a, t = _number(cfg, "a"), _number(cfg, "t")
    indices = _index_range(cfg.get("i", 1), "i")
    queries = [SpectrumQuery(i, a, t) for i in indices]  # validates 0 <= a <= t first
    ctx = _context(cfg)
    step = default_step(ctx.b, _number(cfg, "step", positive=True))
    horizon = max(t, step)
    gw = solve_scale(ctx.measure, horizon, step)
    gc = clonal_grid(ctx, horizon, step)
    super_ = regime(ctx.measure) == "supercritical"
    tol = _number(cfg, "tolerance", positive=True)
    rows = []
    for q in queries:
        lim = spectrum_limits(ctx, q.i, q.a, tol) if super_ else None
        rows.append((q.i, q.a, q.t, expected_spectrum(gw, gc, ctx, q),
                     lim.mean_limit if lim else None, lim.fraction_limit if lim else None))
    _write_csv(cfg["out"], ["i", "a", "t", "expected", "limit_constant", "fraction_limit"], rows)
    return 0


def cmd_mutation(cfg):
    from .mutation import K_asymptotics, expected_K_series, expected_L_series
    from .scale import clonal_grid
    from .spectrum import default_step
    ctx = _context(cfg)
    times = [float(x) for x in str(cfg.get("t", "")).split(",") if x != ""]
    if not times or min(times) < 0:
        raise InvalidConfig("--t must list one or more non-negative times", key="t")
    imax = _integer(cfg, "imax", 0) if "imax" in cfg else 3
    grid = clonal_grid(ctx, max(max(times), 1e-3), default_step(ctx.clonal_rate, cfg["step"]))
    asym = [K_asymptotics(ctx, i) for i in range(imax + 1)]
    rows = []
    for t in times:
        ks = expected_K_series(ctx, grid, imax, t)
        ls = expected_L_series(ctx, grid, imax, t)
        for i in range(imax + 1):
            rows.append((i, t, ks[i], ls[i], asym[i].eta_p, asym[i].leading_coefficient))
    _write_csv(cfg["out"], ["i", "t", "E_K", "E_L", "eta_p", "leading_coeff"], rows)
    return 0


def cmd_kappa(cfg):
    from .mutation import kappa_fixed_point_residual, kappa_law
    ctx = _context(cfg)
    i = _integer(cfg, "i", 0) if "i" in cfg else 1
    law = kappa_law(ctx, i)
    grid = np.logspace(-2, 2, 41)
    residual = max(kappa_fixed_point_residual(ctx, i, a) for a in grid)
    _write_json(cfg["out"], {
        "i": i,
        "atom_prob": law.atom_prob,
        "conditional_mean": law.conditional_mean,
        "theta": law.theta,
        "mean": law.mean,
        "residual_max": residual,
    })
    return 0


def cmd_simulate(cfg):
    from .simulator import simulate
    ctx = _context(cfg)
    horizon = _number(cfg, "horizon")
    if horizon < 0:
        raise InvalidConfig("horizon must be non-negative", key="horizon")
    s = simulate(ctx, horizon, _integer(cfg, "seed", 0), _integer(cfg, "cap", 1))
    reg = s.allele_registry
    rows = []
    for k, allele in s.alive:
        ind = s.individuals[k]
        rec = reg[allele]
        rows.append((ind.id, ind.parent, ind.birth_time, ind.death_time, allele, rec.type, rec.origin_time))
    _write_csv(cfg["out"], ["individual", "parent", "birth", "death", "allele", "allele_type", "allele_origin"],
               rows)
    if cfg.get("registry"):
        _write_csv(cfg["registry"], ["allele", "origin_time", "type", "parent_allele"],
                   ((r.id, r.origin_time, r.type, r.parent_allele) for r in reg))
    if s.truncated:
        print(f"warning: population cap {cfg['cap']} reached; snapshot truncated", file=sys.stderr)
    return 0


def cmd_validate(cfg):
    from .montecarlo import run_suite
    results = run_suite(str(cfg["suite"]), _integer(cfg, "seed", 0), _integer(cfg, "replicates", 2))
    rows = [(name, r.theory_value, r.estimate.mean, r.estimate.standard_error, r.z_score, r.passed)
            for name, r in results]
    _write_csv(cfg["out"], ["check", "theory", "estimate", "se", "z", "pass"], rows)
    return 0 if all(r.passed for _, r in results) else 1


# -- parser -----------------------------------------------------------------

def _common(p, measure=True, mutation=False):
    p.add_argument("--config", help="JSON file of settings; flags override its keys")
    p.add_argument("--out", help="output path, '-' for stdout (default)")
    if measure:
        g = p.add_argument_group("lifespan measure")
        g.add_argument("--family", help="exponential | pure_birth | gamma | uniform")
        g.add_argument("--b", type=float, help="birth rate (total mass of the lifespan measure)")
        g.add_argument("--d", type=float, help="death rate (exponential lifespans)")
        g.add_argument("--shape", type=float, help="gamma shape")
        g.add_argument("--rate", type=float, help="gamma rate")
        g.add_argument("--c", type=float, help="upper end of uniform lifespans")
        g.add_argument("--p", type=float,
                       help="mutation probability per birth" + ("" if mutation else " (optional)"))
    p.add_argument("--step", type=float, help="grid step h (default 1e-3, reduced so that h*b <= 0.05)")
    p.add_argument("--tolerance", type=float, help="truncation tolerance of improper integrals (default 1e-8)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splittree", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scale", help="tabulate the scale function",
                       description="CSV columns: t, W = scale function W(t) (the clonal W_c when --p is "
                                   "given), Wprime = its derivative.")
    _common(p)
    p.add_argument("--horizon", type=float, help="last time T of the table")
    p.add_argument("--stride", type=float, help="spacing of the printed rows (default 0.1)")
    p.set_defaults(handler=cmd_scale)

    p = sub.add_parser("limits", help="growth constants as JSON",
                       description="JSON: regime, Malthusian root eta, negative root eta_tilde, psi'(root), "
                                   "growth constants of W and W', extinction probability; with --p also "
                                   "eta_c, C_p, J, J_c and the kappa_1 law.")
    _common(p)
    p.set_defaults(handler=cmd_limits)

    p = sub.add_parser("spectrum", help="expected frequency spectrum",
                       description="CSV columns: i = family size, a = age cutoff, t = time, expected = "
                                   "E[M_t^{i,a}], limit_constant = lim e^{-eta t} E[M_t^{i,a}], "
                                   "fraction_limit = lim M_t^{i,a}/M_t (limits empty unless supercritical).")
    _common(p, mutation=True)
    p.add_argument("--i", help="family size: 3, a range 1-5 or a list 1,2,4")
    p.add_argument("--a", type=float, help="age cutoff, 0 <= a <= t")
    p.add_argument("--t", type=float, help="time")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("mutation", help="mean carriers and alleles by mutation count",
                       description="CSV columns: i = allele type, t = time, E_K = E[K_i(t)] (carriers), "
                                   "E_L = E[L_i(t)] (alleles), eta_p and leading_coeff such that "
                                   "E[K_i(t)] ~ leading_coeff t^i e^{eta_p t}.")
    _common(p, mutation=True)
    p.add_argument("--t", help="time or comma-separated times")
    p.add_argument("--imax", type=int, help="largest type reported (default 3)")
    p.set_defaults(handler=cmd_mutation)

    p = sub.add_parser("kappa", help="limit law of the type-i carrier count",
                       description="JSON: atom_prob = P(kappa_i = 0), conditional_mean = E[kappa_i | "
                                   "kappa_i > 0], theta = its inverse, mean = E[kappa_i], residual_max = "
                                   "largest fixed-point residual of the Laplace transform on a in [1e-2, 1e2].")
    _common(p, mutation=True)
    p.add_argument("--i", type=int, help="allele type (default 1)")
    p.set_defaults(handler=cmd_kappa)

    p = sub.add_parser("simulate", help="simulate one population",
                       description="CSV of the individuals alive at the horizon: individual, parent, birth, "
                                   "death, allele, allele_type = number of mutations from the ancestral "
                                   "allele, allele_origin = birth time of the allele.")
    _common(p, mutation=True)
    p.add_argument("--horizon", type=float, help="simulation horizon T")
    p.add_argument("--seed", type=int, help="random seed (default 42)")
    p.add_argument("--cap", type=int, help="maximum number of individuals born (default 1e7)")
    p.add_argument("--registry", help="optional path for the allele registry CSV")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("validate", help="Monte Carlo validation suite",
                       description="CSV columns: check, theory = analytic value, estimate = Monte Carlo "
                                   "mean, se = its standard error, z = (estimate - theory)/se, pass = |z| <= 3. "
                                   "Exit code 1 if any check fails.")
    p.add_argument("--config", help="JSON file of settings; flags override its keys")
    p.add_argument("--out", help="output path, '-' for stdout (default)")
    p.add_argument("--suite", help="suite name (default core)")
    p.add_argument("--seed", type=int, help="random seed (default 42)")
    p.add_argument("--replicates", type=int, help="replicates per check (default 10000)")
    p.set_defaults(handler=cmd_validate)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(resolve(args))
    except SplitTreeError as exc:
        key = getattr(exc, "key", None)
        prefix = f"error [{key}]" if key else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
