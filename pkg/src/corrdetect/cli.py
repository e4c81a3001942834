"""Command-line entry point: experiment configs in, tables out.

Subcommands: ``rate`` (closed-form separation rates), ``calibrate`` (build
and serialize a calibrated test), ``risk`` (one risk estimate from a config),
``sweep`` (grid of risk estimates -> CSV + JSON manifest), ``divergence``
(prior divergence reports as JSON rows), and ``selftest``.

Exit codes: 0 success, 2 configuration error (with a field-path diagnostic),
1 runtime failure.  The master seed falls back to the CORRDETECT_SEED
environment variable when no flag is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConfigError, CorrdetectError
from .divergences import (
    GroupSupported,
    PointMass,
    ShiftedSparse,
    SingleGroupSparse,
    UniformSparse,
    ingster_suslina_chisq,
    risk_lower_bound,
)
from .models import Equicorrelated, Grouped, RankOne
from .procedures import build_test
from .rates import rate_equicorrelated, rate_grouped, rate_rank_one
from .risk import (
    SweepPlan,
    default_alternatives,
    estimate_risk,
    run_sweep,
    write_manifest,
    write_rows_csv,
)
from .streams import substream

_FAMILIES = {"eq": "equicorrelated", "equicorrelated": "equicorrelated",
             "grouped": "grouped", "rankone": "rank_one", "rank_one": "rank_one"}


def _load_pattern(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=float, ndmin=1)
    except OSError as exc:
        raise ConfigError("v_file", str(exc))


def _master_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("CORRDETECT_SEED")
    return int(env) if env else 0


# ---------------------------------------------------------------------------
# config schema


def _require(block: dict, path: str, key: str, types, optional=False, default=None):
    if key not in block:
        if optional:
            return default
        raise ConfigError(f"{path}.{key}", "missing required field")
    value = block[key]
    if not isinstance(value, types):
        raise ConfigError(f"{path}.{key}",
                          f"expected {types}, got {type(value).__name__}")
    return value


def _reject_unknown(block: dict, path: str, allowed) -> None:
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")


def _numbers(value, path):
    if not isinstance(value, list) or not value or not all(
            isinstance(x, (int, float)) for x in value):
        raise ConfigError(path, "expected a nonempty list of numbers")
    return value


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("(file)", str(exc))
    except json.JSONDecodeError as exc:
        raise ConfigError("(file)", f"line {exc.lineno}: {exc.msg}")
    if isinstance(cfg, dict) and "config" in cfg and "plan" in cfg:
        cfg = cfg["config"]  # accept a sweep manifest for reproduction
    if not isinstance(cfg, dict):
        raise ConfigError("(root)", "config must be a JSON object")
    return cfg


def _validate_model_grids(cfg: dict):
    model = _require(cfg, "(root)", "model", dict)
    _reject_unknown(model, "model", {"family", "p", "gamma", "R", "v_file"})
    family = _require(model, "model", "family", str)
    if family not in _FAMILIES:
        raise ConfigError("model.family", f"unknown family {family!r}")
    family = _FAMILIES[family]
    p_raw = _require(model, "model", "p", (int, list))
    p_grid = [int(x) for x in (_numbers(p_raw, "model.p") if isinstance(p_raw, list) else [p_raw])]
    g_raw = _require(model, "model", "gamma", (int, float, list))
    gamma_grid = [float(x) for x in (_numbers(g_raw, "model.gamma")
                                     if isinstance(g_raw, list) else [g_raw])]
    for g in gamma_grid:
        if not 0.0 <= g <= 1.0:
            raise ConfigError("model.gamma", f"gamma={g} outside [0, 1]")
    R_grid = [None]
    if family == "grouped":
        r_raw = _require(model, "model", "R", (int, list))
        R_grid = [int(x) for x in (_numbers(r_raw, "model.R")
                                   if isinstance(r_raw, list) else [r_raw])]
        for p in p_grid:
            for R in R_grid:
                if R < 1 or p % R != 0:
                    raise ConfigError("model.R", f"R={R} does not divide p={p}")
    elif "R" in model:
        raise ConfigError("model.R", "R applies to the grouped family only")
    v = None
    if family == "rank_one":
        v_file = _require(model, "model", "v_file", str)
        v = _load_pattern(v_file)
        for p in p_grid:
            if v.shape != (p,):
                raise ConfigError("model.v_file",
                                  f"pattern length {v.shape[0]} does not match p={p}")
    elif "v_file" in model:
        raise ConfigError("model.v_file", "v_file applies to the rank-one family only")
    return family, p_grid, gamma_grid, R_grid, v


def _validate_test(cfg: dict):
    test = _require(cfg, "(root)", "test", dict, optional=True, default={})
    _reject_unknown(test, "test", {"mode", "eta", "n_cal", "C", "s"})
    mode = _require(test, "test", "mode", str, optional=True, default="calibrated")
    if mode not in ("calibrated", "paper_constants"):
        raise ConfigError("test.mode", f"unknown mode {mode!r}")
    eta = float(_require(test, "test", "eta", (int, float), optional=True, default=0.1))
    if not 0.0 < eta < 1.0:
        raise ConfigError("test.eta", "eta must lie in (0, 1)")
    n_cal = int(_require(test, "test", "n_cal", int, optional=True, default=4000))
    C = _require(test, "test", "C", (int, float), optional=True)
    if mode == "paper_constants" and C is None:
        raise ConfigError("test.C", "paper_constants mode needs C")
    s = _require(test, "test", "s", (int, str), optional=True)
    if isinstance(s, str) and s != "adaptive":
        raise ConfigError("test.s", "s must be an integer or 'adaptive'")
    return mode, eta, n_cal, None if C is None else float(C), s


def build_sweep_plan(cfg: dict, seed=None, workers=None) -> SweepPlan:
    _reject_unknown(cfg, "(root)", {"command", "model", "test", "sweep", "out",
                                    "seed", "workers"})
    family, p_grid, gamma_grid, R_grid, v = _validate_model_grids(cfg)
    mode, eta, n_cal, C, s_fixed = _validate_test(cfg)
    sweep = _require(cfg, "(root)", "sweep", dict)
    _reject_unknown(sweep, "sweep", {"s", "multipliers", "n_reps",
                                     "separation_reference", "adaptive"})
    adaptive = bool(_require(sweep, "sweep", "adaptive", bool, optional=True,
                             default=False))
    s_grid = [int(x) for x in _numbers(_require(sweep, "sweep", "s", list), "sweep.s")]
    for p in p_grid:
        for s in s_grid:
            if not 1 <= s <= p:
                raise ConfigError("sweep.s", f"s={s} outside [1, p={p}]")
    multipliers = [float(x) for x in _numbers(
        _require(sweep, "sweep", "multipliers", list), "sweep.multipliers")]
    n_reps = int(_require(sweep, "sweep", "n_reps", int, optional=True, default=1000))
    sep = _require(sweep, "sweep", "separation_reference", str, optional=True,
                   default="cell")
    if sep not in ("cell", "gamma0"):
        raise ConfigError("sweep.separation_reference", "must be 'cell' or 'gamma0'")
    seed = _master_seed(seed if seed is not None else cfg.get("seed"))
    workers = int(workers if workers is not None else cfg.get("workers", 1))
    try:
        return SweepPlan(family=family, p_grid=tuple(p_grid), s_grid=tuple(s_grid),
                         gamma_grid=tuple(gamma_grid), multipliers=tuple(multipliers),
                         n_reps=n_reps, master_seed=seed, R_grid=tuple(R_grid), v=v,
                         mode=mode, eta=eta, C=C, n_cal=n_cal,
                         separation_reference=sep, workers=workers,
                         adaptive=adaptive)
    except CorrdetectError as exc:
        raise ConfigError("sweep", str(exc))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_rate(args) -> int:
    family = _FAMILIES[args.family]
    if family == "grouped":
        if args.R is None:
            raise ConfigError("model.R", "grouped rates need --R")
        result = rate_grouped(args.p, args.s, args.gamma, args.R)
    elif family == "rank_one":
        if args.v_file is None:
            raise ConfigError("model.v_file", "rank-one rates need --v-file")
        result = rate_rank_one(args.p, args.s, args.gamma, _load_pattern(args.v_file))
    else:
        result = rate_equicorrelated(args.p, args.s, args.gamma)
    print(f"regime {result.regime}")
    if result.uncharacterized:
        print("rate_sq uncharacterized")
    else:
        print(f"rate_sq {result.value:.4f}")
    return 0


def _cmd_calibrate(args) -> int:
    family = _FAMILIES[args.family]
    v = _load_pattern(args.v_file) if args.v_file else None
    seed = _master_seed(args.seed)
    s = "adaptive" if args.adaptive else args.s
    if s is None:
        raise ConfigError("test.s", "give --s or --adaptive")
    test = build_test(family, args.p, s, args.gamma, R=args.R, v=v,
                      mode="calibrated", eta=args.eta, n_cal=args.n_cal,
                      rng=substream(seed, 0), seed_label=f"seed={seed}")
    payload = test.to_json(indent=2, sort_keys=True) + "\n"
    if args.out:
        from .risk import _atomic_write
        _atomic_write(args.out, payload)
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_risk(args) -> int:
    cfg = load_config(args.config)
    _reject_unknown(cfg, "(root)", {"command", "model", "test", "risk", "out",
                                    "seed", "workers"})
    family, p_grid, gamma_grid, R_grid, v = _validate_model_grids(cfg)
    if len(p_grid) != 1 or len(gamma_grid) != 1 or len(R_grid) != 1:
        raise ConfigError("model", "risk runs need scalar model parameters")
    mode, eta, n_cal, C, s = _validate_test(cfg)
    block = _require(cfg, "(root)", "risk", dict)
    _reject_unknown(block, "risk", {"s", "multiplier", "n_reps"})
    s_true = int(_require(block, "risk", "s", int, optional=True,
                          default=s if isinstance(s, int) else 0) or 0)
    if s_true == 0:
        raise ConfigError("risk.s", "missing sparsity")
    mult = float(_require(block, "risk", "multiplier", (int, float)))
    n_reps = int(_require(block, "risk", "n_reps", int, optional=True, default=1000))
    p, gamma, R = p_grid[0], gamma_grid[0], R_grid[0]
    seed = _master_seed(args.seed if args.seed is not None else cfg.get("seed"))
    workers = int(args.workers or cfg.get("workers", 1))
    if family == "grouped":
        rate = rate_grouped(p, s_true, gamma, R)
        model = Grouped(p, R, gamma)
    elif family == "rank_one":
        rate = rate_rank_one(p, s_true, gamma, v)
        model = RankOne(p, gamma, v)
    else:
        rate = rate_equicorrelated(p, s_true, gamma)
        model = Equicorrelated(p, gamma)
    if rate.uncharacterized:
        raise ConfigError("risk.s", "rate uncharacterized for this configuration")
    test_s = s if s is not None else s_true
    test = build_test(family, p, test_s, gamma, R=R, v=v, mode=mode, eta=eta,
                      n_cal=n_cal, C=C, rng=substream(seed, 0))
    alts = default_alternatives(family, p, s_true, gamma, R, v, mult * rate.value)
    est = estimate_risk(test, model, alts, n_reps, seed, workers=workers)
    payload = json.dumps({"rate": {"regime": rate.regime, "rate_sq": rate.value},
                          "multiplier": mult, "estimate": est.descriptor()},
                         indent=2, sort_keys=True) + "\n"
    if args.out:
        from .risk import _atomic_write
        _atomic_write(args.out, payload)
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    plan = build_sweep_plan(cfg, seed=args.seed, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    rows, reports = run_sweep(plan)
    csv_path = os.path.join(args.out, "sweep.csv")
    write_rows_csv(rows, csv_path)
    manifest_path = os.path.join(args.out, "manifest.json")
    write_manifest(plan, reports, csv_path, manifest_path, config=cfg)
    failures = [r for r in reports if r["status"] != "ok"]
    print(f"wrote {csv_path} ({len(rows)} rows; {len(failures)} failed cells)")
    return 0


def _cmd_divergence(args) -> int:
    family = _FAMILIES[args.family]
    v = _load_pattern(args.v_file) if args.v_file else None
    if family == "grouped":
        if args.R is None:
            raise ConfigError("model.R", "grouped divergences need --R")
        model = Grouped(args.p, args.R, args.gamma)
    elif family == "rank_one":
        model = RankOne(args.p, args.gamma, v)
    else:
        model = Equicorrelated(args.p, args.gamma)
    if args.prior == "point_mass":
        theta = np.zeros(args.p)
        theta[: args.s] = args.magnitude
        prior = PointMass(theta)
    elif args.prior == "uniform_sparse":
        prior = UniformSparse(args.p, args.s, args.magnitude, signs=args.signs)
    elif args.prior == "single_group_sparse":
        if args.R is None:
            raise ConfigError("model.R", "this prior needs --R")
        prior = SingleGroupSparse(args.p, args.R, args.s, args.magnitude)
    elif args.prior == "group_supported":
        if args.R is None:
            raise ConfigError("model.R", "this prior needs --R")
        prior = GroupSupported(args.p, args.R, args.m, args.magnitude)
    elif args.prior == "shifted_sparse":
        prior = ShiftedSparse(args.p, args.s, args.magnitude)
    else:
        raise ConfigError("prior", f"unknown prior {args.prior!r}")
    seed = _master_seed(args.seed)
    if isinstance(prior, ShiftedSparse):
        bound = risk_lower_bound(prior, model, method=args.method,
                                 rng=substream(seed, 0), v=v)
        row = {"prior": prior.descriptor(), "model": model.descriptor(),
               "method": args.method, "risk_bound": bound}
    else:
        res = ingster_suslina_chisq(prior, model, method=args.method,
                                    n_mc=args.n_mc, rng=substream(seed, 0), v=v)
        row = {"prior": prior.descriptor(), "model": model.descriptor(),
               "method": res.method}
        row.update(res.descriptor())
    print(json.dumps(row, sort_keys=True))
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest
    out_dir = args.out or "selftest-out"
    seed = _master_seed(args.seed)
    ok, lines = run_selftest(out_dir, seed=seed, workers=args.workers or 1)
    for line in lines:
        print(line)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrdetect",
        description="Sparse signal detection under correlated Gaussian noise")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p, need_s=True):
        p.add_argument("--family", required=True, choices=sorted(_FAMILIES))
        p.add_argument("--p", type=int, required=True)
        if need_s:
            p.add_argument("--s", type=int, required=True)
        p.add_argument("--gamma", type=float, required=True)
        p.add_argument("--R", type=int)
        p.add_argument("--v-file", dest="v_file")

    rate_p = sub.add_parser("rate", help="closed-form squared separation rate")
    add_model_flags(rate_p)
    rate_p.set_defaults(func=_cmd_rate)

    cal_p = sub.add_parser("calibrate", help="build a calibrated test, emit JSON")
    add_model_flags(cal_p, need_s=False)
    cal_p.add_argument("--s", type=int)
    cal_p.add_argument("--adaptive", action="store_true")
    cal_p.add_argument("--eta", type=float, default=0.1)
    cal_p.add_argument("--n-cal", dest="n_cal", type=int, default=4000)
    cal_p.add_argument("--seed", type=int)
    cal_p.add_argument("--out")
    cal_p.set_defaults(func=_cmd_calibrate)

    risk_p = sub.add_parser("risk", help="one risk estimate from a config file")
    risk_p.add_argument("--config", required=True)
    risk_p.add_argument("--out")
    risk_p.add_argument("--seed", type=int)
    risk_p.add_argument("--workers", type=int)
    risk_p.set_defaults(func=_cmd_risk)

    sweep_p = sub.add_parser("sweep", help="risk table over a parameter grid")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--workers", type=int)
    sweep_p.set_defaults(func=_cmd_sweep)

    div_p = sub.add_parser("divergence", help="chi-square divergence report")
    div_p.add_argument("--prior", required=True,
                       choices=["point_mass", "uniform_sparse", "single_group_sparse",
                                "group_supported", "shifted_sparse"])
    div_p.add_argument("--method", default="auto",
                       choices=["auto", "closed_form", "hypergeometric_sum",
                                "exact_enumeration", "monte_carlo"])
    div_p.add_argument("--magnitude", type=float, required=True)
    div_p.add_argument("--m", type=int, default=1)
    div_p.add_argument("--signs", default="plus", choices=["plus", "match_pattern"])
    div_p.add_argument("--n-mc", dest="n_mc", type=int, default=200_000)
    div_p.add_argument("--seed", type=int)
    add_model_flags(div_p)
    div_p.set_defaults(func=_cmd_divergence)

    self_p = sub.add_parser("selftest", help="run the built-in example suite")
    self_p.add_argument("--out")
    self_p.add_argument("--seed", type=int)
    self_p.add_argument("--workers", type=int, default=1)
    self_p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CorrdetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
