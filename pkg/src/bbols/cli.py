"""Command line entry point: ``bbols coherence|bounds|solve|sweep``.

Exit codes: 0 success, 2 bad input or config, 3 a bound was needed outside
its valid regime and no explicit fallback was given.
"""
import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as bd
from .block_model import BlockMatrix, gen_gaussian_block_orthogonal, gen_hybrid
from .coherence import coherence_profile
from .harness import (BOUND_PRESETS, SWEEP_COLUMNS, SWEEP_PRESETS, ExperimentConfig, blind_xi,
                      occupancy_from_recovery, run_bound_curves, run_sweep, sweep_preset, sweep_rows)
from .io import ConfigError, read_array, read_flat_config, write_array, write_csv
from .recovery import StoppingRule, recover

log = logging.getLogger("bbols")

EXIT_CONFIG = 2
EXIT_REGIME = 3


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def _emit(path, columns, rows):
    fh = _open_out(path)
    try:
        write_csv(fh, columns, rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _figure_path(args):
    if args.no_figure:
        return None
    if args.figure:
        return args.figure
    if args.out:
        return str(Path(args.out).with_suffix(".png"))
    return None


def _load_matrix(path, d_override=None):
    A, d = read_array(path)
    if A.ndim != 2:
        raise ConfigError(f"{path}: expected a matrix")
    d = d_override or d
    try:
        return BlockMatrix(A, d)
    except ValueError:
        # tolerate files whose columns were not normalized on disk
        log.info("normalizing columns of %s", path)
        return BlockMatrix.normalized(A, d)


def cmd_coherence(args):
    if args.matrix:
        D = _load_matrix(args.matrix, args.d)
    else:
        if not (args.m and args.n and args.d):
            raise ConfigError("--generate needs --m, --n and --d")
        if args.generate == "gaussian":
            D = gen_gaussian_block_orthogonal(args.m, args.n, args.d, args.seed)
        else:
            D = gen_hybrid(args.m, args.n, args.d, args.G, args.seed)
        if args.save:
            write_array(args.save, D.entries, D.d)
    prof = coherence_profile(D)
    _emit(args.out, ["m", "n", "d", "mu", "mu_B", "nu"],
          [[D.m, D.n, D.d, prof.mu, prof.mu_B, prof.nu]])
    return 0


def _parse_custom(text):
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"expected key=value in --custom, got {item!r}")
        out[key.strip()] = value.strip()
    missing = {"m", "n", "k", "d", "mu"} - out.keys()
    if missing:
        raise ConfigError(f"--custom is missing {', '.join(sorted(missing))}")
    try:
        kw = dict(m=int(out["m"]), n=int(out["n"]), k=int(out["k"]), d=int(out["d"]),
                  mu=float(out["mu"]))
        kw["mu_B"] = float(out["mu_B"]) if "mu_B" in out else kw["mu"] / kw["d"]
        for key in ("p_target", "xi"):
            if key in out:
                kw[key] = float(out[key])
        kw["variant"] = out.get("variant", "radius")
    except ValueError as exc:
        raise ConfigError(f"bad --custom value: {exc}") from exc
    unknown = out.keys() - {"m", "n", "k", "d", "mu", "mu_B", "p_target", "xi", "variant"}
    if unknown:
        raise ConfigError(f"unknown --custom keys {', '.join(sorted(unknown))}")
    return kw


def cmd_bounds(args):
    if args.custom:
        kw = _parse_custom(args.custom)
        if args.xi is not None:
            kw["xi"] = args.xi
        rep = bd.bounds_report(**kw)
        _emit(args.out, rep.columns(), [rep.row()])
        for msg in rep.invalid:
            log.warning("invalid: %s", msg)
        if "p_target" in kw and math.isnan(rep.xi):
            log.error("xi could not be derived from p_target; pass --xi to supply one")
            return EXIT_REGIME
        return 0
    columns, rows = run_bound_curves(args.preset)
    _emit(args.out, columns, rows)
    fig = _figure_path(args)
    if fig:
        from .plotting import plot_bound_curves
        plot_bound_curves(args.preset, columns, rows, fig)
        log.info("figure written to %s", fig)
    return 0


def _solve_rule(args, D, algorithm):
    block = algorithm in ("bomp", "bols")
    if args.rule == "fixed":
        if args.iterations is None:
            raise ConfigError("--rule fixed needs --iterations")
        return StoppingRule.fixed_iterations(args.iterations)
    if args.rule == "residual":
        if args.tol is None:
            raise ConfigError("--rule residual needs --tol")
        return StoppingRule.residual_norm(args.tol)
    prof = coherence_profile(D)
    d = D.d if block else 1
    coh = prof.mu_B if block else prof.mu
    xi = args.xi
    if xi is None:
        try:
            xi = blind_xi(args.p_target, D.m, D.n, prof.mu, coh, d)
        except bd.RegimeError as exc:
            log.error("probability bound unusable at mu=%.4g mu_B=%.4g: %s; pass --xi", prof.mu, coh, exc)
            raise
    log.info("blind rule: xi=%.6g threshold=%.6g", xi, bd.blind_threshold(xi, coh, d))
    if block:
        return StoppingRule.blind_block(xi, coh, d)
    return StoppingRule.blind_scalar(xi, coh)


def cmd_solve(args):
    D = _load_matrix(args.matrix, args.d)
    y, _ = read_array(args.y)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != D.m:
        raise ConfigError(f"y has {y.size} entries, matrix has {D.m} rows")
    rule = _solve_rule(args, D, args.alg)
    res = recover(D, y, args.alg, rule)
    if args.out:
        write_array(args.out, res.x_hat, D.d)
    occ = occupancy_from_recovery(res, D.n_blocks)
    print(f"algorithm: {args.alg}")
    print(f"stop_reason: {res.stop_reason}")
    print(f"iterations: {res.iterations}")
    print(f"selected: {' '.join(str(j) for j in res.selected_blocks)}")
    print(f"residual_norm: {res.residual_trace[-1]:.9g}")
    print(f"occupied_bands: {' '.join(str(j) for j in occ.occupied_blocks)}")
    if res.rank_deficient:
        log.warning("least-squares system was rank deficient")
    return 0


def cmd_sweep(args):
    overrides = {}
    for key in ("trials", "workers", "xi"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.fixed_matrix:
        overrides["fixed_matrix"] = True
    if args.config:
        raw = read_flat_config(args.config)
        config = ExperimentConfig.from_mapping(raw)
        for key, value in overrides.items():
            setattr(config, key, value)
        config.__post_init__()
    else:
        config = sweep_preset(args.preset, **overrides)
    points = run_sweep(config)
    _emit(args.out, SWEEP_COLUMNS, sweep_rows(points, config.algorithms))
    fig = _figure_path(args)
    if fig:
        from .plotting import plot_sweep
        xlabel = "block sparsity k" if config.sweep == "k" else "SNR (dB)"
        plot_sweep(points, config.algorithms, fig, xlabel=xlabel)
        log.info("figure written to %s", fig)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="bbols", description="Block OLS recovery, bounds and sweeps.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coherence", help="coherence profile of a matrix file or a generated matrix")
    c.add_argument("matrix", nargs="?", help="matrix file (first line 'm n d')")
    c.add_argument("--generate", choices=("gaussian", "hybrid"))
    c.add_argument("--m", type=int)
    c.add_argument("--n", type=int)
    c.add_argument("--d", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--G", type=float, default=5.0)
    c.add_argument("--save", help="write the generated matrix here")
    c.add_argument("--out")
    c.set_defaults(func=cmd_coherence)

    b = sub.add_parser("bounds", help="tabulate theory bounds")
    g = b.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=BOUND_PRESETS)
    g.add_argument("--custom", help="m=..,n=..,k=..,d=..,mu=..[,mu_B=..][,p_target=..|xi=..]")
    b.add_argument("--xi", type=float, help="explicit blind-rule scale for --custom")
    b.add_argument("--out")
    b.add_argument("--figure", help="PNG path (default: next to --out)")
    b.add_argument("--no-figure", action="store_true")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("solve", help="recover one block-sparse vector")
    s.add_argument("--matrix", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--alg", choices=("omp", "ols", "bomp", "bols"), default="bols")
    s.add_argument("--rule", choices=("fixed", "residual", "blind"), default="blind")
    s.add_argument("--d", type=int, help="override the block length in the matrix header")
    s.add_argument("--iterations", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--p-target", type=float, default=0.95)
    s.add_argument("--xi", type=float)
    s.add_argument("--out", help="write the recovered vector here")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="Monte Carlo recovery-probability curve")
    g = w.add_mutually_exclusive_group(required=True)
    g.add_argument("--config")
    g.add_argument("--preset", choices=sorted(SWEEP_PRESETS))
    w.add_argument("--trials", type=int)
    w.add_argument("--workers", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--xi", type=float, help="fallback scale where the probability bound is unusable")
    w.add_argument("--fixed-matrix", action="store_true")
    w.add_argument("--out")
    w.add_argument("--figure", help="PNG path (default: next to --out)")
    w.add_argument("--no-figure", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except bd.RegimeError as exc:
        log.error("%s", exc)
        return EXIT_REGIME
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
