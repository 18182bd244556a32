"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage failure, 2 solver failure.
Data goes to files (or stdout when --out is omitted); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from lqgap import fixtures
from lqgap.auxiliary import COINCIDENCE_TOL, LEMMA_TOL, SolveFailure, verify_auxiliary_identities
from lqgap.experiments import (
    ConfigError,
    HeterogeneityStudy,
    SamplerConfig,
    SamplingRejected,
    compare_trajectories,
    record_header,
    run_dense_sampling,
    run_heterogeneity_study,
    run_monte_carlo,
)
from lqgap.fbne import solve_fbne
from lqgap.game_model import GameFileError, GameValidationError, LQGame, load_game, validate
from lqgap.gap_bound import TIGHTNESS_HEADER, StructureMismatch, compute_bound
from lqgap.io import atomic_write_text, csv_text
from lqgap.auxiliary import build_auxiliary
from lqgap.linalg import SINGULAR_COND, SingularStageMatrix
from lqgap.olne import OracleError, solve_olne

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _table(header, rows, fmt: str) -> str:
    rows = list(rows)
    if fmt == "json":
        def conv(v):
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            if isinstance(v, (int, np.integer)):
                return int(v)
            if isinstance(v, str):
                return v
            v = float(v)
            return None if np.isnan(v) else v
        return json.dumps([{h: conv(v) for h, v in zip(header, r)} for r in rows], indent=1) + "\n"
    return csv_text(header, rows)


def _resolve_game_path(p: str) -> Path:
    path = Path(p)
    if not path.exists() and path.name in fixtures.NAMES and path.parent == Path("."):
        return fixtures.path(path.name)
    return path


def _load(p: str, check: bool = True) -> LQGame:
    game = load_game(_resolve_game_path(p))
    if check:
        report = validate(game)
        if not report.ok:
            raise GameValidationError(f"{p}: " + "; ".join(report.issues))
    return game


def _parse_x1(text: str | None, n: int) -> np.ndarray | None:
    if text is None:
        return None
    try:
        x = np.array([float(v) for v in text.replace(" ", "").split(",") if v != ""])
    except ValueError:
        raise GameValidationError(f"cannot parse --x1 {text!r}") from None
    if x.shape[0] != n:
        raise GameValidationError(f"--x1 has {x.shape[0]} entries, game state dimension is {n}")
    return x


def _stages(arr) -> dict:
    return {str(k + 1): np.asarray(a).tolist() for k, a in enumerate(arr)}


# --- subcommands ---------------------------------------------------------------

def cmd_solve_fbne(args) -> int:
    game = _load(args.game, not args.skip_validation)
    sol = solve_fbne(game, max_cond=args.max_cond)
    payload = {"K": _stages(sol.K), "F": _stages(sol.F), "Z": _stages(sol.Z),
               "cond_P": _stages(sol.cond_P)}
    _emit(json.dumps(payload, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_solve_olne(args) -> int:
    game = _load(args.game, not args.skip_validation)
    sol = solve_olne(game, max_cond=args.max_cond)
    payload = {"L": _stages(sol.L), "Lambda": _stages(sol.Lam), "M": _stages(sol.M),
               "cond_Lambda": _stages(sol.cond_Lam)}
    _emit(json.dumps(payload, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    game = _load(args.game, not args.skip_validation)
    x1 = _parse_x1(args.x1, game.n)
    try:
        cmp = compare_trajectories(game, x1)
    except ValueError as exc:
        raise GameValidationError(str(exc)) from None
    _emit(_table(cmp.header(), cmp.rows(), args.format), args.out)
    _log(f"max pct_diff = {cmp.max_pct:.6g}%")
    return EXIT_OK


def cmd_verify(args) -> int:
    game = _load(args.game, not args.skip_validation)
    report = verify_auxiliary_identities(game, coincidence_tol=args.coincidence_tol)
    d = report.to_dict()
    d["lemma_tol"] = args.lemma_tol
    d["lemmas_hold"] = report.lemmas_hold(args.lemma_tol)
    _emit(json.dumps(d, indent=1) + "\n", args.out)
    return EXIT_OK if d["lemmas_hold"] else EXIT_INVALID


def cmd_bound(args) -> int:
    game = _load(args.game, not args.skip_validation)
    other = _load(args.perturbed, not args.skip_validation) if args.perturbed else build_auxiliary(game)
    series = compute_bound(game, other)
    _emit(_table(TIGHTNESS_HEADER, series.rows(), args.format), args.out)
    _log(f"epsilon = {series.epsilon:.6g}; applicable stages: {int(series.applicable.sum())}/{series.horizon}")
    return EXIT_OK


def cmd_example1(args) -> int:
    g = fixtures.load("example1_g")
    gh = fixtures.load("example1_ghat")
    series = compute_bound(g, gh)
    _emit(_table(TIGHTNESS_HEADER, series.rows(), args.format), args.out)
    return EXIT_OK


def _records_out(records, horizon, args, extra_log=""):
    _emit(_table(record_header(horizon), (r.csv_row(horizon) for r in records), args.format), args.out)
    ok = sum(r.ok for r in records)
    _log(f"{len(records)} records, {ok} ok ({100.0 * ok / len(records):.2f}%){extra_log}")


def cmd_montecarlo(args) -> int:
    mode = {"fixed": "fixed_dynamics", "random": "random_dynamics"}[args.mode]
    cfg = SamplerConfig(sample_count=args.samples, master_seed=args.seed, mode=mode,
                        horizon=args.horizon)
    t0 = time.perf_counter()
    records = run_monte_carlo(cfg, threads=args.threads)
    _records_out(records, cfg.horizon, args, f" in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_hetero(args) -> int:
    cfg = SamplerConfig(sample_count=args.per_tier, master_seed=args.seed, mode="random_dynamics",
                        horizon=args.horizon, dynamics_heterogeneity=f"high_{args.vary}")
    study = run_heterogeneity_study(cfg, per_tier=args.per_tier, pilot=args.pilot,
                                    threads=args.threads)
    _emit(_table(HeterogeneityStudy.header(cfg.horizon), study.csv_rows(cfg.horizon), args.format),
          args.out)
    _log(f"threshold {study.threshold:.6g}; mean-over-t median delta_K: "
         f"high {study.mean_median_delta_K('high'):.6g}, low {study.mean_median_delta_K('low'):.6g}")
    return EXIT_OK


def cmd_dense(args) -> int:
    base = _load(args.game, check=False)
    report = validate(base)
    if not report.ok:
        _log("warning: base game: " + "; ".join(report.issues))
    records = run_dense_sampling(base, args.radius, args.samples, master_seed=args.seed,
                                 threads=args.threads)
    _records_out(records, base.horizon, args)
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lqgap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, game=True, fmt=True):
        if game:
            sp.add_argument("--game", required=True, help="game JSON file")
            sp.add_argument("--skip-validation", action="store_true",
                            help="solve even if Q/R fail the PSD/PD checks")
        sp.add_argument("--out", help="output file (default: stdout)")
        if fmt:
            sp.add_argument("--format", choices=("csv", "json"), default="csv")

    for name, fn in (("solve-fbne", cmd_solve_fbne), ("solve-olne", cmd_solve_olne)):
        sp = sub.add_parser(name)
        common(sp, fmt=False)
        sp.add_argument("--max-cond", type=float, default=SINGULAR_COND,
                        help="singularity threshold on the stage-matrix condition number")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("compare")
    common(sp)
    sp.add_argument("--x1", help='comma-separated initial state (default all ones), e.g. "1,1,1,1"')
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("verify")
    common(sp, fmt=False)
    sp.add_argument("--coincidence-tol", type=float, default=COINCIDENCE_TOL)
    sp.add_argument("--lemma-tol", type=float, default=LEMMA_TOL)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bound")
    common(sp)
    sp.add_argument("--perturbed", help="perturbed game (default: the auxiliary game)")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("example1")
    common(sp, game=False)
    sp.set_defaults(func=cmd_example1)

    def mc_common(sp, default_horizon):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--horizon", type=int, default=default_horizon)

    sp = sub.add_parser("montecarlo")
    common(sp, game=False)
    sp.add_argument("--samples", type=int, required=True)
    sp.add_argument("--mode", choices=("fixed", "random"), default="fixed")
    mc_common(sp, 10)
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("hetero")
    common(sp, game=False)
    sp.add_argument("--vary", choices=("A", "B"), required=True)
    sp.add_argument("--per-tier", type=int, default=1000)
    sp.add_argument("--pilot", type=int, default=1000)
    mc_common(sp, 4)
    sp.set_defaults(func=cmd_hetero)

    sp = sub.add_parser("dense")
    common(sp, fmt=True, game=False)
    sp.add_argument("--game", required=True, help="base game JSON file")
    sp.add_argument("--radius", type=float, required=True)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_dense)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _log(str(exc))
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    try:
        return args.func(args)
    except (GameFileError, GameValidationError, ConfigError, StructureMismatch) as exc:
        _log(f"error: {exc}")
        return EXIT_INVALID
    except SolveFailure as exc:
        _log(f"solver failure in {exc.which}: {exc.cause}")
        return EXIT_SOLVER
    except (SingularStageMatrix, OracleError, SamplingRejected) as exc:
        stage = getattr(exc, "stage", None)
        _log(f"solver failure{f' at stage t={stage}' if stage else ''}: {exc}")
        return EXIT_SOLVER
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
