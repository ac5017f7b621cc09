"""Command line interface: ``posred {analyze,reduce,generate,verify}``.

Exit codes: 0 success, 2 bad input or parameters, 3 unstable system,
4 singular-value tie at the requested order, 5 minor enumeration budget
exceeded, 1 any other numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .balancing import TIE_TOL, admissible_orders, balance, truncate
from .errors import (
    DegenerateHankel,
    PosredError,
    SingularValueTie,
    SizeBudgetExceeded,
    Unstable,
)
from .files import (
    Report,
    SchemaError,
    csv_text,
    dumps_report,
    dumps_system,
    load_system,
    write_atomic,
)
from .generators import FAMILIES, GeneratorSpec, generate
from .lti import (
    DEFAULT_GRID_POINTS,
    DEFAULT_GRID_SPAN,
    StateSpace,
    default_grid,
    frequency_points,
    impulse_response,
    markov_parameters,
    transfer_eval,
    validate,
)
from .numerics import svd
from .positivity import (
    MINOR_TOL,
    POSITIVITY_TOL,
    PositivityReport,
    detect_symmetry,
    external_positivity,
    gk_sign_structure,
    k_positivity_order,
    kernel_matrix,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_UNSTABLE = 3
EXIT_TIE = 4
EXIT_BUDGET = 5

DEFAULT_KERNEL_POINTS = 8
DEFAULT_KMAX = 4
FREQ_POINTS = 200
FREQ_SPAN = (1e-3, 1e3)


@dataclass(frozen=True)
class Config:
    grid_points: int = DEFAULT_GRID_POINTS
    grid_span: tuple = DEFAULT_GRID_SPAN
    kernel_points: int = DEFAULT_KERNEL_POINTS
    kmax: int = DEFAULT_KMAX
    tol: float = MINOR_TOL
    pos_tol: float = POSITIVITY_TOL
    tie_tol: float = TIE_TOL

    @classmethod
    def from_args(cls, args):
        return cls(
            grid_points=args.grid_points,
            grid_span=tuple(args.grid_span),
            kernel_points=args.kernel_points,
            kmax=args.kmax,
            tol=args.tol,
            pos_tol=args.pos_tol,
            tie_tol=args.tie_tol,
        )

    def echo(self):
        d = asdict(self)
        d["grid_span"] = list(self.grid_span)
        return d


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- analysis helpers ----------------------------------------------------

def _channel(sys, i, j):
    return StateSpace(sys.A, sys.B[:, [j]], sys.C[[i], :], sys.D[[i]][:, [j]], sys.domain)


def positivity_report(sys, cfg, certificate=None):
    """k-positivity report; MIMO systems are certified channel by channel
    and the smallest order is reported."""
    kgrid = default_grid(sys, cfg.kernel_points, cfg.grid_span, certificate)
    igrid = default_grid(sys, cfg.grid_points, cfg.grid_span, certificate)
    if sys.is_siso:
        return k_positivity_order(sys, kgrid, cfg.kmax, cfg.tol, igrid, cfg.pos_tol)
    reports = [((i, j), k_positivity_order(_channel(sys, i, j), kgrid, cfg.kmax, cfg.tol,
                                           igrid, cfg.pos_tol))
               for i in range(sys.p) for j in range(sys.m)]
    (ci, cj), worst = min(reports, key=lambda item: item[1].k_order)
    witness = dict(worst.witness or {}, channel=[ci, cj]) if worst.witness else None
    return PositivityReport(
        externally_positive=all(r.externally_positive for _, r in reports),
        d_nonnegative=all(r.d_nonnegative for _, r in reports),
        k_order=worst.k_order,
        grid=kgrid,
        hankel_size=worst.hankel_size,
        tolerance=cfg.tol,
        minors_checked=sum(r.minors_checked for _, r in reports),
        witness=witness,
        k_max=cfg.kmax,
        kernel_order=min(r.kernel_order for _, r in reports),
        order_minima=worst.order_minima,
        impulse_check=worst.impulse_check,
        complete=all(r.complete for _, r in reports),
    )


def _impulse_samples(sys, grid):
    if sys.continuous:
        return impulse_response(sys, grid)
    pts = grid.points.astype(int)
    return markov_parameters(sys, int(pts.max()) + 2)[1:][pts]


def frequency_error(sys, reduced, omegas):
    """Largest singular value of ``G - G_r`` at each frequency."""
    out = np.empty(len(omegas))
    for k, s in enumerate(frequency_points(sys, omegas)):
        E = transfer_eval(sys, s) - transfer_eval(reduced, s)
        # singular values of the real embedding are those of E, doubled
        out[k] = svd(np.block([[E.real, -E.imag], [E.imag, E.real]])).singular_values[0]
    return out


def frequency_grid(sys):
    hi = FREQ_SPAN[1] if sys.continuous else np.pi
    return np.geomspace(FREQ_SPAN[0], hi, FREQ_POINTS)


def _order_verdicts(sys, bal, igrid, cfg):
    verdicts = []
    admissible = set(admissible_orders(bal.hsv, cfg.tie_tol))
    for r in range(1, bal.order + 1):
        if r not in admissible:
            verdicts.append({"order": r, "admissible": False})
            continue
        res = truncate(bal, r, cfg.tie_tol)
        ok, worst = external_positivity(res.sys_reduced, igrid, cfg.pos_tol)
        verdicts.append({
            "order": r,
            "admissible": True,
            "error_bound": res.error_bound,
            "externally_positive": ok,
            "worst_sample": worst,
        })
    return verdicts


def analyze_system(sys, cfg):
    """Run validate, balance, k-positivity and sign-structure analysis.

    Returns ``(report, balanced_realization)``.
    """
    cert = validate(sys)
    bal = balance(sys)
    pos = positivity_report(sys, cfg, cert)
    sign = None
    if sys.is_siso:
        H = kernel_matrix(sys, pos.grid)
        sign = gk_sign_structure(H, min(cfg.kmax, *H.shape))
    igrid = default_grid(sys, cfg.grid_points, cfg.grid_span, cert)
    report = Report(
        command="analyze",
        config=cfg.echo(),
        system={"domain": sys.domain, "states": sys.n, "inputs": sys.m,
                "outputs": sys.p, "balanced_order": bal.order},
        stability={"stable": True, "lyapunov_min_eigenvalue": cert.min_eigenvalue,
                   "lyapunov_max_eigenvalue": cert.max_eigenvalue,
                   "time_constant": cert.time_constant},
        symmetry=detect_symmetry(sys),
        hsv=[float(x) for x in bal.hsv],
        positivity=pos,
        sign_structure=sign,
        reductions=_order_verdicts(sys, bal, igrid, cfg),
    )
    return report, bal


def choose_auto_order(bal, k_order, tie_tol=TIE_TOL):
    """Largest gap-admissible ``r <= k_order`` (at least 1).

    Returns ``(r, certified)``; ``certified`` is False when ``k_order`` is 0
    or no admissible order lies within it.
    """
    admissible = admissible_orders(bal.hsv, tie_tol)
    cap = min(max(k_order, 1), bal.order)
    within = [r for r in admissible if r <= cap]
    if within:
        return within[-1], k_order >= 1
    return admissible[0], False


# -- commands ------------------------------------------------------------

def _emit(text, out):
    if out in (None, "-"):
        _sys.stdout.write(text)
    else:
        write_atomic(out, text)


def cmd_analyze(args):
    sys, _ = load_system(args.input)
    report, _ = analyze_system(sys, Config.from_args(args))
    _emit(dumps_report(report), args.out)
    return EXIT_OK


def cmd_reduce(args):
    sys, meta = load_system(args.input)
    cfg = Config.from_args(args)
    report, bal = analyze_system(sys, cfg)
    report.command = "reduce"
    certified = None
    if args.auto:
        r, certified = choose_auto_order(bal, report.positivity.k_order, cfg.tie_tol)
    else:
        r = args.order
    try:
        res = truncate(bal, r, cfg.tie_tol)
    except SingularValueTie as exc:
        raise CliError(f"{exc}; try one of {list(exc.alternatives)}", EXIT_TIE) from None
    # judge the reduced model on the original system's grids
    red_pos = positivity_report(res.sys_reduced, cfg, validate(sys))
    res = replace(res, positivity=red_pos)
    report.reduction = {
        "order": res.order,
        "auto": bool(args.auto),
        "auto_certified": certified,
        "error_bound": res.error_bound,
        "hsv_tail": [float(x) for x in res.hsv_tail],
        "externally_positive": red_pos.externally_positive,
        "positivity": res.positivity.to_dict(),
    }
    red_meta = {"reduced_from": meta or None, "order": res.order,
                "error_bound": res.error_bound}
    _emit(dumps_system(res.sys_reduced, red_meta), args.out)
    if args.report:
        write_atomic(args.report, dumps_report(report))
    return EXIT_OK


def generator_spec(args):
    params = {}
    if args.family == "lag_chain":
        if args.poles:
            params["poles"] = [float(p) for p in args.poles]
        elif args.seeded_poles:
            params["pole_mode"] = "seeded"
            params["pole_range"] = [-3.0, -1.0]
        if args.gains:
            params["gains"] = [float(g) for g in args.gains]
    elif args.family == "random_stable":
        params = {"inputs": args.inputs, "outputs": args.outputs, "domain": args.domain}
    elif args.family == "oscillatory":
        if args.a is not None:
            params["a"] = args.a
        if args.omega is not None:
            params["omega"] = args.omega
    order = args.order
    if args.family == "lag_chain" and "poles" in params:
        order = len(params["poles"])
    if args.family == "oscillatory":
        order = 3
    return GeneratorSpec(args.family, order, args.seed, params)


def cmd_generate(args):
    if args.order < 1:
        raise CliError("--order must be >= 1", EXIT_INPUT)
    spec = generator_spec(args)
    try:
        sys = generate(spec)
    except (ValueError, PosredError) as exc:
        raise CliError(f"bad generator parameters: {exc}", EXIT_INPUT) from None
    _emit(dumps_system(sys, {"generator": spec.to_dict()}), args.out)
    return EXIT_OK


def cmd_verify(args):
    sys, _ = load_system(args.input)
    cfg = Config.from_args(args)
    report, bal = analyze_system(sys, cfg)
    report.command = "verify"
    cert = validate(sys)
    igrid = default_grid(sys, cfg.grid_points, cfg.grid_span, cert)
    omegas = frequency_grid(sys)
    orders = admissible_orders(bal.hsv, cfg.tie_tol)
    os.makedirs(args.out_dir, exist_ok=True)

    base = _impulse_samples(sys, igrid)
    chans = [(i, j) for i in range(sys.p) for j in range(sys.m)]

    def names(prefix):
        if sys.is_siso:
            return [prefix]
        return [f"{prefix}_y{i}_u{j}" for i, j in chans]

    header = ["t"] + names("original")
    columns = [base]
    freq_rows = []
    verdicts = []
    for r in orders:
        res = truncate(bal, r, cfg.tie_tol)
        samples = _impulse_samples(res.sys_reduced, igrid)
        header += names(f"r{r}")
        columns.append(samples)
        err = frequency_error(sys, res.sys_reduced, omegas)
        freq_rows += [(r, float(w), float(e), res.error_bound) for w, e in zip(omegas, err)]
        peak = float(np.max(np.abs(samples)))
        ok, worst = external_positivity(res.sys_reduced, igrid, cfg.pos_tol)
        verdicts.append({
            "order": r,
            "error_bound": res.error_bound,
            "max_frequency_error": float(err.max()),
            "bound_holds": bool(err.max() <= res.error_bound + 1e-6),
            "externally_positive": ok,
            "min_over_peak": float(samples.min()) / peak if peak > 0 else 0.0,
            "worst_sample": worst,
        })
    rows = []
    for k, t in enumerate(igrid.points):
        row = [float(t)]
        for col in columns:
            row += [float(col[k, i, j]) for i, j in chans]
        rows.append(row)
    write_atomic(os.path.join(args.out_dir, "impulse.csv"), csv_text(header, rows))
    write_atomic(os.path.join(args.out_dir, "freqerr.csv"),
                 csv_text(["order", "omega", "abs_error", "error_bound"], freq_rows))
    hsv = bal.hsv
    hsv_rows = [(i + 1, float(s), 2.0 * float(np.sum(hsv[i + 1:]))) for i, s in enumerate(hsv)]
    write_atomic(os.path.join(args.out_dir, "hsv.csv"),
                 csv_text(["index", "hsv", "tail_bound"], hsv_rows))
    report.reductions = verdicts
    _emit(dumps_report(report), args.out)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------

VERIFY_EPILOG = """\
CSV outputs (written to --out-dir, floats with 17 significant digits):
  impulse.csv  t, original, r<k>...   impulse response (Markov parameters
               CA^tB in discrete time) of the original and of every
               gap-admissible reduced order; MIMO columns are suffixed
               _y<i>_u<j>
  freqerr.csv  order, omega, abs_error, error_bound   largest singular value
               of G - G_r on 200 log-spaced frequencies (s = i*omega, or
               z = exp(i*omega) in discrete time) and 2 * sum of discarded
               Hankel singular values
  hsv.csv      index, hsv, tail_bound   Hankel singular values and the
               error bound for truncation after that index
"""


def _analysis_flags(p):
    p.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS,
                   help="impulse-response grid size (default %(default)s)")
    p.add_argument("--grid-span", type=float, nargs=2, metavar=("LO", "HI"),
                   default=list(DEFAULT_GRID_SPAN),
                   help="grid span as multiples of the time constant (default 1e-3 8)")
    p.add_argument("--kernel-points", type=int, default=DEFAULT_KERNEL_POINTS,
                   help="Hankel kernel grid size (default %(default)s)")
    p.add_argument("--kmax", type=int, default=DEFAULT_KMAX,
                   help="largest minor order to certify (default %(default)s)")
    p.add_argument("--tol", type=float, default=MINOR_TOL,
                   help="scale-aware minor tolerance (default %(default)g)")
    p.add_argument("--pos-tol", type=float, default=POSITIVITY_TOL,
                   help="impulse positivity tolerance relative to peak (default %(default)g)")
    p.add_argument("--tie-tol", type=float, default=TIE_TOL,
                   help="Hankel singular value tie tolerance relative to sigma_1")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="posred",
        description="Balanced truncation with Hankel k-positivity certification.",
    )
    parser.add_argument("--version", action="version", version=f"posred {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="certify positivity and compute Hankel singular values")
    p.add_argument("input")
    p.add_argument("--out", help="report path (default stdout)")
    _analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reduce", help="balanced truncation")
    p.add_argument("input")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--order", type=int)
    g.add_argument("--auto", action="store_true",
                   help="largest gap-admissible order not above the certified k")
    p.add_argument("--out", help="reduced system path (default stdout)")
    p.add_argument("--report", help="report path")
    _analysis_flags(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("generate", help="write a system from a test family")
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poles", type=float, nargs="+", help="lag_chain poles")
    p.add_argument("--gains", type=float, nargs="+", help="lag_chain gains")
    p.add_argument("--seeded-poles", action="store_true",
                   help="lag_chain poles drawn from [-3, -1] with --seed")
    p.add_argument("--inputs", type=int, default=1)
    p.add_argument("--outputs", type=int, default=1)
    p.add_argument("--domain", choices=("continuous", "discrete"), default="continuous")
    p.add_argument("--a", type=float, help="oscillatory offset")
    p.add_argument("--omega", type=float, help="oscillatory frequency")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("verify", help="emit impulse/frequency-error/hsv CSV files",
                       epilog=VERIFY_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input")
    p.add_argument("--out", help="report path (default stdout)")
    p.add_argument("--out-dir", default=".", help="directory for CSV files")
    _analysis_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except SchemaError as exc:
        code, msg = EXIT_INPUT, f"invalid input: {exc}"
    except Unstable as exc:
        code, msg = EXIT_UNSTABLE, f"unstable system: {exc}"
    except SizeBudgetExceeded as exc:
        code, msg = EXIT_BUDGET, f"size budget exceeded: {exc}"
    except DegenerateHankel as exc:
        code, msg = EXIT_INPUT, f"degenerate system: {exc}"
    except PosredError as exc:
        code, msg = EXIT_FAILED, f"error: {exc}"
    print(f"posred: {msg}", file=_sys.stderr)
    return code


if __name__ == "__main__":
    _sys.exit(main())
