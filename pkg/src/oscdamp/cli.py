"""Command-line surface: pf, modes, sens, sweep, rank, verify.

Exit codes: 0 success, 1 validation error, 2 convergence or oracle error,
3 failed verification, 64 usage error. All numeric output uses 6 significant
digits and identical invocations produce byte-identical stdout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import cases, dispatch, modal, sensitivity
from .errors import (
    ConvergenceError,
    DegenerateModeError,
    DomainError,
    GridFormatError,
    ModeMatchingError,
    OracleError,
    ReductionError,
    SingularityError,
    UsageError,
    ValidationError,
)
from .network import line_states, parse_grid_file
from .study import Study, build_study

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_VERIFY_FAILED = 3
EXIT_USAGE = 64

_VALIDATION_ERRORS = (GridFormatError, ValidationError, DomainError)
_CONVERGENCE_ERRORS = (
    ConvergenceError, SingularityError, ReductionError,
    DegenerateModeError, ModeMatchingError, OracleError,
)


class _UsageAbort(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageAbort(message)


def g6(x: float) -> str:
    return format(float(x), ".6g")


def _table(rows: list[list[str]], header: list[str]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def _load_study(args) -> Study:
    if not os.path.exists(args.grid):
        raise _UsageAbort(f"file not found: {args.grid}")
    with open(args.grid, encoding="utf-8") as fh:
        net = parse_grid_file(fh.read())
    st = build_study(net, const_v=args.const_v)
    if getattr(args, "dump_matrices", None):
        _dump_matrices(st, args.dump_matrices)
    return st


def _dump_matrices(st: Study, outdir: str) -> None:
    os.makedirs(outdir, exist_ok=True)
    np.savetxt(os.path.join(outdir, "L.csv"), st.bundle.L, delimiter=",", fmt="%.17g")
    np.savetxt(os.path.join(outdir, "H.csv"), st.bundle.H, delimiter=",", fmt="%.17g")
    blocks = np.vstack([
        st.bundle.lp_theta_theta, st.bundle.lp_theta_nu, st.bundle.lp_nu_nu,
    ])
    np.savetxt(os.path.join(outdir, "Lp_blocks.csv"), blocks, delimiter=",", fmt="%.17g")


def _select_mode(st: Study, args) -> modal.Mode:
    osc = st.oscillatory()
    if not osc:
        raise ValidationError("no oscillatory modes in this system")
    if args.mode_hz is not None:
        try:
            lo_s, hi_s = args.mode_hz.split(":")
            lo, hi = float(lo_s), float(hi_s)
        except ValueError:
            raise _UsageAbort(f"bad --mode-hz window {args.mode_hz!r}, expected LO:HI") from None
        hits = [md for md in osc if lo <= md.freq_hz <= hi]
        if len(hits) != 1:
            raise _UsageAbort(
                f"--mode-hz {args.mode_hz} selects {len(hits)} modes; need exactly 1"
            )
        return hits[0]
    if args.mode is not None:
        if not 1 <= args.mode <= len(osc):
            raise _UsageAbort(
                f"--mode {args.mode} out of range 1..{len(osc)}"
            )
        return osc[args.mode - 1]
    raise _UsageAbort("select a mode with --mode INDEX or --mode-hz LO:HI")


def _write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_pf(args) -> int:
    st = _load_study(args)
    net = st.network
    from .network import bus_voltages
    v = bus_voltages(net, st.op)
    rows = [[b.label, b.kind, g6(st.op.delta[b.index - 1]), g6(v[b.index - 1])]
            for b in net.buses]
    print(_table(rows, ["bus", "kind", "delta_rad", "V"]))
    ls = line_states(net, st.op)
    lrows = []
    for ln in net.lines:
        k = ln.index - 1
        lrows.append([
            ln.label, net.buses[ln.from_bus - 1].label, net.buses[ln.to_bus - 1].label,
            g6(ls.theta[k]), g6(ls.nu[k]), g6(ls.p[k]), g6(ls.q[k]),
        ])
    print()
    print(_table(lrows, ["line", "from", "to", "theta", "nu", "p", "q"]))
    print()
    print(f"residual max-norm: {g6(st.op.residual_norm)}")
    return EXIT_OK


def _mode_rows(st: Study) -> list[list[str]]:
    rows = []
    for i, md in enumerate(st.oscillatory(), start=1):
        f_hz, zeta_pct, profile = modal.mode_summary(md)
        rows.append([
            str(i), g6(md.sigma), g6(md.omega), g6(f_hz), g6(zeta_pct),
            profile, "em" if md.electromechanical else "",
        ])
    return rows


def cmd_modes(args) -> int:
    st = _load_study(args)
    header = ["idx", "re", "im", "f_hz", "zeta_pct", "swing_profile", "class"]
    rows = _mode_rows(st)
    print(_table(rows, header))
    hidden = len(st.modes) - len(rows)
    if hidden:
        print(f"({hidden} non-oscillatory modes not shown)")
    if args.csv:
        _write_csv(args.csv, header, rows)
    return EXIT_OK


def cmd_sens(args) -> int:
    st = _load_study(args)
    mode = _select_mode(st, args)
    report = sensitivity.sensitivity_coefficients(
        st.network, st.op, mode, const_v=st.const_v)
    print(f"mode: lambda = {g6(mode.sigma)} + {g6(mode.omega)}j  "
          f"f = {g6(mode.freq_hz)} Hz  zeta = {g6(100 * mode.damping_ratio)} %")
    print(f"alpha = {g6(report.alpha.real)} + {g6(report.alpha.imag)}j")
    print()
    rows = []
    for ln in st.network.lines:
        c = report.theta_coeff[ln.index - 1]
        rows.append([ln.label, g6(c.real), g6(c.imag), g6(abs(c / report.alpha))])
    print(_table(rows, ["line", "dtheta_coeff_re", "dtheta_coeff_im", "|coeff/alpha|"]))
    if report.vln_coeff.size:
        print()
        vrows = []
        for i, bus in enumerate(st.network.buses[st.network.m:]):
            c = report.vln_coeff[i]
            vrows.append([bus.label, g6(c.real), g6(c.imag), g6(abs(c / report.alpha))])
        print(_table(vrows, ["bus", "dvln_coeff_re", "dvln_coeff_im", "|coeff/alpha|"]))
    return EXIT_OK


def _parse_pair(st: Study, spec_str: str) -> dispatch.RedispatchPlan:
    if ":" not in spec_str:
        raise _UsageAbort(f"bad --pair {spec_str!r}, expected GA:GB")
    up, down = spec_str.split(":", 1)
    try:
        return dispatch.plan_between(st.network, up, down)
    except ValidationError as exc:
        raise _UsageAbort(str(exc)) from None


def cmd_sweep(args) -> int:
    st = _load_study(args)
    mode = _select_mode(st, args)
    plan = _parse_pair(st, args.pair)
    try:
        r_values = [float(tok) for tok in args.r.split(",") if tok.strip()]
    except ValueError:
        raise _UsageAbort(f"bad --r list {args.r!r}") from None
    if not r_values:
        raise _UsageAbort("--r needs at least one value")
    preds = dispatch.sweep(st.network, st.op, mode, plan, r_values,
                           const_v=st.const_v)
    header = ["r", "sigma_exact", "omega_exact", "sigma_approx", "omega_approx",
              "zeta_exact", "zeta_approx"]
    rows = []
    failures = []
    for pr in preds:
        za = -pr.lambda_approx.real / abs(pr.lambda_approx)
        if pr.lambda_exact is None:
            rows.append([g6(pr.r), "", "", g6(pr.lambda_approx.real),
                         g6(pr.lambda_approx.imag), "", g6(za)])
            failures.append((pr.r, pr.oracle_failure))
        else:
            ze = -pr.lambda_exact.real / abs(pr.lambda_exact)
            rows.append([
                g6(pr.r), g6(pr.lambda_exact.real), g6(pr.lambda_exact.imag),
                g6(pr.lambda_approx.real), g6(pr.lambda_approx.imag),
                g6(ze), g6(za),
            ])
    print(f"redispatch {plan.description}, mode lambda = "
          f"{g6(mode.sigma)} + {g6(mode.omega)}j")
    print(_table(rows, header))
    for r, msg in failures:
        print(f"oracle unavailable at r = {g6(r)}: {msg}")
    if args.csv:
        _write_csv(args.csv, header, rows)
    return EXIT_OK


def cmd_rank(args) -> int:
    st = _load_study(args)
    mode = _select_mode(st, args)
    ranked = dispatch.rank_pairs(st.network, st.op, mode, const_v=st.const_v)
    header = ["up", "down", "dzeta_dr", "dsigma_dr", "domega_dr"]
    rows = [[p.up, p.down, g6(p.dzeta_dr), g6(p.dsigma_dr), g6(p.domega_dr)]
            for p in ranked]
    print(f"mode lambda = {g6(mode.sigma)} + {g6(mode.omega)}j")
    print(_table(rows, header))
    if args.csv:
        _write_csv(args.csv, header, rows)
    return EXIT_OK


def _verify_random_spotcheck(seed: int, count: int = 3) -> list[str]:
    """Formula-vs-oracle agreement on seeded random networks."""
    failures = []
    rng = np.random.default_rng(seed)
    for i in range(count):
        net = cases.random_network(int(rng.integers(0, 2 ** 31)))
        st = build_study(net)
        mode = st.electromechanical()[0]
        labels = net.gen_labels()
        plan = dispatch.plan_between(net, labels[0], labels[1])
        slope = dispatch.unit_dlambda(net, st.op, mode, plan)
        fd = cases.finite_difference_sensitivity(net, st.op, mode, plan)
        err = abs(slope - fd) / max(1.0, abs(slope))
        ok = err < 1e-6
        print(f"{'PASS' if ok else 'FAIL'} random[{i}] n={net.n} m={net.m} "
              f"formula vs oracle rel err {g6(err)}")
        if not ok:
            failures.append(f"random[{i}]: rel err {err:.3e}")
    return failures


def cmd_verify(args) -> int:
    all_ok = True
    for name in cases.FIXTURE_NAMES:
        rep = cases.reproduce_case(name)
        status = "ok" if rep.ok else "FAILED"
        lock = "locked" if rep.locked else "contingent data unlocked"
        print(f"== {name}: {status} ({lock})")
        for ln in rep.lines:
            mark = "PASS" if ln.passed else ("WARN" if ln.status == "contingent" else "FAIL")
            print(f"{mark} {ln.quantity:<24} computed {g6(ln.computed.real)}"
                  f"{'+' + g6(ln.computed.imag) + 'j' if ln.computed.imag else ''}"
                  f" expected {g6(ln.expected.real)}"
                  f"{'+' + g6(ln.expected.imag) + 'j' if ln.expected.imag else ''}"
                  f" tol {g6(ln.tol)} [{ln.status}] {ln.provenance}")
        all_ok = all_ok and rep.ok
    print("== random spot-check")
    failures = _verify_random_spotcheck(args.seed)
    if failures:
        all_ok = False
    print()
    print("verification " + ("PASSED" if all_ok else "FAILED") +
          " (contingent mismatches are warnings)")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="oscdamp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_mode=False):
        p.add_argument("grid", help="grid description file")
        p.add_argument("--const-v", action="store_true", dest="const_v",
                       help="freeze all voltage magnitudes (angle-only model)")
        p.add_argument("--dump-matrices", metavar="DIR",
                       help="dump L, H and the line-coordinate blocks as CSV")
        if needs_mode:
            p.add_argument("--mode", type=int, help="1-based oscillatory mode index")
            p.add_argument("--mode-hz", dest="mode_hz", metavar="LO:HI",
                           help="frequency window in Hz selecting exactly one mode")

    p = sub.add_parser("pf", help="solve the power flow and print the equilibrium")
    add_common(p)
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("modes", help="print the oscillatory modes")
    add_common(p)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("sens", help="print sensitivity coefficients for one mode")
    add_common(p, needs_mode=True)
    p.set_defaults(func=cmd_sens)

    p = sub.add_parser("sweep", help="compare exact vs first-order modes over redispatch amounts")
    add_common(p, needs_mode=True)
    p.add_argument("--pair", required=True, metavar="GA:GB",
                   help="generator that increases : generator that decreases")
    p.add_argument("--r", required=True, help="comma-separated redispatch amounts")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rank", help="rank generator pairs by damping-ratio improvement")
    add_common(p, needs_mode=True)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("verify", help="reproduce the shipped fixtures and run the oracle spot-check")
    p.add_argument("--seed", type=int, default=0, help="seed for the random spot-check")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageAbort as exc:
        print(f"oscdamp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageAbort as exc:
        print(f"oscdamp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _VALIDATION_ERRORS as exc:
        print(f"oscdamp: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _CONVERGENCE_ERRORS as exc:
        print(f"oscdamp: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except UsageError as exc:
        print(f"oscdamp: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
