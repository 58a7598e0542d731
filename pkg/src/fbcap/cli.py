"""Command-line front end.

Exit status: 0 on success, 1 on input errors, 2 when a solver reports a
regime, convergence or consistency failure, or a policy fails verification.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import closedform as cf
from .dp import cost_constrained_capacity, solve_ftfi, verify_kkt
from .errors import (BracketError, ConfigurationError, ConsistencyError, ConvergenceError,
                     FbcapError, RegimeError)
from .io import (ChannelSpec, canonical_dumps, deltas_csv, solution_to_dict, trajectory_csv,
                 values_csv)
from .kernels import CostFunction, InitialCondition, InputPolicy
from .oracle import GridSpec, brute_force_ftfi

FAMILIES = {
    "bumco": (4, lambda p: cf.BumcoParams(*p)),
    "beumco": (3, lambda p: cf.BeumcoParams(*p)),
    "bstmco": (4, lambda p: cf.BstmcoParams(*p)),
    "post": (2, lambda p: cf.post_params(*p)),
    "bssc": (2, lambda p: cf.bssc_params(*p)),
    "bsc": (1, lambda p: cf.bsc_params(*p)),
    "bec": (1, lambda p: cf.bec_params(*p)),
}

DEFAULT_N = 100


class InputError(Exception):
    """Bad command-line input (exit status 1)."""


def parse_channel(text: str):
    """``family:p1,p2,...`` -> parameter object of the matching closed-form family."""
    family, _, rest = text.partition(":")
    family = family.strip().lower()
    if family not in FAMILIES:
        raise InputError(f"unknown channel family '{family}'; choose from {', '.join(FAMILIES)}")
    arity, build = FAMILIES[family]
    try:
        params = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise InputError(f"channel parameters must be numbers: '{rest}'") from None
    if len(params) != arity:
        raise InputError(f"{family} takes {arity} parameter(s), got {len(params)}")
    return family, build(params)


class Problem:
    """Channel, cost, initial distribution and optional candidate policy for one run."""

    def __init__(self, args):
        self.family = self.params = None
        self.spec = None
        if bool(args.channel) == bool(args.spec):
            raise InputError("give exactly one of --channel or --spec")
        if args.channel:
            self.family, self.params = parse_channel(args.channel)
            self.n = args.n if args.n is not None else DEFAULT_N
            if self.n < 0:
                raise InputError("--n must be nonnegative")
            self.channel = self.params.kernel(self.n)
        else:
            self.spec = ChannelSpec.load(args.spec)
            self.channel = self.spec.channel
            self.n = self.channel.n
            if args.n is not None and args.n != self.n:
                if not 0 <= args.n <= self.n:
                    raise InputError(f"--n {args.n} exceeds the spec horizon {self.n}")
                self.channel = self.channel.truncated(args.n)
                self.n = args.n
        self.cost = self._cost(getattr(args, "cost", None))
        self.J = max(self.channel.M, self.cost.N if self.cost is not None else 0)
        self.mu = self._mu(getattr(args, "mu", None))

    def _cost(self, mode):
        ny = self.channel.ny
        if mode in (None, "none"):
            return None
        if mode == "zero":
            return CostFunction.constant(0.0, self.n, self.channel.nx, ny)
        if mode == "match":
            if self.channel.nx != 2 or ny != 2:
                raise InputError("--cost match needs binary input and output alphabets")
            return cf.match_cost(self.n)
        if mode == "spec":
            if self.spec is None or self.spec.cost is None:
                raise InputError("--cost spec needs a --spec file with a gamma table")
            g = self.spec.cost
            return CostFunction(g.gamma[: self.n + 1], g.N, ny)
        raise InputError(f"unknown --cost mode '{mode}'")

    def _mu(self, text):
        ny = self.channel.ny
        if text is None:
            if self.spec is not None and self.spec.mu is not None:
                return self.spec.mu
            # last word (all ones) by default; the erasure family starts from output 0
            first = self.family in ("beumco", "bec")
            return InitialCondition.point(0 if first else ny**self.J - 1, self.J, ny)
        try:
            return InitialCondition.point(int(text), self.J, ny)
        except ValueError:
            pass
        path = Path(text)
        if not path.exists():
            raise InputError(f"--mu must be a word index or a JSON file, got '{text}'")
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data.get("mu")
        return InitialCondition(np.asarray(data, dtype=float), self.J, ny)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def emit(args, summary: dict, payload: dict | None = None, tables: dict | None = None):
    """Write the summary (and full payload) as JSON, or CSV tables into a directory."""
    fmt = args.format
    if args.out is None:
        sys.stdout.write(canonical_dumps(summary))
        return
    out = Path(args.out)
    if fmt == "json":
        doc = dict(payload or {})
        doc["summary"] = summary
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(canonical_dumps(doc))
    else:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in (tables or {}).items():
            (out / name).write_text(text)
        (out / "summary.json").write_text(canonical_dumps(summary))
    sys.stdout.write(canonical_dumps(summary))


def _solution_tables(sol):
    tables = {"policy.csv": trajectory_csv(sol.policy.pi),
              "output.csv": trajectory_csv(sol.output.nu),
              "values.csv": values_csv(sol.values)}
    if getattr(sol, "deltas", None) is not None:
        tables["deltas.csv"] = deltas_csv(sol.deltas)
    return tables


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_ftfi(args):
    pb = Problem(args)
    s = args.s or 0.0
    if s and pb.cost is None:
        raise InputError("--s needs a cost (--cost match|zero|spec)")
    sol = solve_ftfi(pb.channel, pb.mu, pb.cost, s=s, kappa=args.kappa, tol_inner=args.tol_inner)
    summary = {"ftfi": sol.ftfi_value, "per_unit_time": sol.per_unit, "s": sol.s,
               "kappa": sol.kappa, "directed_information": sol.directed_information,
               "n": sol.n, "max_inner_iterations": sol.diagnostics["max_iterations"]}
    emit(args, summary, solution_to_dict(sol, pb.channel, pb.cost), _solution_tables(sol))
    return 0


def _steady(family, params, s):
    if family in ("bumco", "post", "bssc", "bsc"):
        return cf.bumco_cost_steady_state(params, s) if s else cf.bumco_steady_state(params)
    if family in ("beumco", "bec"):
        if s:
            raise InputError("the erasure family has no closed form with cost")
        return cf.beumco_steady_state(params)
    raise InputError(f"no steady-state closed form for '{family}'")


def cmd_capacity(args):
    if not args.channel:
        raise InputError("capacity needs a built-in --channel with a closed form")
    family, params = parse_channel(args.channel)
    ss = _steady(family, params, args.s or 0.0)
    summary = {"capacity_ergodic": ss.capacity, "delta_inf": ss.to_dict()["delta_inf"],
               "kappa": ss.kappa, "s": args.s or 0.0}
    emit(args, summary, {"steady": ss.to_dict()}, {})
    return 0


def _closed_form(pb, s, steady):
    fam, p = pb.family, pb.params
    if fam in ("bumco", "post", "bssc", "bsc"):
        if s:
            return cf.bumco_cost_solve(p, s, pb.n, pb.mu, steady=steady)
        return cf.bumco_solve(p, pb.n, pb.mu, steady=steady)
    if s:
        raise InputError(f"no closed form with cost for '{fam}'")
    if fam in ("beumco", "bec"):
        return cf.beumco_solve(p, pb.n, pb.mu, steady=steady)
    if steady:
        raise InputError("no steady-state closed form for bstmco")
    return cf.bstmco_solve(p, pb.n, pb.mu)


def cmd_closed_form(args):
    if not args.channel:
        raise InputError("closed-form needs a built-in --channel")
    family, _ = parse_channel(args.channel)
    if args.s and family not in ("bumco", "post", "bssc", "bsc"):
        raise InputError(f"no closed form with cost for '{family}'")
    args.cost = "match" if args.s else None
    pb = Problem(args)
    sol = _closed_form(pb, args.s or 0.0, args.steady)
    summary = {"ftfi": sol.ftfi_value, "per_unit_time": sol.per_unit, "s": sol.s,
               "kappa": sol.kappa, "n": sol.n,
               "converged_at_stage": sol.converged_at_stage(args.traj_tol),
               "traj_tol": args.traj_tol}
    if sol.steady is not None:
        summary["capacity_ergodic"] = sol.steady.capacity
        if sol.steady.kappa is not None:
            summary["kappa_ergodic"] = sol.steady.kappa
    emit(args, summary, solution_to_dict(sol, sol.channel, sol.cost), _solution_tables(sol))
    return 0


def _sweep_values(text):
    if ":" in text:
        lo, hi, k = text.split(":")
        return np.linspace(float(lo), float(hi), int(k))
    return np.array([float(v) for v in text.split(",")])


def cmd_cost_sweep(args):
    args.cost = args.cost or "match"
    pb = Problem(args)
    if pb.cost is None:
        raise InputError("cost-sweep needs a cost")
    if args.kappa is not None:
        s_star, sol = cost_constrained_capacity(
            pb.channel, pb.cost, pb.mu, args.kappa, (args.s_min, args.s_max),
            cost_tol=args.tol_cost, tol_inner=args.tol_inner)
        summary = {"s": s_star, "kappa": args.kappa, "achieved_cost": sol.achieved_cost,
                   "ftfi": sol.ftfi_value, "per_unit_time": sol.per_unit, "n": sol.n}
        emit(args, summary, solution_to_dict(sol, pb.channel, pb.cost), _solution_tables(sol))
        return 0
    try:
        grid = _sweep_values(args.s_values)
    except ValueError:
        raise InputError(f"--s-values must be 'lo:hi:count' or a comma list, got '{args.s_values}'") from None
    if np.any(grid < 0):
        raise InputError("multipliers must be nonnegative")
    rows = []
    for s in grid:
        sol = solve_ftfi(pb.channel, pb.mu, pb.cost, s=float(s), tol_inner=args.tol_inner)
        rows.append({"s": float(s), "kappa": sol.achieved_cost,
                     "per_unit_time": sol.directed_information / (sol.n + 1)})
    csv_text = "s,kappa,per_unit_time\n" + "".join(
        f"{r['s']:.17g},{r['kappa']:.17g},{r['per_unit_time']:.17g}\n" for r in rows)
    # largest useful cost level: what the unconstrained optimum spends
    free = [r["kappa"] for r in rows if r["s"] == 0.0]
    kappa_max = free[0] if free else solve_ftfi(pb.channel, pb.mu, pb.cost,
                                                tol_inner=args.tol_inner).achieved_cost
    summary = {"n": pb.n, "points": len(rows), "sweep": rows, "kappa_max": kappa_max}
    emit(args, summary, {"sweep": rows}, {"sweep.csv": csv_text})
    return 0


def _load_policy(text, pb):
    if text == "uniform":
        return InputPolicy.uniform(pb.n, pb.J, pb.channel.nx, pb.channel.ny)
    path = Path(text)
    if not path.exists():
        raise InputError(f"policy file '{text}' not found")
    doc = json.loads(path.read_text())
    if isinstance(doc, dict) and "q" in doc:
        spec = ChannelSpec.from_dict(doc)
        if spec.policy is None:
            raise InputError("policy spec has no 'pi' table")
        return spec.policy
    if isinstance(doc, dict) and "pi" not in doc:
        raise InputError(f"policy file '{text}' has no 'pi' table")
    pi = doc["pi"] if isinstance(doc, dict) else doc
    J = doc.get("J", pb.J) if isinstance(doc, dict) else pb.J
    try:
        table = np.asarray(pi, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"policy file '{text}': 'pi' is not a numeric [t][w][x] table") from None
    return InputPolicy(table, J, pb.channel.ny)


def cmd_verify(args):
    pb = Problem(args)
    if args.policy is None:
        if pb.spec is None or pb.spec.policy is None:
            raise InputError("verify needs --policy (file or 'uniform') or a spec with 'pi'")
        pi = pb.spec.policy
    else:
        pi = _load_policy(args.policy, pb)
    if pi.n != pb.n:
        raise InputError(f"policy horizon {pi.n} differs from channel horizon {pb.n}")
    rep = verify_kkt(pb.channel, pi, pb.cost, s=args.s or 0.0, tol=args.tol)
    t, w, r = rep.worst()
    summary = {"passed": rep.passed, "max_residual": rep.max_residual, "tol": args.tol,
               "worst_stage": t, "worst_word": w,
               "max_equality_residual": float(rep.equality.max()),
               "max_inequality_violation": float(rep.inequality.max())}
    residual_rows = "t,w,equality,inequality\n" + "".join(
        f"{t},{w},{rep.equality[t, w]:.17g},{rep.inequality[t, w]:.17g}\n"
        for t in range(rep.equality.shape[0]) for w in range(rep.equality.shape[1]))
    emit(args, summary, {"equality": rep.equality, "inequality": rep.inequality},
         {"kkt.csv": residual_rows})
    return 0 if rep.passed else 2


def cmd_oracle_check(args):
    pb = Problem(args)
    if pb.n > 2:
        raise InputError("oracle-check is limited to horizons n <= 2")
    s = args.s or 0.0
    sol = solve_ftfi(pb.channel, pb.mu, pb.cost, s=s, tol_inner=args.tol_inner)
    _, v = brute_force_ftfi(pb.channel, pb.mu, pb.cost, s=s,
                            grid=GridSpec(args.grid, args.refine))
    gap = sol.lagrangian - v
    summary = {"dp": sol.lagrangian, "oracle": v, "gap": gap, "tol": args.oracle_tol,
               "passed": bool(abs(gap) <= args.oracle_tol)}
    emit(args, summary, {}, {})
    return 0 if summary["passed"] else 2


# --------------------------------------------------------------------------


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(
        prog="fbcap", description="Feedback capacity of finite-alphabet channels with memory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, cost=True):
        sp.add_argument("--channel", help="built-in: bumco:a,b,g,d | beumco:a,g,b | bstmco:a,b,g,d"
                        " | post:a,b | bssc:a,b | bsc:p | bec:e")
        sp.add_argument("--spec", help="channel-spec JSON file")
        sp.add_argument("--n", type=int, help=f"horizon (stages 0..n), default {DEFAULT_N}")
        sp.add_argument("--mu", help="initial word index or JSON file with a distribution")
        sp.add_argument("--s", type=_nonneg, help="Lagrange multiplier")
        if cost:
            sp.add_argument("--cost", choices=["none", "match", "zero", "spec"],
                            help="attach a cost: match = [x == previous output]")
        sp.add_argument("--tol-inner", type=_positive, default=1e-12)
        sp.add_argument("--out", help="output file (json) or directory (csv)")
        sp.add_argument("--format", choices=["json", "csv"], default="json")

    sp = sub.add_parser("ftfi", help="finite-horizon optimum by dynamic programming")
    common(sp)
    sp.add_argument("--kappa", type=_nonneg, help="cost level for the Lagrangian offset")
    sp.set_defaults(func=cmd_ftfi)

    sp = sub.add_parser("capacity", help="ergodic capacity from the steady-state closed form")
    common(sp, cost=False)
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("cost-sweep", help="sweep multipliers or hit a target cost")
    common(sp)
    sp.add_argument("--kappa", type=_nonneg, help="target average cost (bisection on s)")
    sp.add_argument("--s-values", default="0:1:21", help="'lo:hi:count' or comma list")
    sp.add_argument("--s-min", type=_nonneg, default=0.0)
    sp.add_argument("--s-max", type=_nonneg, default=1.0)
    sp.add_argument("--tol-cost", type=_positive, default=1e-4)
    sp.set_defaults(func=cmd_cost_sweep)

    sp = sub.add_parser("verify", help="check the optimality conditions for a policy")
    common(sp)
    sp.add_argument("--policy", help="policy JSON ('pi' table or full spec) or 'uniform'")
    sp.add_argument("--tol", type=_positive, default=1e-8)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("closed-form", help="closed-form recursions for the built-in families")
    common(sp, cost=False)
    sp.add_argument("--steady", action="store_true", help="also report the steady state")
    sp.add_argument("--traj-tol", type=_positive, default=1e-3)
    sp.set_defaults(func=cmd_closed_form)

    sp = sub.add_parser("oracle-check", help="compare the DP with a brute-force grid (n <= 2)")
    common(sp)
    sp.add_argument("--grid", type=_positive, default=1e-3)
    sp.add_argument("--refine", type=int, default=1)
    sp.add_argument("--oracle-tol", type=_positive, default=2e-5)
    sp.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigurationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RegimeError, ConvergenceError, ConsistencyError, BracketError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except FbcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
