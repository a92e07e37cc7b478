"""Command-line interface: ``staircase-dp <subcommand> [options]``.

Exit codes: 0 success, 1 invalid input, 2 a privacy audit or goodness-of-fit
test failed.  JSON numbers carry 17 significant digits, CSV numbers 12.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional

import numpy as np

from .abstract_mech import CandidateScoring, abstract_distribution, abstract_select
from .costs import CostFunction, laplace_cost, staircase_cost, discrete_cost
from .exceptions import AuditFailure, ValidationError
from .mechanisms import (
    LaplaceMechanism,
    PrivacyParams,
    StaircaseContinuous,
    StaircaseDiscrete,
    cdf,
    density,
)
from .optimizer import compare_mechanisms, discrete_r_opt, gamma_heuristic, optimal_gamma
from .privacy_audit import (
    PiecewiseConstantDensity,
    audit_piecewise_exact,
    audit_ratio_continuous,
    audit_ratio_discrete,
    laplace_tradeoff,
    numeric_tradeoff,
    sampler_gof,
)
from .streams import sample_stream, uniform_stream

MECHANISMS = ("staircase", "laplace", "staircase-discrete", "geometric", "abstract")


# ---------------------------------------------------------------------------
# formatting


def _json_text(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_text(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json_text(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    if v is None:
        return ""
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)


def _emit_record(args, record: dict, csv_header=None, csv_rows=None) -> None:
    if args.format == "json":
        _emit(args, _json_text(record) + "\n")
    else:
        if csv_header is None:
            flat = {k: v for k, v in record.items() if not isinstance(v, (dict, list))}
            csv_header, csv_rows = list(flat), [list(flat.values())]
        _emit(args, _csv_text(csv_header, csv_rows))


# ---------------------------------------------------------------------------
# argument resolution


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are validation errors (exit 1), not audit failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_range(text: str):
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise ValidationError(f"range must be lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise ValidationError(f"range needs step > 0 and hi >= lo, got {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(n)]


def _params(args) -> PrivacyParams:
    return PrivacyParams(args.epsilon, args.delta)


def _cost(args) -> CostFunction:
    return CostFunction.parse(args.cost)


def _resolve_gamma(args, params: PrivacyParams):
    """Return (gamma, how) for the continuous staircase."""
    g = str(args.gamma).strip().lower()
    if g == "auto":
        return optimal_gamma(params, _cost(args)).parameter, "auto"
    if g == "heuristic":
        return gamma_heuristic(params).parameter, "heuristic"
    try:
        return float(g), "explicit"
    except ValueError:
        raise ValidationError(f"gamma must be a number in [0, 1], 'auto' or 'heuristic'; got {args.gamma!r}") from None


def _resolve_r(args, params: PrivacyParams):
    r = str(args.r).strip().lower()
    if r == "auto":
        return discrete_r_opt(params, _cost(args)).parameter
    try:
        return int(r)
    except ValueError:
        raise ValidationError(f"r must be an integer or 'auto', got {args.r!r}") from None


def _mechanism(args, params: Optional[PrivacyParams] = None):
    """Build the mechanism named by --mech plus metadata describing it."""
    params = params or _params(args)
    meta = {"mechanism": args.mech, "epsilon": params.epsilon, "delta": params.delta}
    if args.mech == "staircase":
        gamma, how = _resolve_gamma(args, params)
        meta.update(gamma=gamma, gamma_source=how)
        if how == "auto":
            meta["cost_function"] = _cost(args).label
        return StaircaseContinuous(params, gamma), meta
    if args.mech == "laplace":
        return LaplaceMechanism(params), meta
    if args.mech == "geometric":
        if params.delta != 1:
            raise ValidationError("geometric requires delta = 1")
        meta["r"] = 1
        return StaircaseDiscrete(params, 1), meta
    if args.mech == "staircase-discrete":
        if params.delta != int(params.delta) or params.delta < 1:
            raise ValidationError("staircase-discrete requires an integer delta >= 1")
        r = _resolve_r(args, params)
        meta["r"] = r
        return StaircaseDiscrete(params, r), meta
    raise ValidationError(f"mechanism {args.mech!r} is not supported by this command")


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args) -> int:
    if args.n < 0:
        raise ValidationError("-n must be non-negative")
    mech, meta = _mechanism(args)
    values = sample_stream(mech, args.n, args.seed)
    meta.update(n=args.n, seed=args.seed)
    if isinstance(mech, StaircaseDiscrete):
        values = values.astype(np.int64)
    if args.format == "json":
        _emit(args, _json_text({"metadata": meta, "values": values}) + "\n")
    else:
        _emit(args, _csv_text(None, ([v] for v in values.tolist())))
    return 0


def cmd_pdf(args) -> int:
    mech, meta = _mechanism(args)
    xs = np.array(_parse_range(args.x_range))
    if isinstance(mech, StaircaseDiscrete):
        xs = np.unique(np.round(xs)).astype(np.int64)
    f, F = density(mech, xs), cdf(mech, xs)
    if args.format == "json":
        _emit(args, _json_text({"metadata": meta, "x": xs, "density": f, "cdf": F}) + "\n")
    else:
        _emit(args, _csv_text(["x", "density", "cdf"], zip(xs.tolist(), f.tolist(), F.tolist())))
    return 0


def cmd_gamma(args) -> int:
    params = _params(args)
    cost = _cost(args)
    if str(args.gamma).lower() == "heuristic":
        res = gamma_heuristic(params, cost)
    else:
        res = optimal_gamma(params, cost)
    record = {"epsilon": params.epsilon, "delta": params.delta, "cost_function": cost.label,
              "gamma": res.parameter, "cost": res.cost.value, "method": res.method,
              "error_bound": res.cost.error_bound, "diagnostics": res.diagnostics}
    _emit_record(args, record)
    return 0


def cmd_cost(args) -> int:
    params = _params(args)
    cost = _cost(args)
    mech, meta = _mechanism(args, params)
    if isinstance(mech, StaircaseContinuous):
        ec = staircase_cost(params, mech.gamma, cost)
    elif isinstance(mech, LaplaceMechanism):
        ec = laplace_cost(params, cost)
    else:
        ec = discrete_cost(mech, cost)
    meta.update(cost_function=cost.label, value=ec.value, method=ec.method, error_bound=ec.error_bound)
    _emit_record(args, meta)
    return 0


def cmd_compare(args) -> int:
    cost = _cost(args)
    rows = compare_mechanisms(cost, _parse_range(args.eps_range), args.delta)
    if args.format == "json":
        _emit(args, _json_text({"cost_function": cost.label, "delta": args.delta,
                                "rows": [r.to_dict() for r in rows]}) + "\n")
    else:
        _emit(args, _csv_text(["epsilon", "v_lap", "v_opt", "gain", "gap"],
                              ([r.epsilon, r.v_lap, r.v_opt, r.gain, r.gap] for r in rows)))
    return 0


def cmd_audit(args) -> int:
    params = _params(args)
    checks = []
    if args.table:
        dens = PiecewiseConstantDensity.from_file(args.table)
        checks.append(audit_piecewise_exact(dens, params).to_dict())
        meta = {"mechanism": "table", "table": args.table, "epsilon": params.epsilon, "delta": params.delta}
    else:
        mech, meta = _mechanism(args, params)
        if isinstance(mech, StaircaseDiscrete):
            checks.append(audit_ratio_discrete(mech).to_dict())
        else:
            checks.append(audit_ratio_continuous(mech, method=args.method).to_dict())
        if args.gof:
            checks.append(sampler_gof(mech, args.n, args.seed).to_dict())
    passed = all(c["passed"] for c in checks)
    report = {"metadata": meta, "checks": checks, "passed": passed}
    if args.format == "json":
        _emit(args, _json_text(report) + "\n")
    else:
        _emit(args, _csv_text(["check", "passed", "max_ratio_or_statistic"],
                              ([c["check"], c["passed"], c.get("max_ratio", c.get("statistic"))]
                               for c in checks)))
    return 0 if passed else 2


def cmd_tradeoff(args) -> int:
    params = _params(args)
    mech, _ = _mechanism(args, params)
    shift = params.delta if args.shift is None else args.shift
    closed = args.method == "closed-form" or (
        args.method == "auto" and isinstance(mech, LaplaceMechanism) and abs(shift) == params.delta)
    if closed:
        if not isinstance(mech, LaplaceMechanism) or abs(shift) != params.delta:
            raise ValidationError("the closed-form curve exists for laplace at |shift| = delta only")
        curve = laplace_tradeoff(params, args.points)
    else:
        curve = numeric_tradeoff(mech, shift, args.points)
    feasible = curve.feasible()
    if args.format == "json":
        _emit(args, _json_text({"mechanism": curve.mechanism, "epsilon": curve.epsilon,
                                "shift": curve.shift, "method": curve.method,
                                "feasible": feasible, "p_fa": curve.p_fa, "p_md": curve.p_md}) + "\n")
    else:
        _emit(args, _csv_text(["p_fa", "p_md", "mechanism", "epsilon", "shift"], curve.rows()))
    return 0 if feasible else 2


def cmd_discrete_opt(args) -> int:
    params = _params(args)
    cost = _cost(args)
    res = discrete_r_opt(params, cost)
    record = {"epsilon": params.epsilon, "delta": params.delta, "cost_function": cost.label,
              "r": res.parameter, "cost": res.cost.value, "method": res.method,
              "error_bound": res.cost.error_bound, "diagnostics": res.diagnostics}
    _emit_record(args, record)
    return 0


def cmd_abstract(args) -> int:
    if not args.table:
        raise ValidationError("abstract needs --table with rows 'candidate_id,score'")
    params = _params(args)
    scoring = CandidateScoring.from_csv(args.table, params.delta)
    gamma, how = _resolve_gamma(args, params)
    probs = abstract_distribution(scoring, params, gamma)
    picks = abstract_select(scoring, params, gamma, uniform_stream(args.n, args.seed)) if args.n > 0 else []
    if args.format == "json":
        _emit(args, _json_text({
            "metadata": {"mechanism": "abstract", "epsilon": params.epsilon, "delta": params.delta,
                         "gamma": gamma, "gamma_source": how, "n": args.n, "seed": args.seed},
            "candidates": list(scoring.candidates), "scores": scoring.scores,
            "probabilities": probs, "samples": picks}) + "\n")
    elif args.n > 0:
        _emit(args, _csv_text(None, ([c] for c in picks)))
    else:
        _emit(args, _csv_text(["candidate_id", "score", "probability"],
                              zip(scoring.candidates, scoring.scores.tolist(), probs.tolist())))
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "pdf": cmd_pdf,
    "gamma": cmd_gamma,
    "cost": cmd_cost,
    "compare": cmd_compare,
    "audit": cmd_audit,
    "tradeoff": cmd_tradeoff,
    "discrete-opt": cmd_discrete_opt,
    "abstract": cmd_abstract,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--gamma", default="auto", help="number in [0,1], 'auto' or 'heuristic'")
    p.add_argument("--r", default="auto", help="discrete break index, or 'auto'")
    p.add_argument("--cost", default="abs", help="abs | square | moment:m | constant[:c] | table:path")
    p.add_argument("--mech", choices=MECHANISMS, default="staircase")
    p.add_argument("-n", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="staircase-dp", description="Staircase noise mechanisms for differential privacy.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in [
        ("sample", "draw noise values"),
        ("pdf", "evaluate density and cdf on a grid"),
        ("gamma", "optimal or heuristic gamma for a cost"),
        ("cost", "expected cost of a mechanism"),
        ("compare", "Laplace versus optimal staircase over an epsilon range"),
        ("audit", "density-ratio audit (and optional goodness of fit)"),
        ("tradeoff", "false-alarm / missed-detection curve"),
        ("discrete-opt", "optimal break index for the discrete staircase"),
        ("abstract", "selection probabilities over scored candidates"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "sample":
            p.set_defaults(format="csv")
        if name == "pdf":
            p.add_argument("--x-range", default="-3:3:0.5", help="lo:hi:step")
        if name == "compare":
            p.add_argument("--eps-range", default="1:20:1", help="lo:hi:step")
            p.set_defaults(format="csv")
        if name == "audit":
            p.add_argument("--table", default=None, help="piecewise-constant density rows 'lo,hi,density'")
            p.add_argument("--method", choices=("auto", "exact", "grid"), default="auto")
            p.add_argument("--gof", action="store_true", help="also run a sampler goodness-of-fit test")
            p.set_defaults(n=100_000)
        if name == "tradeoff":
            p.add_argument("--shift", type=float, default=None)
            p.add_argument("--points", type=int, default=1001)
            p.add_argument("--method", choices=("auto", "closed-form", "numeric"), default="auto")
            p.set_defaults(format="csv")
        if name == "abstract":
            p.add_argument("--table", default=None, help="csv rows 'candidate_id,score'")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AuditFailure as exc:
        print(f"audit failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
