"""Command-line interface: certificates, seeded runs, sweeps, and audits.

Exit codes: 0 on success, 2 on validation/config errors, 3 when an audit
fails.  All outputs are deterministic for fixed inputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import dec
from .errors import PridecError
from .harness import (
    audit_transcript_payload,
    build_instance,
    execute,
    write_csv,
    write_transcripts,
)
from .models import QueryModelClass, LossSpec
from .prob import FiniteDist, FiniteSpace

DEC_KINDS = (
    "offset-pac-ldp",
    "offset-reg-ldp",
    "constrained-pac-ldp",
    "quantile",
    "local",
    "sq",
    "robust-offset",
    "nfrac",
    "mincorr",
    "fixedpoint",
)


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _reference(cls, args):
    if args.ref_index is not None:
        return cls.models[args.ref_index]
    return cls.mixture(np.full(len(cls), 1.0 / len(cls)))


def _certificate_json(cert: dec.DecCertificate) -> dict:
    return {
        "kind": cert.kind,
        "value": cert.value,
        "p": [float(v) for v in cert.p.mass],
        "q": [float(v) for v in cert.q.mass],
        "witness_model": cert.witness_model,
        "mode": cert.mode,
        "params": cert.params,
    }


def _query_class_from_json(payload: dict) -> QueryModelClass:
    spec = payload["query_class"]
    loss_spec = spec["loss"]
    if loss_spec["kind"] == "indicator":
        loss = LossSpec.indicator(loss_spec["blocks"], len(spec["responses"]))
    else:
        loss = LossSpec.from_table(np.asarray(loss_spec["table"], dtype=float))
    return QueryModelClass(
        FiniteSpace(tuple(spec["decisions"])),
        FiniteSpace(tuple(spec["queries"])),
        np.asarray(spec["responses"], dtype=float),
        spec.get("norm", "linf"),
        loss,
    )


def cmd_dec(args) -> int:
    payload = _load_json(args.instance)
    kind = args.kind
    if kind == "fixedpoint":
        result = dec.solve_fixed_point_U(
            payload["points"], payload["weights"], args.lambda0
        )
        out = {
            "kind": "fixedpoint",
            "lambda0": args.lambda0,
            "residual": result.residual,
            "trace_expect": result.trace_expect,
            "converged": result.converged,
            "U": [[float(v) for v in row] for row in result.U],
        }
        print(json.dumps(out, sort_keys=True))
        return 0
    if kind == "sq":
        qc = _query_class_from_json(payload)
        ref = dec.RandomizedQueryModel.from_class(qc, range(len(qc)))
        cert = dec.sq_dec(qc, ref, args.eps, args.tau)
        print(json.dumps(_certificate_json(cert), sort_keys=True))
        return 0

    cls = build_instance(payload if "builder" in payload or "inline" in payload
                         else {"inline": payload})
    if kind == "nfrac":
        n_frac, p_star = dec.fractional_covering(cls, args.slack)
        out = {
            "kind": "nfrac",
            "slack": args.slack,
            "n_frac": n_frac if math.isfinite(n_frac) else "inf",
            "p_star": None if p_star is None else [float(v) for v in p_star.mass],
        }
        print(json.dumps(out, sort_keys=True))
        return 0
    if kind == "mincorr":
        refs = [cls.mixture(np.full(len(cls), 1.0 / len(cls))).dist_at(0)]
        report = dec.min_correlation(cls, args.slack, refs)
        out = {
            "kind": "mincorr",
            "eps": report.eps_correlated_at,
            "coverage_ok": report.decision_coverage_ok,
            "pairwise": [[float(v) for v in row] for row in report.pairwise],
            "family": list(report.family),
        }
        print(json.dumps(out, sort_keys=True))
        return 0
    if kind == "local":
        value = dec.local_dec(cls, args.m0, args.eps)
        print(json.dumps({"kind": "local", "value": value, "m0": args.m0,
                          "eps": args.eps}, sort_keys=True))
        return 0

    ref = _reference(cls, args)
    if kind == "offset-pac-ldp":
        cert = dec.offset_pac_dec_ldp(cls, ref, args.gamma)
    elif kind == "offset-reg-ldp":
        cert = dec.offset_regret_dec_ldp(cls, ref, args.gamma)
    elif kind == "constrained-pac-ldp":
        cert = dec.constrained_pac_dec_ldp(cls, ref, args.eps)
    elif kind == "quantile":
        cert = dec.quantile_pac_dec(cls, ref, args.eps, args.delta)
    elif kind == "robust-offset":
        cert = dec.robust_offset_dec(cls, ref, args.gamma, args.beta)
    else:  # pragma: no cover - argparse restricts choices
        raise PridecError(f"unhandled kind {kind}")
    print(json.dumps(_certificate_json(cert), sort_keys=True))
    return 0


def cmd_run(args) -> int:
    config = _load_json(args.config)
    rows, transcripts = execute(config)
    out = args.out or config.get("output", "results.csv")
    write_csv(rows, out)
    tdir = args.transcripts_dir or config.get("transcripts_dir")
    if tdir:
        write_transcripts(transcripts, tdir)
    if any(not r.audit_pass for r in rows):
        print("audit failures present", file=sys.stderr)
        return 3
    return 0


def cmd_sweep(args) -> int:
    config = _load_json(args.config)
    ts = [int(v) for v in args.T.split(",")]
    rows, transcripts = execute(config, T_values=ts)
    out = args.out or config.get("output", "results.csv")
    write_csv(rows, out)
    tdir = args.transcripts_dir or config.get("transcripts_dir")
    if tdir:
        write_transcripts(transcripts, tdir)
    if any(not r.audit_pass for r in rows):
        print("audit failures present", file=sys.stderr)
        return 3
    return 0


def cmd_audit(args) -> int:
    payload = _load_json(args.transcript)
    report = audit_transcript_payload(payload, args.alpha)
    out = {
        "passed": report.passed,
        "failures": [{"round": r, "reason": reason} for r, reason in report.failures],
    }
    print(json.dumps(out, sort_keys=True))
    return 0 if report.passed else 3


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pridec",
        description="decision-estimation certificates and private learning runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dec = sub.add_parser("dec", help="compute a certificate for one quantity")
    p_dec.add_argument("--kind", required=True, choices=DEC_KINDS)
    p_dec.add_argument("--instance", required=True)
    p_dec.add_argument("--gamma", type=float, default=1.0)
    p_dec.add_argument("--eps", type=float, default=0.1)
    p_dec.add_argument("--delta", type=float, default=0.1)
    p_dec.add_argument("--tau", type=float, default=0.0)
    p_dec.add_argument("--beta", type=float, default=0.0)
    p_dec.add_argument("--slack", type=float, default=0.5)
    p_dec.add_argument("--lambda0", type=float, default=0.5)
    p_dec.add_argument("--m0", type=int, default=0)
    p_dec.add_argument("--ref-index", type=int, default=None)
    p_dec.set_defaults(func=cmd_dec)

    p_run = sub.add_parser("run", help="execute seeded runs from a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--transcripts-dir", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across horizons")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--T", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--transcripts-dir", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_audit = sub.add_parser("audit", help="audit a recorded transcript")
    p_audit.add_argument("--transcript", required=True)
    p_audit.add_argument("--alpha", type=float, required=True)
    p_audit.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PridecError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
