"""Command-line front door: `fischer-nf <subcommand>`.

Subcommands wire the exact engine and the audit layer into reproducible
runs.  All reports are JSON with sorted keys, and embed the tool version,
an echo of the effective configuration, and the sampling seed, so a rerun
with identical inputs is byte-identical.

Exit codes:
    0  success, all checks passed
    1  an exact check or audited inequality failed
    2  usage error / invalid input
    3  refusal: a precondition (truncation, contraction gate) is unmet
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import List, Optional

from . import __version__
from .algebra import BiPolynomial, poly_from_json, rat
from .fischer import decompose_type1, decompose_type2, type1_family, type2_family
from .manifold import (
    ManifoldSpec,
    RealityConflictError,
    ingest,
    manifold_to_json,
)
from .normalform import (
    NormalFormResult,
    RefusalError,
    Transformation,
    normalize,
    theta_step,
    verify_normal_form,
)
from .estimates import (
    GateError,
    PolydiscParams,
    audit_lemma42,
    audit_prop44,
    audit_remark43,
    limit_check_lemma31,
    moser_iterate,
)
from . import manifold as _manifold_mod


@dataclass
class RunConfig:
    """Validated invocation: subcommand plus its effective options."""

    command: str
    options: dict = field(default_factory=dict)


_PATH_OPTIONS = {"out", "certificates"}


def _report(config: RunConfig, payload: dict) -> dict:
    # output paths are excluded from the echo so reports stay byte-identical
    # for identical (input, config, seed) regardless of where they land
    return {
        "version": __version__,
        "command": config.command,
        "config": {
            k: v for k, v in sorted(config.options.items()) if k not in _PATH_OPTIONS
        },
        "report": payload,
    }


def _write_json(data: dict, path: Optional[str]) -> None:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_result(path: str) -> NormalFormResult:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "report" in data and "transform" not in data:
        data = data["report"]
    transform = Transformation.from_json(data["transform"])
    normalized = _manifold_mod.manifold_from_json(data["normalized"])
    source = _manifold_mod.manifold_from_json(data["source"])
    return NormalFormResult(
        transform=transform, normalized=normalized, source=source, certificates=[]
    )


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_ingest(config: RunConfig) -> int:
    spec = ingest(config.options["manifold"])
    payload = {"valid": True, "canonical": manifold_to_json(spec), "order": spec.order() if spec.order() != float("inf") else None}
    _write_json(_report(config, payload), config.options.get("out"))
    return 0


def _cmd_decompose(config: RunConfig) -> int:
    with open(config.options["poly"], "r", encoding="utf-8") as fh:
        p = poly_from_json(json.load(fh))
    if not isinstance(p, BiPolynomial):
        raise ValueError("decompose expects a zzbar-block polynomial")
    degs = p.bidegrees()
    if len(degs) != 1:
        raise ValueError("polynomial must be nonzero and bihomogeneous")
    m, n = degs[0]
    mode = config.options["mode"]
    if mode == "type1":
        cert = decompose_type1(p, type1_family(p.N, n))
    else:
        cert = decompose_type2(p, type2_family(p.N, m - 1))
    ok = cert.verify()
    payload = {"bidegree": [m, n], "certificate": cert.to_json(), "verified": ok}
    _write_json(_report(config, payload), config.options.get("out"))
    return 0 if ok else 1


def _cmd_normalize(config: RunConfig) -> int:
    M = ingest(config.options["manifold"])
    res = normalize(M, config.options["max_degree"])
    report = verify_normal_form(res)
    out = res.to_json()
    out["verification"] = report
    _write_json(_report(config, out), config.options.get("out"))
    certs_path = config.options.get("certificates")
    if certs_path:
        _write_json(
            _report(config, {"certificates": [
                {"bidegree": list(bd), "certificate": c.to_json()}
                for bd, c in res.certificates
            ]}),
            certs_path,
        )
    return 0 if report["passed"] else 1


def _cmd_theta_step(config: RunConfig) -> int:
    M = ingest(config.options["manifold"])
    d = config.options["degree"]
    Mp = theta_step(M, d)
    payload = {
        "manifold": manifold_to_json(Mp),
        "order": Mp.order() if Mp.order() != float("inf") else None,
        "certified_minimum_order": 2 * d - 2,
    }
    _write_json(_report(config, payload), config.options.get("out"))
    return 0


def _cmd_verify(config: RunConfig) -> int:
    res = _load_result(config.options["result"])
    report = verify_normal_form(res)
    payload = dict(report)
    if not report["passed"]:
        payload["failing"] = [
            c for c in report["checks"] if not c["passed"] and not c["informational"]
        ]
    _write_json(_report(config, payload), config.options.get("out"))
    return 0 if report["passed"] else 1


def _cmd_audit(config: RunConfig) -> int:
    M = ingest(config.options["manifold"])
    params = PolydiscParams.from_radii(rat(config.options["r"]), rat(config.options["rprime"]))
    d = config.options["d"]
    samples = config.options["samples"]
    seed = config.options["seed"]
    lem = audit_lemma42(M, params, d, samples=samples, seed=seed)
    prop = audit_prop44(M, params, d, samples=samples, seed=seed)
    remark = []
    for a in (1, 2):
        for b in (1, 2):
            p = M.E.entries[a - 1][b - 1]
            for (m, n) in p.bidegrees():
                blk = p.bidegree_part(m, n)
                remark.append(
                    {
                        "entry": [a, b],
                        "bidegree": [m, n],
                        "audit": audit_remark43(blk, params.r, samples=min(samples, 4000), seed=seed),
                    }
                )
    violations = [c for c in lem["checks"] if c["verdict"] == "violation"]
    if prop["check"]["verdict"] == "violation":
        violations.append(prop["check"])
    payload = {
        "lemma_map_bounds": lem,
        "prop_next_error_bound": prop,
        "remark_norm_checks": remark,
        "violations": len(violations),
        "seed": seed,
    }
    _write_json(_report(config, payload), config.options.get("out"))
    return 1 if violations else 0


def _cmd_iterate(config: RunConfig) -> int:
    M = ingest(config.options["manifold"])
    trace = moser_iterate(
        M,
        config.options["stages"],
        config.options["trunc"],
        samples=config.options["samples"],
        seed=config.options["seed"],
    )
    payload = trace.to_json()
    out = config.options.get("out")
    _write_json(_report(config, payload), out)
    if out:
        csv_path = out.rsplit(".", 1)[0] + ".csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(trace.to_csv())
    return 0


def _cmd_limit_check(config: RunConfig) -> int:
    n_star = limit_check_lemma31(
        config.options["m1"],
        config.options["m2"],
        config.options["m3"],
        config.options["C"],
        config.options["a"],
        config.options["tol"],
    )
    _write_json(_report(config, {"n_star": n_star}), config.options.get("out"))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "decompose": _cmd_decompose,
    "normalize": _cmd_normalize,
    "theta-step": _cmd_theta_step,
    "verify": _cmd_verify,
    "audit": _cmd_audit,
    "iterate": _cmd_iterate,
    "limit-check": _cmd_limit_check,
}


def run(config: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit code."""
    try:
        return _COMMANDS[config.command](config)
    except (GateError, RefusalError) as exc:
        sys.stderr.write(f"refused: {exc}\n")
        return 3
    except (RealityConflictError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except RuntimeError as exc:
        sys.stderr.write(f"check failed: {exc}\n")
        return 1


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="fischer-nf",
        description="Exact partial normal forms via weighted apolar decompositions",
    )
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a manifold file and echo its canonical form")
    p.add_argument("--check", dest="manifold", required=True, metavar="FILE")
    p.add_argument("--out")

    p = sub.add_parser("decompose", help="orthogonally decompose a bihomogeneous polynomial")
    p.add_argument("--poly", required=True)
    p.add_argument("--mode", choices=["type1", "type2"], required=True)
    p.add_argument("--out")

    p = sub.add_parser("normalize", help="run the degree-by-degree normalization")
    p.add_argument("--manifold", required=True)
    p.add_argument("--max-degree", dest="max_degree", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--certificates")

    p = sub.add_parser("theta-step", help="one order-doubling normalization step")
    p.add_argument("--manifold", required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="re-verify a stored normalization result")
    p.add_argument("--result", required=True)
    p.add_argument("--out")

    p = sub.add_parser("audit", help="float audits of the one-step size and error bounds")
    p.add_argument("--manifold", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", default="1")
    p.add_argument("--rprime", default="11/20")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("iterate", help="run the shrinking-disc order-doubling iteration")
    p.add_argument("--manifold", required=True)
    p.add_argument("--stages", type=int, required=True)
    p.add_argument("--trunc", type=int, required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("limit-check", help="evaluate the decay of n^m3 d_n^m1 (1-1/n^m2)^d_n")
    p.add_argument("--m1", type=int, required=True)
    p.add_argument("--m2", type=int, required=True)
    p.add_argument("--m3", type=int, required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--tol", type=float, required=True)
    p.add_argument("--out")

    return top


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    options = {k: v for k, v in vars(args).items() if k != "command" and v is not None}
    code = run(RunConfig(command=args.command, options=options))
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
