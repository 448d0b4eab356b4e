"""Command-line driver: ``dsagg {run,verify,rates,replay}``.

Exit codes: 0 success, 1 disagreement / failed check / replay mismatch,
2 invalid parameters or usage, 3 enumeration budget exceeded.

Every flag except ``--config`` can also be set in a config file of flat
``key=value`` lines (``schema_version=1`` required); flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

from .algebra import RingVector
from .keying import ProtocolParams, TrivialRegimeError
from .netsim import SimConfig, Transcript, TranscriptError, exit_status, replay, run_simulation
from .oracle import BudgetExceededError, default_budget, world_count
from .verifier import CHECKS, check_rate_region, format_records, measure_rates, run_checks, summary_table

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
CONFIG_SCHEMA = "1"
CONFIG_KEYS = {
    "users", "collusion", "modulus", "len", "seed", "budget", "out",
    "checks", "format", "inputs", "order",
}


class UsageError(Exception):
    pass


def read_config(path: str | Path) -> dict[str, str]:
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    if values.pop("schema_version", None) != CONFIG_SCHEMA:
        raise UsageError(f"{path}: schema_version={CONFIG_SCHEMA} is required")
    unknown = set(values) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    return values


def _parse_users(text: str) -> list[int]:
    """'5', '3-8' or '3,4,7'."""
    out = []
    for part in str(text).split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _read_inputs(path: str, K: int, q: int, L: int) -> tuple[RingVector, ...]:
    """One line per user, symbols separated by commas or whitespace."""
    rows = [ln.replace(",", " ").split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(rows) != K:
        raise UsageError(f"{path}: need {K} input lines, found {len(rows)}")
    try:
        return tuple(RingVector.of(q, map(int, r)) for r in rows)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--users", help="number of users K (rates also takes '3-8' or '3,5')")
    common.add_argument("--collusion", type=int, help="collusion threshold T")
    common.add_argument("--modulus", type=int, help="ring modulus q")
    common.add_argument("--len", type=int, help="symbols per input L")
    common.add_argument("--seed", type=int)
    common.add_argument("--budget", type=int, help="max worlds to enumerate (env DSA_BUDGET)")
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("text", "machine"))

    p = argparse.ArgumentParser(prog="dsagg", description="Decentralized secure aggregation toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="simulate one aggregation round")
    run.add_argument("--inputs", help="file with one input vector per line")
    run.add_argument("--order", choices=("round-robin", "seeded-shuffle"))
    verify = sub.add_parser("verify", parents=[common], help="exhaustive information-theoretic checks")
    verify.add_argument("--checks", help=f"comma list from {','.join(CHECKS)}")
    sub.add_parser("rates", parents=[common], help="rate table against the optimal region")
    rp = sub.add_parser("replay", parents=[common], help="re-execute a transcript and compare")
    rp.add_argument("transcript")
    return p


_DEFAULTS = {"collusion": 0, "modulus": 2, "len": 1, "format": "text", "order": "round-robin"}


def _settings(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    if args.config:
        merged.update(read_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    return merged


def _params(s: dict, K: int | None = None) -> ProtocolParams:
    if K is None:
        if "users" not in s:
            raise UsageError("--users is required")
        users = _parse_users(s["users"])
        if len(users) != 1:
            raise UsageError("this command takes a single --users value")
        K = users[0]
    return ProtocolParams.make(K, int(s["collusion"]), int(s["modulus"]), int(s["len"]))


def cmd_run(s: dict, out) -> int:
    params = _params(s)
    seed = int(s["seed"]) if "seed" in s else secrets.randbits(64)
    inputs = None
    if "inputs" in s:
        inputs = _read_inputs(s["inputs"], params.K, params.ring.q, params.ring.L)
    cfg = SimConfig(params, seed, inputs, s["order"])
    t = run_simulation(cfg)
    path = Path(s.get("out", "transcript.jsonl"))
    t.write(path)
    results = t.results()
    agree = t.agreement()
    if s["format"] == "machine":
        print(json.dumps({
            "K": params.K, "T": params.T, "q": params.ring.q, "L": params.ring.L, "seed": seed,
            "sum": list(results[1].coords), "agreement": agree, "transcript": str(path),
        }, separators=(",", ":")), file=out)
    else:
        print(f"K={params.K} T={params.T} q={params.ring.q} L={params.ring.L} seed={seed}", file=out)
        for k, v in results.items():
            print(f"user {k}: sum = {list(v.coords)}", file=out)
        print(f"agreement: {'yes' if agree else 'NO'}", file=out)
        print(f"transcript: {path}", file=out)
    return exit_status(t)


def cmd_verify(s: dict, out) -> int:
    params = _params(s)
    budget = int(s["budget"]) if "budget" in s else default_budget()
    names = [n.strip() for n in s["checks"].split(",")] if s.get("checks") else None
    if names and set(names) - set(CHECKS):
        raise UsageError(f"unknown checks {sorted(set(names) - set(CHECKS))}; choose from {list(CHECKS)}")
    needed = world_count(params)
    if needed > budget:
        raise BudgetExceededError(needed, budget)
    reports = run_checks(params, names, budget=budget)
    text = format_records(reports) if s["format"] == "machine" else summary_table(reports)
    out.write(text)
    if "out" in s:
        Path(s["out"]).write_text(format_records(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_rates(s: dict, out) -> int:
    users = _parse_users(s.get("users", "3"))
    rows = []
    for K in users:
        params = _params(s, K)
        rates = measure_rates(params)
        rep = check_rate_region(params, rates)
        rows.append((params, rates, rep))
    if s["format"] == "machine":
        for params, r, rep in rows:
            print(json.dumps({
                "K": params.K, "T": params.T, "R_X": r.R_X, "R_Z": r.R_Z, "R_ZSigma": r.R_ZSigma,
                "bound": [1, 1, params.K - 1], "member": rep.passed, "optimal": rep.params["optimal"],
            }, separators=(",", ":")), file=out)
    else:
        print(f"{'K':>3} {'T':>3} {'R_X':>6} {'R_Z':>6} {'R_ZSigma':>9} {'bound':>12}  optimal", file=out)
        for params, r, rep in rows:
            bound = f"(1,1,{params.K - 1})"
            print(
                f"{params.K:>3} {params.T:>3} {r.R_X:>6g} {r.R_Z:>6g} {r.R_ZSigma:>9g} {bound:>12}  "
                f"{'yes' if rep.params['optimal'] else 'no'}",
                file=out,
            )
    return EXIT_OK if all(rep.passed for _, _, rep in rows) else EXIT_FAIL


def cmd_replay(s: dict, out) -> int:
    try:
        t = Transcript.read(s["transcript"])
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    ok = replay(t)
    print("replay: identical" if ok else "replay: MISMATCH", file=out)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "rates": cmd_rates, "replay": cmd_replay}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        s = _settings(args)
        return COMMANDS[args.command](s, out)
    except TrivialRegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, TranscriptError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
