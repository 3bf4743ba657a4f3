"""Command-line interface.

Subcommands: ``fit`` (access log -> popularity parameters), ``policy``
(waterfill placement for one scenario), ``analyze`` (theory curves only),
``simulate`` (one Monte Carlo point), ``sweep`` (full tradeoff: simulated,
exact and closed-form curves).

Scenario files are JSON with fail-fast schema checking.  Every output file
carries the tool version, a hash of the effective scenario and the seed:
CSVs as a leading ``#`` comment line, JSON under a ``_meta`` key.  Exit
codes: 0 success, 2 domain/config error, 3 I/O error, 4 invariant
self-check failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__
from .asymptotics import RegimeParams, TradeoffPoint, theory_points
from .errors import ConfigError, DomainError, InvariantError
from .fitting import (
    FitSearch,
    _parse_ts,
    dedupe_accesses,
    fit_mzipf,
    load_access_log,
    write_empirical_csv,
)
from .policy import asymptotic_constants, hit_probability, waterfill
from .popularity import MZipfDist
from .simulator import NetworkConfig, monte_carlo, sweep

SCENARIO_KEYS = {
    "n", "s", "k", "c_rate", "gamma", "q", "m", "fit_result",
    "cluster_counts", "n_clusters", "trials", "seed", "self_cache",
}
_INT_KEYS = ("n", "m", "n_clusters", "s", "k", "trials", "seed")
_NUM_KEYS = ("gamma", "q", "c_rate")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def load_scenario(path) -> dict:
    """Parse and schema-check a scenario JSON file.

    A ``fit_result`` key points at a FitResult JSON (relative paths are
    resolved against the scenario file) and replaces gamma/q/m.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = sorted(set(raw) - SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    if "fit_result" in raw:
        if any(k in raw for k in ("gamma", "q", "m")):
            raise ConfigError("popularity given twice: fit_result plus gamma/q/m")
        fr_path = Path(raw["fit_result"])
        if not fr_path.is_absolute():
            fr_path = Path(path).parent / fr_path
        try:
            fr = json.loads(fr_path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"fit_result file is not valid JSON: {e}")
        for k in ("gamma", "q", "m"):
            if k not in fr:
                raise ConfigError(f"fit_result file missing {k!r}")
            raw[k] = fr[k]
        del raw["fit_result"]
    for k in _INT_KEYS:
        if k in raw and not _is_int(raw[k]):
            raise ConfigError(f"scenario key {k!r} must be an integer")
    for k in _NUM_KEYS:
        if k in raw and (isinstance(raw[k], bool) or not isinstance(raw[k], (int, float))):
            raise ConfigError(f"scenario key {k!r} must be a number")
    if "self_cache" in raw and not isinstance(raw["self_cache"], bool):
        raise ConfigError("scenario key 'self_cache' must be a boolean")
    if "cluster_counts" in raw:
        cc = raw["cluster_counts"]
        if not isinstance(cc, list) or not cc or not all(_is_int(v) for v in cc):
            raise ConfigError("scenario key 'cluster_counts' must be a non-empty integer list")
    return raw


def _require(scn: dict, keys, where: str):
    missing = [k for k in keys if k not in scn]
    if missing:
        raise ConfigError(f"{where} requires scenario keys: {', '.join(missing)}")


def _dist(scn: dict) -> MZipfDist:
    _require(scn, ("gamma", "q", "m"), "popularity model")
    return MZipfDist(float(scn["gamma"]), float(scn["q"]), int(scn["m"]))


def _network(scn: dict, n_clusters: int) -> NetworkConfig:
    return NetworkConfig(
        n=int(scn["n"]),
        n_clusters=n_clusters,
        s=int(scn.get("s", 1)),
        k=int(scn.get("k", 1)),
        c_rate=float(scn.get("c_rate", 1.0)),
        include_self_cache=bool(scn.get("self_cache", False)),
    )


def _effective_seed(args, scn: dict, required: bool):
    seed = args.seed if args.seed is not None else scn.get("seed")
    if required and seed is None:
        raise ConfigError("a seed is required: pass --seed or set 'seed' in the scenario")
    return seed


def _scenario_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _header_line(scn_hash: str, seed) -> str:
    return f"# d2dcache {__version__}, scenario={scn_hash}, seed={'none' if seed is None else seed}"


def _meta(scn_hash: str, seed) -> dict:
    return {"tool": f"d2dcache {__version__}", "scenario": scn_hash, "seed": seed}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_fit(args) -> int:
    records, bad = load_access_log(args.log)
    for ln, reason in bad[:20]:
        print(f"warning: {args.log}:{ln}: {reason}", file=sys.stderr)
    if len(bad) > 20:
        print(f"warning: {len(bad)} malformed lines in total", file=sys.stderr)
    since = _parse_bound(args.since)
    until = _parse_bound(args.until)
    if since is not None or until is not None:
        lo = -math.inf if since is None else since
        hi = math.inf if until is None else until
        records = [r for r in records if r.timestamp is not None and lo <= r.timestamp <= hi]
    emp = dedupe_accesses(records)
    search_kwargs = {}
    if args.gamma_lo is not None or args.gamma_hi is not None:
        search_kwargs["gamma_range"] = (
            args.gamma_lo if args.gamma_lo is not None else 0.05,
            args.gamma_hi if args.gamma_hi is not None else 5.0,
        )
    if args.q_lo is not None or args.q_hi is not None:
        m_cap = args.m if args.m is not None else len(emp.counts)
        search_kwargs["q_range"] = (
            args.q_lo if args.q_lo is not None else 0.0,
            args.q_hi if args.q_hi is not None else float(m_cap),
        )
    if args.coarse_steps is not None:
        search_kwargs["coarse_steps"] = args.coarse_steps
    if args.refine_rounds is not None:
        search_kwargs["refine_rounds"] = args.refine_rounds
    search = FitSearch(**search_kwargs) if search_kwargs else None
    result = fit_mzipf(emp, m=args.m, search=search)
    if len(emp.counts) == 1:
        print(
            "warning: single content observed; any (gamma, q) fits such data, "
            "reporting the smallest grid point",
            file=sys.stderr,
        )
    payload = {
        "command": "fit",
        "log": Path(args.log).name,
        "m": result.m,
        "search": search_kwargs or "defaults",
        "since": since,
        "until": until,
    }
    scn_hash = _scenario_hash(payload)
    out = _out_dir(args)
    _write_json(
        out / "fit_result.json",
        {
            "gamma": result.gamma,
            "q": result.q,
            "m": result.m,
            "kl": result.kl,
            "evaluations": result.evaluations,
            "_meta": _meta(scn_hash, None),
        },
    )
    if args.export_empirical:
        with open(out / "empirical.csv", "w", newline="") as fh:
            fh.write(_header_line(scn_hash, None) + "\n")
            write_empirical_csv(emp, fh)
    print(
        f"fit: gamma={result.gamma:.6g} q={result.q:.6g} m={result.m} "
        f"kl={result.kl:.6g} ({emp.total} unique accesses, "
        f"{emp.distinct_users} users, {result.evaluations} evaluations)"
    )
    return 0


def _parse_bound(text):
    if text is None:
        return None
    try:
        return _parse_ts(text)
    except ValueError:
        raise DomainError(f"cannot parse time bound {text!r} (use seconds or ISO-8601)")


def cmd_policy(args) -> int:
    scn = load_scenario(args.scenario)
    _require(scn, ("n", "n_clusters"), "policy")
    dist = _dist(scn)
    cfg = _network(scn, int(scn["n_clusters"]))
    policy = waterfill(dist, cfg.s, cfg.g_c)
    hit = hit_probability(dist, policy, cfg.s, cfg.g_c)
    con = asymptotic_constants(dist, cfg.s, cfg.g_c)
    scn_hash = _scenario_hash({"command": "policy", **scn})
    out = _out_dir(args)
    with open(out / "policy.csv", "w", newline="") as fh:
        fh.write(_header_line(scn_hash, None) + "\n")
        w = csv.writer(fh)
        w.writerow(["rank", "p_c"])
        for rank, p in enumerate(policy.probs, start=1):
            w.writerow([rank, repr(float(p))])
    _write_json(
        out / "policy_constants.json",
        {
            "nu": policy.nu,
            "m_star": policy.m_star,
            "exponent_denom": policy.exponent_denom,
            "hit_probability": hit,
            "outage": 1.0 - hit,
            "a_prime": con.a_prime,
            "c1": con.c1,
            "c2": con.c2,
            "m_star_asym": con.m_star_asym,
            "g_c": cfg.g_c,
            "_meta": _meta(scn_hash, None),
        },
    )
    print(
        f"policy: m_star={policy.m_star} nu={policy.nu:.6g} hit={hit:.6g} "
        f"(g_c={cfg.g_c}, m={dist.m})"
    )
    return 0


def _curve_rows(scn: dict, dist: MZipfDist):
    """(points, skipped) of exact and closed-form curves per cluster count."""
    points = []
    skipped = []
    for nc in scn["cluster_counts"]:
        try:
            cfg = _network(scn, int(nc))
        except ConfigError as e:
            skipped.append((int(nc), str(e)))
            continue
        policy = waterfill(dist, cfg.s, cfg.g_c)
        hit = hit_probability(dist, policy, cfg.s, cfg.g_c)
        p_good = 1.0 - (1.0 - hit) ** cfg.g_c
        points.append(
            TradeoffPoint(
                g_c=cfg.g_c,
                outage=1.0 - hit,
                throughput=(cfg.c_rate / cfg.k) * p_good / cfg.g_c,
                source="exact_sum",
            )
        )
        points.extend(
            theory_points(
                RegimeParams(
                    gamma=dist.gamma, q=dist.q, m=dist.m, s=cfg.s,
                    g_c=cfg.g_c, k=cfg.k, c_rate=cfg.c_rate,
                )
            )
        )
    return points, skipped


def cmd_analyze(args) -> int:
    scn = load_scenario(args.scenario)
    _require(scn, ("n", "cluster_counts"), "analyze")
    dist = _dist(scn)
    points, skipped = _curve_rows(scn, dist)
    for nc, reason in skipped:
        print(f"warning: cluster count {nc} skipped: {reason}", file=sys.stderr)
    if not points:
        raise ConfigError("no feasible cluster counts in scenario")
    scn_hash = _scenario_hash({"command": "analyze", **scn})
    out = _out_dir(args)
    with open(out / "theory_curves.csv", "w", newline="") as fh:
        fh.write(_header_line(scn_hash, None) + "\n")
        w = csv.writer(fh)
        w.writerow(["g_c", "outage", "throughput", "source", "clamped"])
        for p in sorted(points, key=lambda p: (p.g_c, p.source)):
            w.writerow([p.g_c, repr(p.outage), repr(p.throughput), p.source, p.clamped])
    print(f"analyze: {len(points)} curve points, {len(skipped)} cluster counts skipped")
    return 0


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    _require(scn, ("n", "n_clusters"), "simulate")
    dist = _dist(scn)
    cfg = _network(scn, int(scn["n_clusters"]))
    seed = _effective_seed(args, scn, required=True)
    trials = args.trials if args.trials is not None else scn.get("trials", 100)
    policy = waterfill(dist, cfg.s, cfg.g_c)
    res = monte_carlo(cfg, dist, policy, trials, seed, workers=args.workers)
    hit = hit_probability(dist, policy, cfg.s, cfg.g_c)
    scn_hash = _scenario_hash(
        {"command": "simulate", **scn, "trials": trials, "seed": seed}
    )
    out = _out_dir(args)
    _write_json(
        out / "sim_result.json",
        {
            "n": cfg.n,
            "n_clusters": cfg.n_clusters,
            "g_c": cfg.g_c,
            "trials": res.trials,
            "seed": seed,
            "outage_mean": res.outage_mean,
            "outage_stderr": res.outage_stderr,
            "throughput_min_mean": res.throughput_min_mean,
            "throughput_min_stderr": res.throughput_min_stderr,
            "exact_outage": 1.0 - hit,
            "_meta": _meta(scn_hash, seed),
        },
    )
    print(
        f"simulate: outage={res.outage_mean:.6g} (stderr {res.outage_stderr:.2g}, "
        f"exact {1.0 - hit:.6g}) t_min={res.throughput_min_mean:.6g} "
        f"[{trials} trials, seed {seed}]"
    )
    return 0


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    _require(scn, ("n", "cluster_counts"), "sweep")
    dist = _dist(scn)
    seed = _effective_seed(args, scn, required=True)
    trials = args.trials if args.trials is not None else scn.get("trials", 100)
    base = None
    for nc in scn["cluster_counts"]:
        try:
            base = _network(scn, int(nc))
            break
        except ConfigError:
            continue
    if base is None:
        raise ConfigError("no feasible cluster counts in scenario")
    result = sweep(base, dist, scn["cluster_counts"], trials, seed, workers=args.workers)
    for nc, reason in result.skipped:
        print(f"warning: cluster count {nc} skipped: {reason}", file=sys.stderr)
    scn_hash = _scenario_hash(
        {"command": "sweep", **scn, "trials": trials, "seed": seed}
    )
    out = _out_dir(args)
    n = int(scn["n"])
    with open(out / "tradeoff.csv", "w", newline="") as fh:
        fh.write(_header_line(scn_hash, seed) + "\n")
        w = csv.writer(fh)
        w.writerow(
            ["n_clusters", "g_c", "outage", "outage_stderr",
             "throughput", "throughput_stderr", "source"]
        )
        for p in result.points:
            w.writerow(
                [
                    n // p.g_c,
                    p.g_c,
                    repr(p.outage),
                    "" if p.outage_stderr is None else repr(p.outage_stderr),
                    repr(p.throughput),
                    "" if p.throughput_stderr is None else repr(p.throughput_stderr),
                    p.source,
                ]
            )
    n_sim = sum(1 for p in result.points if p.source == "simulated")
    print(
        f"sweep: {n_sim} cluster counts simulated, {len(result.skipped)} skipped, "
        f"{len(result.points)} points [{trials} trials/point, seed {seed}]"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2dcache",
        description="Popularity fitting, optimal caching and throughput-outage "
        "analysis for clustered D2D networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_help):
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help=seed_help)

    p_fit = sub.add_parser("fit", help="fit popularity parameters to an access log")
    p_fit.add_argument("--log", required=True, help="CSV access log: user_id,content_id[,timestamp]")
    p_fit.add_argument("--m", type=int, default=None, help="library size (default: observed contents)")
    p_fit.add_argument("--gamma-lo", type=float, default=None)
    p_fit.add_argument("--gamma-hi", type=float, default=None)
    p_fit.add_argument("--q-lo", type=float, default=None)
    p_fit.add_argument("--q-hi", type=float, default=None)
    p_fit.add_argument("--coarse-steps", type=int, default=None)
    p_fit.add_argument("--refine-rounds", type=int, default=None)
    p_fit.add_argument("--since", default=None, help="keep records at or after this time")
    p_fit.add_argument("--until", default=None, help="keep records at or before this time")
    p_fit.add_argument("--export-empirical", action="store_true",
                       help="also write the ranked empirical distribution")
    p_fit.add_argument("--out", default=".", help="output directory (default: .)")
    p_fit.set_defaults(func=cmd_fit)

    p_pol = sub.add_parser("policy", help="optimal caching policy for one scenario")
    p_pol.add_argument("--scenario", required=True)
    p_pol.add_argument("--out", default=".")
    p_pol.set_defaults(func=cmd_policy)

    p_ana = sub.add_parser("analyze", help="exact and closed-form curves, no simulation")
    p_ana.add_argument("--scenario", required=True)
    p_ana.add_argument("--out", default=".")
    p_ana.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="Monte Carlo estimate at one cluster count")
    p_sim.add_argument("--scenario", required=True)
    common(p_sim, "master seed (required here or in the scenario)")
    p_sim.add_argument("--trials", type=int, default=None)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_swp = sub.add_parser("sweep", help="full tradeoff sweep with overlays")
    p_swp.add_argument("--scenario", required=True)
    common(p_swp, "master seed (required here or in the scenario)")
    p_swp.add_argument("--trials", type=int, default=None)
    p_swp.add_argument("--workers", type=int, default=1)
    p_swp.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except DomainError as e:  # ConfigError and RegimeError are subclasses
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3
    except InvariantError as e:
        print(f"invariant self-check failed: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
