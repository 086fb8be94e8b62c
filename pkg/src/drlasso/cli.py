"""Command-line runner for simulation grids.

Every numeric or policy flag accepts a comma-separated list; the runner
expands the Cartesian product into settings, writes one record file per
(policy, setting) pair and a ``summary.csv`` of final-regret quartiles.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from typing import List, Optional, Sequence

from .harness import (
    POLICIES,
    ConfigError,
    load_config,
    run_experiment,
    write_outputs,
    write_summary,
)

# flag destination -> (section, key, parser)
_ENV_FLAGS = {
    "N": ("n_arms", int),
    "d": ("dim", int),
    "s0": ("sparsity", int),
    "rho2": ("cross_arm_correlation", float),
    "noise_sd": ("noise_sd", float),
}
_POLICY_FLAGS = {
    "lambda1": ("lambda1", float),
    "lambda2": ("lambda2", float),
    "zt": ("zt", int),
    "q": ("q", int),
    "h": ("h", float),
    "lambda_forced": ("lambda_forced", float),
    "lambda_all": ("lambda_all", float),
}
_ACCEPTS = {
    "dr": {"lambda1", "lambda2", "zt"},
    "dr_ipw": {"lambda1", "lambda2", "zt"},
    "greedy": {"lambda2"},
    "lasso_bandit": {"q", "h", "lambda_forced", "lambda_all"},
    "uniform": set(),
    "oracle": set(),
}


def _split(text: Optional[str], cast):
    if text is None:
        return [None]
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError("cli", f"cannot parse {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drlasso", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON experiment file; flags override its values")
    p.add_argument("--T", dest="T", help="horizon")
    p.add_argument("--N", dest="N", help="number of arms")
    p.add_argument("--d", dest="d", help="context dimension")
    p.add_argument("--s0", dest="s0", help="sparsity of the true parameter")
    p.add_argument("--rho2", help="cross-arm correlation")
    p.add_argument("--noise-sd", dest="noise_sd", help="reward noise standard deviation")
    p.add_argument("--algo", help=f"policies, from {', '.join(POLICIES)}")
    p.add_argument("--lambda1", help="exploration scale (dr, dr_ipw)")
    p.add_argument("--lambda2", help="penalty scale (dr, dr_ipw, greedy)")
    p.add_argument("--zt", help="uniform-phase length (dr, dr_ipw)")
    p.add_argument("--q", help="forced pulls per arm per block (lasso_bandit)")
    p.add_argument("--h", help="candidate band width (lasso_bandit)")
    p.add_argument("--lambda-forced", dest="lambda_forced", help="forced-sample penalty")
    p.add_argument("--lambda-all", dest="lambda_all", help="all-sample penalty scale")
    p.add_argument("--reps", type=int, help="replications per setting")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


def expand_settings(args: argparse.Namespace) -> List[dict]:
    """Config documents for every combination of the list-valued flags."""
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config", "top level must be a JSON object")
    base_policy = dict(base.get("policy") or {})
    algos = _split(args.algo, str)
    if algos == [None]:
        algos = [base_policy.get("name", "dr")]

    env_axes = {key: _split(getattr(args, flag), cast) for flag, (key, cast) in _ENV_FLAGS.items()}
    pol_axes = {flag: _split(getattr(args, flag), cast)
                for flag, (_, cast) in _POLICY_FLAGS.items()}
    horizons = _split(args.T, int)

    docs = []
    for algo in algos:
        accepted = [flag for flag in _POLICY_FLAGS if flag in _ACCEPTS.get(algo, set())]
        keep_base = base_policy.get("name", "dr") == algo
        env_keys = list(env_axes)
        for env_vals, T, pol_vals in itertools.product(
            itertools.product(*(env_axes[k] for k in env_keys)),
            horizons,
            itertools.product(*(pol_axes[f] for f in accepted)),
        ):
            doc = json.loads(json.dumps(base))
            env = dict(doc.get("environment") or {})
            env.update({k: v for k, v in zip(env_keys, env_vals) if v is not None})
            doc["environment"] = env
            policy = {k: v for k, v in base_policy.items() if k != "name"} if keep_base else {}
            policy.update({_POLICY_FLAGS[f][0]: v for f, v in zip(accepted, pol_vals)
                           if v is not None})
            doc["policy"] = {"name": algo, **policy}
            if T is not None:
                doc["horizon"] = T
            if args.reps is not None:
                doc["replications"] = args.reps
            if args.seed is not None:
                doc["master_seed"] = args.seed
            if args.out is not None:
                doc["output_path"] = args.out
            docs.append(doc)
    return docs


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configs = [load_config(doc) for doc in expand_settings(args)]
    except ConfigError as exc:
        print(f"drlasso: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("drlasso: --jobs must be at least 1", file=sys.stderr)
        return 2

    rows = []
    try:
        for config in configs:
            results = run_experiment(config, n_jobs=args.jobs)
            row = write_outputs(config, results)
            rows.append(row)
            print(f"{row['setting']}: median R(T) = {row['median']:.4g}"
                  + (f" ({row['failed']} failed)" if row["failed"] else ""))
        out_dir = configs[0].output_path
        os.makedirs(out_dir, exist_ok=True)
        write_summary(rows, os.path.join(out_dir, "summary.csv"))
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"drlasso: run failed: {exc}", file=sys.stderr)
        return 1
    failed = sum(row["failed"] for row in rows)
    if failed:
        print(f"drlasso: {failed} replication(s) stopped on solver failure", file=sys.stderr)
        return 1
    return 0
