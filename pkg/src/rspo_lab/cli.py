"""Command-line entry points: train, audit, ablate.

Configuration precedence: config file < RSPO_* environment variables <
command-line flags.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, oracle, score, tasks
from .denoiser import init_params
from .sequences import Sequence

ENV_PREFIX = "RSPO_"


def _env_overrides() -> dict:
    keys = harness.RunConfig.field_keys()
    out = {}
    for key in keys:
        raw = os.environ.get(ENV_PREFIX + key.upper().replace("-", "_"))
        if raw is None:
            continue
        out[key] = _coerce(key, raw)
    return out


def _coerce(key: str, raw: str):
    defaults = harness.RunConfig()
    attr = "lam" if key == "lambda" else key
    current = getattr(defaults, attr)
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _build_config(args) -> harness.RunConfig:
    obj: dict = {}
    if args.config:
        obj.update(json.loads(Path(args.config).read_text()))
    obj.update(_env_overrides())
    flag_map = {
        "lambda": args.lam,
        "group_size": args.group_size,
        "k_masks": args.k_masks,
        "steps": args.steps,
        "seed": args.seed,
        "task": args.task,
        "out_dir": args.out,
    }
    for key, value in flag_map.items():
        if value is not None:
            obj[key] = value
    if args.no_centering:
        obj["centering"] = False
    if args.no_reference:
        obj["reference"] = False
    if args.normalize_adv:
        obj["normalize_adv"] = True
    return harness.RunConfig.from_dict(obj)


def cmd_train(args) -> int:
    cfg = _build_config(args)
    _, summary = harness.run_experiment(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_audit(args) -> int:
    """Run the oracle suite against fresh random tiny instances."""
    rng = np.random.default_rng(args.seed or 0)
    failures = 0

    def check(name: str, fn) -> None:
        nonlocal failures
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - audit reports, never crashes
            failures += 1
            print(f"FAIL {name}: {exc}")

    def elbo_exactness():
        for _ in range(5):
            params = init_params(4, window=2, hidden=8, embed_dim=4,
                                 n_positions=6, seed=int(rng.integers(2**31)),
                                 scale=0.5)
            seq = Sequence(prompt=rng.integers(0, 4, size=2),
                           completion=rng.integers(0, 4, size=3))
            exact = oracle.exact_elbo_expectation(params, seq)
            masks = score.sample_mask_sets(3, 20000, rng)
            est = score.elbo_score(params, seq, masks)
            se = float(est.terms.std(ddof=1)) / np.sqrt(est.k)
            if abs(est.value - exact) > 4 * se:
                raise AssertionError(f"MC estimate {est.value} vs exact {exact} (se {se})")

    def centered_target():
        for _ in range(20):
            n = int(rng.integers(2, 8))
            pi_ref = rng.dirichlet(np.ones(n))
            rewards = rng.normal(size=n)
            beta = float(rng.uniform(0.1, 10.0))
            oracle.kl_regularized_optimum(pi_ref, rewards, beta)

    def proxy_gap():
        p = np.asarray([0.5, 0.5])
        q = np.asarray([0.51, 0.49])
        kl_pq, _, half_var = oracle.kl_proxy(p, q)
        if abs(kl_pq - half_var) > 1e-5:
            raise AssertionError("KL and half-variance diverge on nearby pair")

    def surrogate_bound():
        for _ in range(2000):
            n = 6
            a = rng.normal(size=n)
            a -= a.mean()
            r = rng.normal(size=n)
            xi = rng.uniform(-0.1, 0.1, size=n)
            oracle.perturbation_bound_check(a, r, xi, 0.01)

    def countdown_agreement():
        for _ in range(50):
            inst = tasks.gen_countdown(rng)
            if not oracle.countdown_solvable(inst.payload["numbers"],
                                             inst.payload["target"]):
                raise AssertionError(f"unsolvable instance generated: {inst.payload}")

    check("elbo-estimator-exactness", elbo_exactness)
    check("centered-kl-target-identity", centered_target)
    check("kl-variance-proxy", proxy_gap)
    check("surrogate-error-bound", surrogate_bound)
    check("countdown-generator-solvable", countdown_agreement)
    return 1 if failures else 0


def cmd_ablate(args) -> int:
    """Run the ablation grid described by a matrix file.

    The matrix JSON holds a base config plus a "grid" object mapping config
    keys to value lists; every combination becomes one run in its own
    subdirectory.
    """
    spec_obj = json.loads(Path(args.matrix).read_text())
    grid = spec_obj.pop("grid", {})
    base_out = Path(spec_obj.pop("out_dir", "runs/ablation"))
    keys = sorted(grid)
    combos = list(itertools.product(*(grid[k] for k in keys))) or [()]
    summaries = []
    for combo in combos:
        obj = dict(spec_obj)
        tag_parts = []
        for key, value in zip(keys, combo):
            obj[key] = value
            tag_parts.append(f"{key}={value}")
        tag = "_".join(tag_parts) or "base"
        obj["out_dir"] = str(base_out / tag)
        cfg = harness.RunConfig.from_dict(obj)
        _, summary = harness.run_experiment(cfg)
        summary["run"] = tag
        summaries.append(summary)
        print(f"done {tag}: final_reward={summary['final_reward']:.4f}")
    with open(base_out / "ablation_summaries.json", "w", encoding="utf-8") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rspo-lab")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training experiment")
    train.add_argument("--config", help="path to a JSON config")
    train.add_argument("--lambda", dest="lam", type=float, default=None)
    train.add_argument("--group-size", type=int, default=None)
    train.add_argument("--k-masks", type=int, default=None)
    train.add_argument("--steps", type=int, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--no-centering", action="store_true")
    train.add_argument("--no-reference", action="store_true")
    train.add_argument("--normalize-adv", action="store_true")
    train.add_argument("--task", default=None)
    train.add_argument("--out", default=None)
    train.set_defaults(func=cmd_train)

    audit = sub.add_parser("audit", help="run the oracle suite")
    audit.add_argument("--seed", type=int, default=0)
    audit.set_defaults(func=cmd_audit)

    ablate = sub.add_parser("ablate", help="run an ablation grid")
    ablate.add_argument("--matrix", required=True, help="path to a grid JSON")
    ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
