"""Brute-force and closed-form oracles.

Everything here is a separate code path from the estimators it checks:
exhaustive mask enumeration for the sequence score, dynamic programming for
the exact reverse-chain likelihood, softmax optima for KL-regularized
improvement, exact KL computations, and the scalar surrogate-error bound.
Oracles run inside the test suite and the audit command only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .sequences import Sequence

MAX_ENUM_LC = 3
MAX_ENUM_VOCAB = 4
MAX_ENUM_STEPS = 4


def _check_tiny(l_c: int, steps: int | None = None) -> None:
    if l_c > MAX_ENUM_LC + 1:  # elbo enumeration tolerates L_c=4, DP does not
        raise ValueError(f"completion length {l_c} exceeds enumeration limits")
    if steps is not None and steps > MAX_ENUM_STEPS:
        raise ValueError(f"step count {steps} exceeds enumeration limits")


def mask_set_weight(positions: tuple[int, ...], l_c: int) -> float:
    """Probability of one nonempty mask set under the lab mask law.

    t ~ U(0,1] with independent Bernoulli(t) positions, conditioned on a
    nonempty draw: integral of t^m (1-t)^(L-m) dt over the Beta normalizer,
    divided by P(nonempty) = L/(L+1).
    """
    m = len(positions)
    beta = math.factorial(m) * math.factorial(l_c - m) / math.factorial(l_c + 1)
    return beta * (l_c + 1) / l_c


def exact_elbo_expectation(params, seq: Sequence) -> float:
    """Analytic expectation of the Monte Carlo sequence score: closed-form
    time integrals summed over every nonempty mask set."""
    if not seq.is_clean():
        raise ValueError("expected a clean sequence")
    l_c = seq.completion_len
    _check_tiny(l_c)
    total = 0.0
    for m in range(1, l_c + 1):
        for positions in itertools.combinations(range(l_c), m):
            lp = params.logprobs(seq.with_masked(positions))
            idx = np.asarray(positions, dtype=np.int64)
            term = (l_c / m) * lp[idx, seq.completion[idx]].sum()
            total += mask_set_weight(positions, l_c) * term
    return float(total)


def exact_sequence_loglik(params, seq: Sequence, steps: int) -> float:
    """Log marginal probability that the T-step reverse chain, started from
    an all-masked completion, produces exactly this completion.

    Dynamic programming over still-masked position subsets on the uniform
    time grid t_k = k/T with the linear schedule.
    """
    if not seq.is_clean():
        raise ValueError("expected a clean sequence")
    l_c = seq.completion_len
    _check_tiny(l_c, steps)
    if steps < 1:
        raise ValueError("need at least one reverse step")

    full = (1 << l_c) - 1
    prob = {full: 1.0}
    for k in range(steps, 0, -1):
        t = k / steps
        s = (k - 1) / steps
        stay = s / t
        nxt: dict[int, float] = {}
        for state, p in prob.items():
            if p == 0.0:
                continue
            positions = [i for i in range(l_c) if state >> i & 1]
            if not positions:
                nxt[state] = nxt.get(state, 0.0) + p
                continue
            lp = params.logprobs(seq.with_masked(positions))
            fill = {i: math.exp(lp[i, seq.completion[i]]) for i in positions}
            # each masked position independently stays or fills with o^i
            for keep in _subsets(positions):
                keep_set = set(keep)
                weight = 1.0
                for i in positions:
                    if i in keep_set:
                        weight *= stay
                    else:
                        weight *= (1.0 - stay) * fill[i]
                child = 0
                for i in keep:
                    child |= 1 << i
                nxt[child] = nxt.get(child, 0.0) + p * weight
        prob = nxt
    p0 = prob.get(0, 0.0)
    return math.log(p0) if p0 > 0 else -math.inf


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def kl_regularized_optimum(pi_ref, rewards, beta: float):
    """Softmax optimum of KL-regularized improvement over an enumerable
    support, plus the ideal log-ratio per completion.

    Verifies that centering the log-ratios reproduces centered rewards
    scaled by 1/beta.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    pi_ref = np.asarray(pi_ref, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if pi_ref.shape != rewards.shape:
        raise ValueError("pi_ref and rewards must align")
    if np.any(pi_ref <= 0):
        raise ValueError("pi_ref must be strictly positive on its support")
    logits = np.log(pi_ref) + rewards / beta
    m = logits.max()
    log_z = m + math.log(np.exp(logits - m).sum())
    pi_star = np.exp(logits - log_z)
    delta_star = rewards / beta - log_z
    centered = delta_star - delta_star.mean()
    expected = (rewards - rewards.mean()) / beta
    if np.max(np.abs(centered - expected)) > 1e-12:
        raise AssertionError("centered log-ratio identity violated")
    return pi_star, delta_star


def kl_proxy(p, q):
    """Exact forward and reverse KL plus half the variance of the log-ratio
    under p; nearby distributions make all three nearly equal."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support")
    if np.any((p > 0) != (q > 0)):
        raise ValueError("supports differ")
    sup = p > 0
    ps, qs = p[sup], q[sup]
    log_ratio = np.log(qs) - np.log(ps)
    kl_pq = float(np.sum(ps * -log_ratio))
    kl_qp = float(np.sum(qs * log_ratio))
    mean = float(np.sum(ps * log_ratio))
    half_var = 0.5 * float(np.sum(ps * (log_ratio - mean) ** 2))
    return kl_pq, kl_qp, half_var


@dataclass(frozen=True)
class PerturbationBound:
    lhs_aw: float
    lhs_rspo: float
    rhs_aw: float
    rhs_rspo: float


def perturbation_bound_check(a_tilde, r_hat, xi, lam: float) -> PerturbationBound:
    """Scalar surrogate-error audit.

    Compares the advantage-weighted and feedback losses evaluated with ideal
    centered scores versus scores perturbed by per-sample errors bounded by
    eps, against the bounds 2*eps*||A|| and 2*eps*||A|| +
    lam*(4*eps*||R|| + 4*eps^2) in the batch norm.
    """
    a = np.asarray(a_tilde, dtype=np.float64)
    r = np.asarray(r_hat, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if not (a.shape == r.shape == xi.shape):
        raise ValueError("inputs must align")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    eps = float(np.max(np.abs(xi))) if xi.size else 0.0
    r = r - r.mean()  # ideal scores are centered by definition
    xi_hat = xi - xi.mean()
    d_hat = r + xi_hat

    def aw(x):
        return -float(np.mean(a * x))

    def rspo_forward(x):
        return -float(np.mean((a - lam * x) * x))

    def bnorm(x):
        return math.sqrt(float(np.mean(x**2)))

    lhs_aw = abs(aw(d_hat) - aw(r))
    lhs_rspo = abs(rspo_forward(d_hat) - rspo_forward(r))
    rhs_aw = 2.0 * eps * bnorm(a)
    rhs_rspo = rhs_aw + lam * (4.0 * eps * bnorm(r) + 4.0 * eps**2)
    slack = 1e-12 * max(1.0, rhs_rspo)
    if lhs_aw > rhs_aw + slack or lhs_rspo > rhs_rspo + slack:
        raise AssertionError(
            f"surrogate-error bound violated: aw {lhs_aw} vs {rhs_aw}, "
            f"feedback {lhs_rspo} vs {rhs_rspo}"
        )
    return PerturbationBound(lhs_aw, lhs_rspo, rhs_aw, rhs_rspo)


# ---------------------------------------------------------------------------
# task oracles
# ---------------------------------------------------------------------------


def countdown_solvable(numbers, target: int) -> bool:
    """Exhaustive search: can any expression over a nonempty sub-multiset of
    the numbers reach the target (exact division only)?"""
    target_f = Fraction(target)

    def reachable(values: tuple[Fraction, ...]) -> set[Fraction]:
        if len(values) == 1:
            return {values[0]}
        out: set[Fraction] = set()
        n = len(values)
        seen_splits = set()
        for r in range(1, n):
            for combo in itertools.combinations(range(n), r):
                left = tuple(sorted(values[i] for i in combo))
                right = tuple(sorted(values[i] for i in range(n) if i not in combo))
                key = (left, right)
                if key in seen_splits:
                    continue
                seen_splits.add(key)
                for x in reachable(left):
                    for y in reachable(right):
                        out.add(x + y)
                        out.add(x - y)
                        out.add(y - x)
                        out.add(x * y)
                        if y != 0 and (x % y) == 0:
                            out.add(x / y)
                        if x != 0 and (y % x) == 0:
                            out.add(y / x)
        return out

    nums = [Fraction(int(v)) for v in numbers]
    for r in range(1, len(nums) + 1):
        for combo in set(itertools.combinations(sorted(nums), r)):
            if target_f in reachable(tuple(combo)):
                return True
    return False


def all_sudoku4_grids() -> list[np.ndarray]:
    """Every complete 4x4 grid satisfying row/column/box constraints."""
    grids = []
    perms = list(itertools.permutations((1, 2, 3, 4)))
    for rows in itertools.product(perms, repeat=4):
        g = np.asarray(rows, dtype=np.int64)
        ok = True
        for c in range(4):
            if len(set(g[:, c])) != 4:
                ok = False
                break
        if not ok:
            continue
        for br in (0, 2):
            for bc in (0, 2):
                if len(set(g[br:br + 2, bc:bc + 2].ravel())) != 4:
                    ok = False
        if ok:
            grids.append(g)
    return grids


def sudoku4_solutions_by_enumeration(puzzle: np.ndarray) -> int:
    """Count solutions by scanning the full grid catalogue."""
    puzzle = np.asarray(puzzle, dtype=np.int64).reshape(4, 4)
    given = puzzle != 0
    return sum(
        1 for g in all_sudoku4_grids() if np.array_equal(g[given], puzzle[given])
    )
