"""Verifiable toy environments with deterministic rewards.

Three task families share one character-level vocabulary:

* countdown: reach a target value from a small number multiset with + - * /
  (division must be exact);
* sudoku4: complete a 4x4 grid with unique solution, row/column/2x2-box
  constraints;
* arith: modular addition, graded by the first integer in the completion.

Rewards are total functions over arbitrary strings; malformed completions
score zero rather than raising.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .sequences import Sequence, Vocab

LAB_CHARS = "0123456789+-*/()=? \n"

#: Printed in place of the mask token when decoding model output; not a
#: vocab character, so encode/decode round trips are unaffected.
MASK_CHAR = "~"


def char_vocab() -> Vocab:
    """The lab alphabet: digits, operators, separators, and a trailing mask."""
    return Vocab(tokens=tuple(LAB_CHARS) + ("<mask>",), mask_id=len(LAB_CHARS))


def encode_text(text: str, vocab: Vocab) -> np.ndarray:
    out = np.empty(len(text), dtype=np.int64)
    for i, ch in enumerate(text):
        idx = vocab.index(ch)
        if idx == vocab.mask_id:
            raise KeyError("mask token cannot appear in clean text")
        out[i] = idx
    return out


def decode_tokens(tokens, vocab: Vocab) -> str:
    chars = []
    for tok in np.asarray(tokens, dtype=np.int64):
        if tok == vocab.mask_id:
            chars.append(MASK_CHAR)
        elif 0 <= tok < vocab.size:
            chars.append(vocab.tokens[tok])
        else:
            chars.append(MASK_CHAR)
    return "".join(chars)


@dataclass
class RewardSpec:
    mode: str = "binary"  # "binary" | "partial"

    def __post_init__(self):
        if self.mode not in ("binary", "partial"):
            raise ValueError(f"unknown reward mode {self.mode!r}")


@dataclass
class TaskInstance:
    kind: str
    prompt_text: str
    payload: dict
    split: str | None = None


# ---------------------------------------------------------------------------
# countdown
# ---------------------------------------------------------------------------


def gen_countdown(rng: np.random.Generator, num_count: int = 3,
                  value_range: tuple[int, int] = (1, 9)) -> TaskInstance:
    """Sample numbers and an achievable target by evaluating a random
    expression over all of them."""
    if not 3 <= num_count <= 4:
        raise ValueError("num_count must be 3 or 4")
    lo, hi = value_range
    while True:
        numbers = [int(v) for v in rng.integers(lo, hi + 1, size=num_count)]
        target = _random_expression_value(list(numbers), rng)
        if target is not None and 1 <= target <= 99:
            prompt = " ".join(str(n) for n in numbers) + "=" + str(target) + "?"
            return TaskInstance(
                kind="countdown",
                prompt_text=prompt,
                payload={"numbers": sorted(numbers), "target": target},
            )


def _random_expression_value(values: list[int], rng: np.random.Generator) -> int | None:
    """Combine all values pairwise with random ops; None if a draw goes bad."""
    vals = [Fraction(v) for v in values]
    while len(vals) > 1:
        i, j = rng.choice(len(vals), size=2, replace=False)
        a, b = vals[int(i)], vals[int(j)]
        op = int(rng.integers(4))
        if op == 0:
            c = a + b
        elif op == 1:
            c = a - b
        elif op == 2:
            c = a * b
        else:
            if b == 0 or (a % b) != 0:
                return None
            c = a / b
        vals = [v for k, v in enumerate(vals) if k not in (int(i), int(j))] + [c]
    v = vals[0]
    return int(v) if v.denominator == 1 else None


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)


def _eval_countdown_expr(text: str) -> tuple[int, list[int]] | None:
    """Evaluate an integer +-*/ expression with exact division.

    Returns (value, leaf numbers) or None if the text is not a pure
    arithmetic expression over integer literals.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except (SyntaxError, ValueError, MemoryError, RecursionError):
        return None
    leaves: list[int] = []

    def walk(node) -> int | None:
        if isinstance(node, ast.Constant) and isinstance(node.value, int) \
                and not isinstance(node.value, bool):
            leaves.append(node.value)
            return node.value
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            a = walk(node.left)
            b = walk(node.right)
            if a is None or b is None:
                return None
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if b == 0 or a % b != 0:
                return None  # only exact division counts
            return a // b
        return None

    value = walk(tree.body)
    if value is None:
        return None
    return value, leaves


def reward_countdown(instance: TaskInstance, completion_text: str,
                     spec: RewardSpec = RewardSpec()) -> float:
    """1 iff the completion is a valid expression over the provided numbers
    (each used at most as often as given) that evaluates to the target."""
    result = _eval_countdown_expr(completion_text)
    if result is None:
        return 0.0
    value, leaves = result
    available = list(instance.payload["numbers"])
    for leaf in leaves:
        if leaf in available:
            available.remove(leaf)
        else:
            return 0.0
    if value != instance.payload["target"]:
        return 0.0
    return 1.0


# ---------------------------------------------------------------------------
# 4x4 sudoku
# ---------------------------------------------------------------------------


def _sudoku4_candidates(grid: np.ndarray, r: int, c: int) -> list[int]:
    used = set(grid[r]) | set(grid[:, c])
    br, bc = 2 * (r // 2), 2 * (c // 2)
    used |= set(grid[br:br + 2, bc:bc + 2].ravel())
    return [d for d in (1, 2, 3, 4) if d not in used]


def _fill_sudoku4(grid: np.ndarray, rng: np.random.Generator) -> bool:
    empties = np.argwhere(grid == 0)
    if len(empties) == 0:
        return True
    r, c = empties[0]
    cands = _sudoku4_candidates(grid, r, c)
    rng.shuffle(cands)
    for d in cands:
        grid[r, c] = d
        if _fill_sudoku4(grid, rng):
            return True
        grid[r, c] = 0
    return False


def count_sudoku4_solutions(grid: np.ndarray, limit: int = 2) -> int:
    """Backtracking solution counter with early stop at ``limit``."""
    grid = np.array(grid, dtype=np.int64)

    def solve(g: np.ndarray) -> int:
        empties = np.argwhere(g == 0)
        if len(empties) == 0:
            return 1
        r, c = empties[0]
        total = 0
        for d in _sudoku4_candidates(g, r, c):
            g[r, c] = d
            total += solve(g)
            g[r, c] = 0
            if total >= limit:
                break
        return total

    return solve(grid)


def valid_sudoku4(grid: np.ndarray) -> bool:
    """Each digit once per row, column, and 2x2 box."""
    grid = np.asarray(grid)
    if grid.shape != (4, 4) or not np.isin(grid, (1, 2, 3, 4)).all():
        return False
    want = {1, 2, 3, 4}
    for i in range(4):
        if set(grid[i]) != want or set(grid[:, i]) != want:
            return False
    for br in (0, 2):
        for bc in (0, 2):
            if set(grid[br:br + 2, bc:bc + 2].ravel()) != want:
                return False
    return True


def gen_sudoku4(rng: np.random.Generator, holes: int = 6) -> TaskInstance:
    """Generate a uniquely solvable 4x4 puzzle with the given hole count."""
    if not 4 <= holes <= 8:
        raise ValueError("holes must be in 4..8")
    while True:
        solution = np.zeros((4, 4), dtype=np.int64)
        _fill_sudoku4(solution, rng)
        puzzle = solution.copy()
        order = rng.permutation(16)
        removed = 0
        for cell in order:
            if removed == holes:
                break
            r, c = divmod(int(cell), 4)
            keep = puzzle[r, c]
            puzzle[r, c] = 0
            if count_sudoku4_solutions(puzzle) == 1:
                removed += 1
            else:
                puzzle[r, c] = keep
        if removed == holes:
            flat = "".join(str(d) for d in puzzle.ravel())
            return TaskInstance(
                kind="sudoku4",
                prompt_text=flat + "=",
                payload={
                    "puzzle": puzzle.ravel().tolist(),
                    "solution": solution.ravel().tolist(),
                },
            )


def split_by_solution(instances: list[TaskInstance],
                      test_fraction: float = 0.5) -> tuple[list[TaskInstance], list[TaskInstance]]:
    """Partition puzzles so that all puzzles sharing a solution grid fall on
    the same side and no solution appears in both splits."""
    solutions = sorted({tuple(inst.payload["solution"]) for inst in instances})
    n_test = int(round(test_fraction * len(solutions)))
    test_solutions = set(solutions[len(solutions) - n_test:])
    train, test = [], []
    for inst in instances:
        if tuple(inst.payload["solution"]) in test_solutions:
            inst.split = "test"
            test.append(inst)
        else:
            inst.split = "train"
            train.append(inst)
    return train, test


def _parse_sudoku4_grid(completion_text: str) -> np.ndarray | None:
    digits = [int(ch) for ch in completion_text if ch.isdigit()]
    if len(digits) < 16:
        return None
    return np.asarray(digits[:16], dtype=np.int64).reshape(4, 4)


def reward_sudoku4(instance: TaskInstance, completion_text: str,
                   spec: RewardSpec = RewardSpec()) -> float:
    """Binary: 1 iff the parsed grid is complete, valid, and keeps the
    givens.  Partial: fraction of originally empty cells that match the
    unique solution."""
    puzzle = np.asarray(instance.payload["puzzle"], dtype=np.int64).reshape(4, 4)
    grid = _parse_sudoku4_grid(completion_text)
    if grid is None:
        return 0.0
    if spec.mode == "binary":
        given = puzzle != 0
        if not valid_sudoku4(grid):
            return 0.0
        if not np.array_equal(grid[given], puzzle[given]):
            return 0.0
        return 1.0
    solution = np.asarray(instance.payload["solution"], dtype=np.int64).reshape(4, 4)
    holes = puzzle == 0
    return float(np.sum(grid[holes] == solution[holes])) / float(np.sum(holes))


# ---------------------------------------------------------------------------
# modular arithmetic
# ---------------------------------------------------------------------------


def gen_arith(rng: np.random.Generator, modulus: int = 10) -> TaskInstance:
    if not 2 <= modulus <= 100:
        raise ValueError("modulus must be in 2..100")
    a = int(rng.integers(modulus))
    b = int(rng.integers(modulus))
    return TaskInstance(
        kind="arith",
        prompt_text=f"{a}+{b}=?",
        payload={"a": a, "b": b, "modulus": modulus,
                 "answer": (a + b) % modulus},
    )


_FIRST_INT = re.compile(r"\d+")


def reward_arith(instance: TaskInstance, completion_text: str) -> float:
    """1 iff the first integer in the completion equals the answer."""
    m = _FIRST_INT.search(completion_text)
    if m is None:
        return 0.0
    return 1.0 if int(m.group()) == instance.payload["answer"] else 0.0


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

GENERATORS = {
    "countdown": gen_countdown,
    "sudoku4": gen_sudoku4,
    "arith": gen_arith,
}


def reward(instance: TaskInstance, completion_text: str,
           spec: RewardSpec = RewardSpec()) -> float:
    if instance.kind == "countdown":
        return reward_countdown(instance, completion_text, spec)
    if instance.kind == "sudoku4":
        return reward_sudoku4(instance, completion_text, spec)
    if instance.kind == "arith":
        return reward_arith(instance, completion_text)
    raise ValueError(f"unknown task kind {instance.kind!r}")


def clean_sequence(instance: TaskInstance, completion_text: str, vocab: Vocab) -> Sequence:
    return Sequence(
        prompt=encode_text(instance.prompt_text, vocab),
        completion=encode_text(completion_text, vocab),
    )


def save_instances(path, instances: list[TaskInstance]) -> None:
    """One instance per line: kind, prompt, payload, split."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "kind": inst.kind,
                "prompt": inst.prompt_text,
                "payload": inst.payload,
                "split": inst.split,
            }, sort_keys=True) + "\n")


def load_instances(path) -> list[TaskInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(TaskInstance(
                kind=obj["kind"],
                prompt_text=obj["prompt"],
                payload=obj["payload"],
                split=obj.get("split"),
            ))
    return out
