"""Boolean objectives, exact conditional-mean oracles, and exact attack enumeration.

``ExactOracle`` computes ``a(prefix) = E[f(prefix, random continuation)]`` with
no sampling error. Two backends:

* ``table``: tabulates f over the full support (product size <= cap) and
  contracts trailing axes against the block weights.
* ``symmetric``: for i.i.d. blocks and an f invariant under permuting blocks,
  the state of a prefix is its multiset of values, so the number of states is
  polynomial in n. Used for majority over hundreds of bits and for poisoning
  objectives over m training examples.

``enumerate_attack`` walks the exact-oracle attack over every reachable
prefix and returns ``E[f(v)]``, ``E[T]`` and ``E[hamming(u, v)]`` exactly.
"""

from __future__ import annotations

import subprocess
import sys
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .space import DEFAULT_CAP, NotEnumerableError, ProductSpace, SupportCapExceeded

KEY_CACHE_SIZE = 512


class Oracle:
    """Black-box function on full tuples with a thread-safe call counter.

    ``fn`` maps a tuple to an output; ``batch`` (optional) maps a 2-D array of
    rows to a 1-D array of outputs and must agree with ``fn`` row by row.
    """

    def __init__(self, fn: Callable[[tuple], Any], *, batch=None, name: str = "", symmetric=False):
        self.fn = fn
        self.batch = batch
        self.name = name or getattr(fn, "__name__", "oracle")
        self._symmetric = symmetric
        self._calls = 0
        self._lock = threading.Lock()

    def __repr__(self):
        return f"{type(self).__name__}({self.name})"

    @property
    def call_count(self) -> int:
        return self._calls

    def add_calls(self, k: int) -> None:
        with self._lock:
            self._calls += int(k)

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def is_symmetric(self, n: int) -> bool:
        """True when the output is invariant under permuting the n blocks."""
        s = self._symmetric
        return bool(s(n)) if callable(s) else bool(s)

    def _check(self, out):
        return out

    def eval(self, x: Sequence) -> Any:
        self.add_calls(1)
        return self._check(self.fn(tuple(x)))

    __call__ = eval

    def eval_batch(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows) if not isinstance(rows, np.ndarray) else rows
        self.add_calls(len(rows))
        if self.batch is not None:
            out = np.asarray(self.batch(rows))
        else:
            out = np.array([self.fn(tuple(r)) for r in rows])
        return self._check_batch(out)

    def _check_batch(self, out):
        return out


class Objective(Oracle):
    """A 0/1-valued oracle over full n-tuples."""

    def _check(self, out):
        if out not in (0, 1):
            raise ValueError(f"objective {self.name} returned {out!r}, expected 0 or 1")
        return int(out)

    def _check_batch(self, out):
        out = out.astype(np.int64, copy=False)
        if out.size and (out.min() < 0 or out.max() > 1):
            raise ValueError(f"objective {self.name} returned values outside {{0, 1}}")
        return out


# --- built-in objectives over 0/1 (or integer, read as truthy) coordinates ---


def _first(k):
    return slice(None) if k is None else slice(0, k)


def _sym_if_all(k):
    return lambda n: k is None or k == n


def and_(k: int | None = None) -> Objective:
    sl = _first(k)
    return Objective(
        lambda x: int(all(x[sl])),
        batch=lambda r: np.all(r[:, sl] != 0, axis=1),
        name=f"and({'' if k is None else k})",
        symmetric=_sym_if_all(k),
    )


def or_(k: int | None = None) -> Objective:
    sl = _first(k)
    return Objective(
        lambda x: int(any(x[sl])),
        batch=lambda r: np.any(r[:, sl] != 0, axis=1),
        name=f"or({'' if k is None else k})",
        symmetric=_sym_if_all(k),
    )


def xor(k: int | None = None) -> Objective:
    sl = _first(k)
    return Objective(
        lambda x: sum(1 for v in x[sl] if v) % 2,
        batch=lambda r: np.count_nonzero(r[:, sl], axis=1) % 2,
        name=f"xor({'' if k is None else k})",
        symmetric=_sym_if_all(k),
    )


def majority() -> Objective:
    """1 iff strictly more than half of the coordinates are nonzero."""
    return Objective(
        lambda x: int(2 * sum(1 for v in x if v) > len(x)),
        batch=lambda r: 2 * np.count_nonzero(r, axis=1) > r.shape[1],
        name="majority",
        symmetric=True,
    )


def dictator(i: int) -> Objective:
    """1 iff coordinate i (1-based) is nonzero."""
    if i < 1:
        raise ValueError("dictator index is 1-based")
    j = i - 1
    return Objective(
        lambda x: int(bool(x[j])),
        batch=lambda r: r[:, j] != 0,
        name=f"dictator({i})",
        symmetric=lambda n: n == 1,
    )


def threshold(weights: Sequence[float], t: float) -> Objective:
    """1 iff ``sum_j w_j x_j >= t`` over the first ``len(weights)`` coordinates."""
    w = np.asarray(weights, dtype=float)
    k = len(w)

    def fn(x):
        return int(float(np.dot(w, np.asarray(x[:k], dtype=float))) >= t)

    return Objective(
        fn,
        batch=lambda r: r[:, :k].astype(float) @ w >= t,
        name=f"threshold({list(weights)}, {t})",
        symmetric=lambda n: n == k and len(set(w.tolist())) <= 1,
    )


def constant(b: int) -> Objective:
    b = int(b)
    return Objective(
        lambda x: b,
        batch=lambda r: np.full(len(r), b),
        name=f"constant({b})",
        symmetric=True,
    )


class _LineProcess:
    """Persistent subprocess answering one output line per input line."""

    def __init__(self, cmd: str | Sequence[str]):
        self.cmd = cmd
        self._proc = None
        self._lock = threading.Lock()

    def query(self, line: str) -> str:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._proc = subprocess.Popen(
                    self.cmd,
                    shell=isinstance(self.cmd, str),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            out = self._proc.stdout.readline()
            if not out:
                raise RuntimeError(f"external oracle {self.cmd!r} closed its output")
            return out.strip()

    def close(self):
        with self._lock:
            if self._proc is not None:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
                self._proc = None


def parse_token(tok: str) -> Any:
    try:
        return int(tok)
    except ValueError:
        return tok


def format_tuple(x: Sequence) -> str:
    return " ".join(str(v) for v in x)


def external(cmd: str | Sequence[str], *, boolean: bool = True, symmetric: bool = False) -> Oracle:
    """Oracle backed by a subprocess: one tuple per stdin line, one token per stdout line.

    With ``boolean=True`` the token must be ``0`` or ``1`` and an ``Objective``
    is returned; otherwise tokens are labels (ints when they parse as ints).
    """
    proc = _LineProcess(cmd)

    def fn(x):
        return parse_token(proc.query(format_tuple(x)))

    cls = Objective if boolean else Oracle
    oracle = cls(fn, name=f"external({cmd!r})", symmetric=symmetric)
    oracle.close = proc.close
    return oracle


# --- exact oracle ---


@contextmanager
def _recursion_room(depth: int):
    old = sys.getrecursionlimit()
    if depth > old:
        sys.setrecursionlimit(depth)
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


class ExactOracle:
    """Exact conditional means ``a``, gains ``g``, and max gains ``g*`` of an objective."""

    def __init__(
        self,
        space: ProductSpace,
        objective: Objective,
        *,
        backend: str = "auto",
        cap: int = DEFAULT_CAP,
    ):
        if not space.enumerable:
            raise NotEnumerableError("exact oracles need explicit finite supports")
        self.space = space
        self.objective = objective
        n = space.n
        if backend == "auto":
            if space.iid and objective.is_symmetric(n):
                backend = "symmetric"
            elif space.support_size() <= cap:
                backend = "table"
            else:
                raise SupportCapExceeded(
                    f"support size {space.support_size()} exceeds cap {cap} and the "
                    "objective is not declared symmetric over i.i.d. blocks"
                )
        self.backend = backend
        self._memo: dict = {}
        self._keys: dict = {}
        self._lock = threading.Lock()
        if backend == "table":
            self._build_table(cap)
        elif backend == "symmetric":
            if not space.iid:
                raise ValueError("symmetric backend needs i.i.d. blocks")
            b = space.blocks[0]
            self._s = b.size
            self._p = b.weights
            self._leaf: dict = {}
        else:
            raise ValueError(f"unknown backend {backend!r}")

    # table backend
    def _build_table(self, cap):
        space = self.space
        if space.support_size() > cap:
            raise SupportCapExceeded(f"support size {space.support_size()} exceeds cap {cap}")
        rows = space.support_array(cap)
        shape = tuple(b.size for b in space.blocks)
        if space.n == 0:
            table = np.array(float(self.objective.eval(())))
        else:
            table = self.objective.eval_batch(rows).astype(float).reshape(shape)
        levels = [None] * (space.n + 1)
        levels[space.n] = table
        for i in range(space.n - 1, -1, -1):
            w = np.asarray(space.blocks[i].weights)
            levels[i] = np.tensordot(levels[i + 1], w, axes=([i], [0]))
        self._levels = levels

    # symmetric backend
    def _leaf_value(self, counts):
        v = self._leaf.get(counts)
        if v is None:
            vals = self.space.blocks[0].values
            rep = tuple(vals[j] for j, c in enumerate(counts) for _ in range(c))
            v = float(self.objective.eval(rep))
            self._leaf[counts] = v
        return v

    def _sym_avg(self, level, counts):
        memo = self._memo
        key = (level, counts)
        hit = memo.get(key)
        if hit is not None:
            return hit
        n, s, p = self.space.n, self._s, self._p
        stack = [key]
        while stack:
            lv, c = stack[-1]
            if (lv, c) in memo:
                stack.pop()
                continue
            if lv == n:
                memo[(lv, c)] = self._leaf_value(c)
                stack.pop()
                continue
            kids = [(lv + 1, c[:j] + (c[j] + 1,) + c[j + 1 :]) for j in range(s)]
            missing = [k for j, k in enumerate(kids) if p[j] > 0 and k not in memo]
            if missing:
                stack.extend(missing)
                continue
            memo[(lv, c)] = sum(p[j] * memo[k] for j, k in enumerate(kids) if p[j] > 0)
            stack.pop()
        return memo[key]

    # state keys shared by both backends
    def root_key(self):
        return () if self.backend == "table" else (0,) * self._s

    def child_key(self, key, j):
        if self.backend == "table":
            return key + (j,)
        return key[:j] + (key[j] + 1,) + key[j + 1 :]

    def key_of(self, prefix: Sequence):
        prefix = tuple(prefix)
        cache = self._keys
        key = cache.get(prefix)
        if key is not None:
            return key
        parent = cache.get(prefix[:-1]) if prefix else None
        if parent is not None:
            key = self.child_key(parent, self.space.blocks[len(prefix) - 1].index_of(prefix[-1]))
        else:
            key = self.root_key()
            for i, v in enumerate(prefix):
                key = self.child_key(key, self.space.blocks[i].index_of(v))
        # attack runs query prefix, prefix+v, then extend by one block
        with self._lock:
            cache[prefix] = key
            if len(cache) > KEY_CACHE_SIZE:
                del cache[next(iter(cache))]
        return key

    def avg_key(self, level, key) -> float:
        if self.backend == "table":
            return float(self._levels[level][key])
        return self._sym_avg(level, key)

    def child_avgs(self, level, key) -> np.ndarray:
        """Conditional means after appending each support value of block ``level+1``."""
        size = self.space.blocks[level].size
        return np.array([self.avg_key(level + 1, self.child_key(key, j)) for j in range(size)])

    # public API
    def avg(self, prefix: Sequence = ()) -> float:
        if len(prefix) > self.space.n:
            raise ValueError("prefix longer than the space")
        return self.avg_key(len(prefix), self.key_of(prefix))

    @property
    def mu(self) -> float:
        return self.avg(())

    def gain(self, prefix: Sequence) -> float:
        if not prefix:
            raise ValueError("gain needs a prefix of length >= 1")
        return self.avg(prefix) - self.avg(prefix[:-1])

    def max_gain(self, prefix: Sequence = ()) -> tuple[float, Any]:
        """Exact ``(max_v g(prefix, v), lowest-index argmax v)``."""
        i = len(prefix)
        if i >= self.space.n:
            raise ValueError("no block left to choose")
        key = self.key_of(prefix)
        gains = self.child_avgs(i, key) - self.avg_key(i, key)
        j = int(np.argmax(gains))
        return float(gains[j]), self.space.blocks[i].values[j]


def exact_avg(oracle: ExactOracle, prefix: Sequence = ()) -> float:
    return oracle.avg(prefix)


def exact_gain(oracle: ExactOracle, prefix: Sequence) -> float:
    return oracle.gain(prefix)


def exact_max_gain(oracle: ExactOracle, prefix: Sequence = ()) -> tuple[float, Any]:
    return oracle.max_gain(prefix)


@dataclass(frozen=True)
class ExactAttackResult:
    mu: float
    bias: float
    expected_T: float
    expected_hamming: float
    # min over reachable prefixes of E_u[g(prefix, u) * C3(prefix, u)]
    min_drift: float
    reachable: int


def enumerate_attack(
    space: ProductSpace,
    objective: Objective,
    tau: float,
    *,
    oracle: ExactOracle | None = None,
) -> ExactAttackResult:
    """Exact expectations of the exact-oracle tampering attack with threshold ``tau``.

    At prefix v (length i-1), with g_j the exact gain of support value j and
    w the lowest-index argmax: if max g >= tau every u_i is replaced by w
    (proactive); otherwise u_i is replaced by w when g(u_i) <= -tau
    (reactive) and kept when not.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    ex = oracle or ExactOracle(space, objective)
    n = space.n
    memo: dict = {}
    drift = [np.inf]

    def visit(level, key):
        hit = memo.get((level, key))
        if hit is not None:
            return hit
        here = ex.avg_key(level, key)
        if level == n:
            memo[(level, key)] = out = (here, 0.0, 0.0)
            return out
        p = space.blocks[level].weights
        gains = ex.child_avgs(level, key) - here
        w = int(np.argmax(gains))
        ef = et = eh = 0.0
        if gains[w] >= tau:
            f_w, t_w, h_w = visit(level + 1, ex.child_key(key, w))
            ef, et, eh = f_w, 1.0 + t_w, (1.0 - p[w]) + h_w
            drift[0] = min(drift[0], 0.0)
        else:
            d = 0.0
            for j, pj in enumerate(p):
                if pj == 0:
                    continue
                if gains[j] <= -tau:
                    f_c, t_c, h_c = visit(level + 1, ex.child_key(key, w))
                    ef += pj * f_c
                    et += pj * (1.0 + t_c)
                    eh += pj * ((j != w) + h_c)
                else:
                    f_c, t_c, h_c = visit(level + 1, ex.child_key(key, j))
                    ef += pj * f_c
                    et += pj * t_c
                    eh += pj * h_c
                    d += pj * gains[j]
            drift[0] = min(drift[0], d)
        memo[(level, key)] = out = (ef, et, eh)
        return out

    with _recursion_room(4 * n + 1000):
        bias, t, h = visit(0, ex.root_key())
    return ExactAttackResult(
        mu=ex.mu,
        bias=bias,
        expected_T=t,
        expected_hamming=h,
        min_drift=float(drift[0]) if n else 0.0,
        reachable=len(memo),
    )
