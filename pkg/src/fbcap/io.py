"""Canonical JSON and CSV serialization of channels, policies and solutions.

JSON is canonical: keys sorted, no whitespace, floats written with 17
significant digits so every double round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .kernels import ChannelKernel, CostFunction, FiniteAlphabet, InitialCondition, InputPolicy


def _encode(obj) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot encode non-finite float {x!r} in canonical JSON")
        s = format(x, ".17g")
        # keep floats recognizable as floats after parsing
        return s if any(c in s for c in ".eEn") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__} in canonical JSON")


def canonical_dumps(obj) -> str:
    return _encode(obj) + "\n"


# --------------------------------------------------------------------------
# Channel specs
# --------------------------------------------------------------------------


@dataclass
class ChannelSpec:
    """A channel with optional cost, candidate policy and initial distribution."""

    channel: ChannelKernel
    cost: CostFunction | None = None
    policy: InputPolicy | None = None
    mu: InitialCondition | None = None

    @property
    def N(self) -> int:
        return self.cost.N if self.cost is not None else 0

    @property
    def J(self) -> int:
        if self.policy is not None:
            return self.policy.J
        return max(self.channel.M, self.N)

    def to_dict(self) -> dict:
        q = self.channel
        return {
            "n": q.n, "M": q.M, "J": self.J, "N": self.N,
            "input_alphabet": list(q.input_alphabet.symbols),
            "output_alphabet": list(q.output_alphabet.symbols),
            "q": q.q, "pi": None if self.policy is None else self.policy.pi,
            "gamma": None if self.cost is None else self.cost.gamma,
            "mu": None if self.mu is None else self.mu.mu,
        }

    def dumps(self) -> str:
        return canonical_dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc) -> "ChannelSpec":
        if not isinstance(doc, dict):
            raise SchemaError("document must be a JSON object")
        for key in ("n", "M", "q"):
            if key not in doc:
                raise SchemaError(f"missing required key '{key}'")
        n = _int(doc, "n", 0)
        M = _int(doc, "M", 0)
        N = _int(doc, "N", 0) if doc.get("N") is not None else 0
        J = _int(doc, "J", 0) if doc.get("J") is not None else max(M, N)
        q = _array(doc["q"], "$.q", 4)
        X, Y = q.shape[2], q.shape[3]
        ia = _alphabet(doc.get("input_alphabet"), X, "$.input_alphabet")
        oa = _alphabet(doc.get("output_alphabet"), Y, "$.output_alphabet")
        if q.shape[0] != n + 1:
            raise SchemaError(f"expected {n + 1} stages, found {q.shape[0]}", "$.q")
        if q.shape[1] != Y**M:
            raise SchemaError(f"expected {Y ** M} memory words for M={M}, found {q.shape[1]}", "$.q")
        channel = _wrap("$.q", lambda: ChannelKernel(q, M, ia, oa))
        cost = policy = mu = None
        if doc.get("gamma") is not None:
            g = _array(doc["gamma"], "$.gamma", 3)
            cost = _wrap("$.gamma", lambda: CostFunction(g, N, Y))
        if doc.get("pi") is not None:
            p = _array(doc["pi"], "$.pi", 3)
            policy = _wrap("$.pi", lambda: InputPolicy(p, J, Y))
        if doc.get("mu") is not None:
            m = _array(doc["mu"], "$.mu", 1)
            mu = _wrap("$.mu", lambda: InitialCondition(m, J, Y))
        return cls(channel, cost, policy, mu)

    @classmethod
    def loads(cls, text: str) -> "ChannelSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ChannelSpec":
        return cls.loads(Path(path).read_text())


def _int(doc, key, lo):
    v = doc[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise SchemaError(f"expected an integer >= {lo}, got {v!r}", f"$.{key}")
    return v


def _alphabet(labels, size, path):
    if labels is None:
        return FiniteAlphabet.of_size(size)
    if not isinstance(labels, list) or len(labels) != size:
        raise SchemaError(f"expected a list of {size} labels", path)
    try:
        return FiniteAlphabet(tuple(labels))
    except Exception as exc:
        raise SchemaError(str(exc), path) from None


def _array(value, path, ndim):
    def walk(v, p, depth):
        if depth == ndim:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"expected a number, got {v!r}", p)
            return
        if not isinstance(v, list):
            raise SchemaError(f"expected a nested list of depth {ndim - depth}", p)
        for i, item in enumerate(v):
            walk(item, f"{p}[{i}]", depth + 1)

    walk(value, path, 0)
    try:
        return np.array(value, dtype=float)
    except ValueError:
        raise SchemaError("ragged nested list", path) from None


def _wrap(path, build):
    try:
        return build()
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(str(exc), path) from None


# --------------------------------------------------------------------------
# Solutions
# --------------------------------------------------------------------------


def solution_to_dict(sol, channel: ChannelKernel, cost: CostFunction | None = None) -> dict:
    """Spec fields plus values, ftfi, multiplier and cost for a DP or closed-form solution."""
    out = ChannelSpec(channel, cost, sol.policy, sol.mu).to_dict()
    out.update({"C": sol.values, "ftfi": sol.ftfi_value, "per_unit_time": sol.per_unit,
                "s": sol.s, "cost": sol.achieved_cost})
    diag = getattr(sol, "diagnostics", None)
    if diag is not None:
        out["diagnostics"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                              for k, v in diag.items()}
    deltas = getattr(sol, "deltas", None)
    if deltas is not None:
        out["deltas"] = deltas
        out["delta_orientation"] = sol.delta_orientation
    steady = getattr(sol, "steady", None)
    if steady is not None:
        out["steady"] = steady.to_dict()
    return out


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def trajectory_csv(tensor) -> str:
    """Rows ``t, w, x_or_y, prob`` for a policy or output-kernel tensor ``[t][w][symbol]``."""
    a = np.asarray(tensor)
    rows = ((t, w, k, float(a[t, w, k])) for t in range(a.shape[0])
            for w in range(a.shape[1]) for k in range(a.shape[2]))
    return _rows_to_csv(["t", "w", "x_or_y", "prob"], rows)


def values_csv(values) -> str:
    """Rows ``t, w, value`` for a value-function table ``[t][w]``."""
    v = np.asarray(values)
    rows = ((t, w, float(v[t, w])) for t in range(v.shape[0]) for w in range(v.shape[1]))
    return _rows_to_csv(["t", "w", "value"], rows)


def deltas_csv(deltas) -> str:
    d = np.asarray(deltas)
    if d.ndim == 1:
        return _rows_to_csv(["t", "delta"], ((t, float(x)) for t, x in enumerate(d)))
    header = ["t"] + [f"delta{i + 1}" for i in range(d.shape[1])]
    return _rows_to_csv(header, ([t] + [float(x) for x in row] for t, row in enumerate(d)))
