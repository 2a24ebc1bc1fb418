"""Tape-based reverse-mode differentiation and the finite-difference checker.

A :class:`Tape` records primitive applications in execution order (which is
automatically a topological order), each node carrying the forward value,
a vector-Jacobian closure, and a recompute closure so the whole tape can be
replayed.  ``grad_check`` pits the tape's analytic gradients against central
finite differences of the plain (untaped) forward path, the two routes
sharing no backward code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import Tensor

__all__ = ["Tape", "Var", "backward", "grad_check", "GradReport", "ParamGradCheck"]


class _Node:
    __slots__ = ("op", "inputs", "value", "vjp", "recompute", "name")

    def __init__(self, op, inputs, value, vjp, recompute, name=None):
        self.op = op
        self.inputs = inputs          # indices of producer nodes
        self.value = value            # forward Tensor
        self.vjp = vjp                # cotangent ndarray -> tuple of input cotangents
        self.recompute = recompute    # list of input ndarrays -> output ndarray
        self.name = name              # set for named leaves only


class Var:
    """Handle to one tape node; behaves shape-wise like the Tensor it holds."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Tensor:
        return self.tape._nodes[self.index].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def dtype(self) -> np.dtype:
        return self.value.dtype

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        node = self.tape._nodes[self.index]
        return f"Var(#{self.index} {node.op}, shape={self.value.shape})"


class Tape:
    """Recorded computation graph over the primitive op set."""

    def __init__(self):
        self._nodes: List[_Node] = []
        self._leaf_names: Dict[str, int] = {}
        self._outputs: List[int] = []

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def outputs(self) -> tuple:
        return tuple(self._outputs)

    def leaf(self, value: Tensor, name: Optional[str] = None) -> Var:
        """Register an input/parameter; named leaves appear in backward's result."""
        if not isinstance(value, Tensor):
            raise TypeError(f"leaf expects a Tensor, got {type(value).__name__}")
        if name is not None:
            if name in self._leaf_names:
                raise ValueError(f"duplicate leaf name {name!r}")
            self._leaf_names[name] = len(self._nodes)
        node = _Node("leaf", (), value, None, lambda vals, v=value: v.data, name)
        self._nodes.append(node)
        return Var(self, len(self._nodes) - 1)

    def constant(self, value: Tensor) -> Var:
        """An unnamed leaf; gradients are computed through but not reported."""
        return self.leaf(value, None)

    def record(self, op: str, inputs: Sequence[Var], value: Tensor, vjp, recompute) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise ValueError("all inputs of a recorded op must live on the same tape")
        node = _Node(op, tuple(v.index for v in inputs), value, vjp, recompute)
        self._nodes.append(node)
        return Var(self, len(self._nodes) - 1)

    def mark_output(self, var: Var) -> None:
        if var.tape is not self:
            raise ValueError("output var belongs to a different tape")
        self._outputs.append(var.index)

    def replay(self) -> List[Tensor]:
        """Recompute every node from the leaves; returns the marked outputs."""
        values: List[Optional[np.ndarray]] = [None] * len(self._nodes)
        for i, node in enumerate(self._nodes):
            values[i] = node.recompute([values[j] for j in node.inputs])
        return [Tensor(np.asarray(values[i]).copy()) for i in self._outputs]

    def leaf_name_index(self) -> Dict[str, int]:
        return dict(self._leaf_names)


def backward(tape: Tape, cotangent: Tensor) -> Dict[str, Tensor]:
    """Reverse sweep; returns gradients for every named leaf.

    The tape must have exactly one marked output whose shape matches the
    cotangent.  Leaves that do not influence the output get zero gradients.
    """
    if not tape._outputs:
        raise ValueError("tape has no marked outputs")
    if len(tape._outputs) != 1:
        raise ValueError("backward expects exactly one marked output")
    out_idx = tape._outputs[0]
    out_val = tape._nodes[out_idx].value
    if cotangent.shape != out_val.shape:
        raise ValueError(
            f"cotangent shape {cotangent.shape} does not match output shape {out_val.shape}"
        )
    if cotangent.dtype != out_val.dtype:
        raise ValueError("cotangent dtype does not match output dtype")

    grads: List[Optional[np.ndarray]] = [None] * len(tape._nodes)
    grads[out_idx] = np.array(cotangent.data, copy=True)

    for i in range(len(tape._nodes) - 1, -1, -1):
        node = tape._nodes[i]
        g = grads[i]
        if g is None or not node.inputs:
            continue
        parts = node.vjp(g)
        if len(parts) != len(node.inputs):
            raise RuntimeError(f"op {node.op} returned {len(parts)} cotangents for {len(node.inputs)} inputs")
        for j, part in zip(node.inputs, parts):
            if part is None:
                continue
            if grads[j] is None:
                grads[j] = np.array(part, copy=True)
            else:
                grads[j] += part

    result: Dict[str, Tensor] = {}
    for name, idx in tape._leaf_names.items():
        g = grads[idx]
        if g is None:
            g = np.zeros(tape._nodes[idx].value.shape, dtype=tape._nodes[idx].value.dtype)
        result[name] = Tensor(np.ascontiguousarray(g))
    return result


@dataclass
class ParamGradCheck:
    """Analytic-vs-numeric comparison for one named parameter."""

    name: str
    analytic: np.ndarray
    numeric: np.ndarray
    max_abs_err: float
    max_rel_err: float


@dataclass
class GradReport:
    """Result of one grad_check run; serializes to JSON without the arrays."""

    params: List[ParamGradCheck]
    eps: float
    tol: float
    seed: Optional[int] = None

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": "grad_report",
            "passed": self.passed,
            "eps": self.eps,
            "tol": self.tol,
            "seed": self.seed,
            "max_rel_err": self.max_rel_err,
            "params": [
                {
                    "name": p.name,
                    "max_abs_err": p.max_abs_err,
                    "max_rel_err": p.max_rel_err,
                }
                for p in self.params
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _relative_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _scalar_loss(out) -> float:
    value = out.value if isinstance(out, Var) else out
    loss = float(np.sum(value.data))
    if not np.isfinite(loss):
        raise ValueError("non-finite loss encountered during gradient checking")
    return loss


def grad_check(
    fn: Callable,
    params: Dict[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    seed: Optional[int] = None,
) -> GradReport:
    """Check analytic gradients of ``fn`` against central finite differences.

    ``fn`` maps a name->tensor dict to one output and must accept both plain
    Tensors (numeric route) and tape Vars (analytic route).  The loss is the
    plain sum of the output, so the analytic cotangent is all-ones.  All
    tensors must be float64 and ``eps`` positive.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    for name, t in params.items():
        if t.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 tensors; {name!r} is {t.dtype}")

    # analytic route: record on a tape, one reverse sweep with cotangent 1
    tape = Tape()
    lifted = {name: tape.leaf(t, name=name) for name, t in params.items()}
    out = fn(lifted)
    if not isinstance(out, Var):
        raise TypeError("fn must return a tape Var when given Vars")
    tape.mark_output(out)
    _scalar_loss(out)
    ones = Tensor(np.ones(out.shape, dtype=np.float64))
    analytic = backward(tape, ones)

    # numeric route: central differences through the plain forward path
    checks: List[ParamGradCheck] = []
    for name, base in params.items():
        numeric = np.zeros(base.shape, dtype=np.float64)
        flat = numeric.reshape(-1)
        base_arr = base.data
        for idx in range(base.size):
            for sign in (+1.0, -1.0):
                probe = np.array(base_arr, copy=True)
                probe.reshape(-1)[idx] += sign * eps
                probed = dict(params)
                probed[name] = Tensor(probe)
                loss = _scalar_loss(fn(probed))
                flat[idx] += sign * loss
            flat[idx] /= 2.0 * eps
        a = analytic[name].data
        checks.append(
            ParamGradCheck(
                name=name,
                analytic=a,
                numeric=numeric,
                max_abs_err=float(np.max(np.abs(a - numeric))) if a.size else 0.0,
                max_rel_err=_relative_error(a, numeric),
            )
        )
    return GradReport(params=checks, eps=eps, tol=tol, seed=seed)
