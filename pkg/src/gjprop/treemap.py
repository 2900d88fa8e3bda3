"""Propagation down a collapsed tree as an iterated one-dimensional map.

Each cell of the chain settles at the smallest equilibrium driven by its
upstream neighbour, ``phi(v_u)``; starting from ``v_0 = 1`` the iterates
either settle at the elevated fixed point ``v_+`` or decay to rest.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .cubic import ExcitableCurrent, Line, line_below_critical_segment
from .regions import DomainError

__all__ = [
    "LimitTag",
    "EquilibriumPair",
    "IterationTrace",
    "NonConvergenceError",
    "psi",
    "phi",
    "rest_excited_equilibria",
    "persistent_propagation",
    "iterate_phi",
    "tree_g_min",
    "k_prop",
    "k_prop_branch",
]

K_PROP_XTOL = 1e-9


class LimitTag(str, enum.Enum):
    V_PLUS = "ConvergedToVPlus"
    ZERO = "ConvergedToZero"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EquilibriumPair:
    v_minus: float
    v_plus: float


@dataclass
class IterationTrace:
    iterates: list[float]
    limit: float = float("nan")
    limit_tag: LimitTag | None = None
    steps: int = 0


class NonConvergenceError(RuntimeError):
    """The iteration did not settle; ``trace`` holds the iterates so far."""

    def __init__(self, message: str, trace: IterationTrace):
        super().__init__(message)
        self.trace = trace


def psi(cell: ExcitableCurrent, g: float, k: float, v: float) -> float:
    """Upstream voltage for which ``v`` is an equilibrium of the central cell."""
    return -float(cell.f(v)) / g + (k + 1.0) * v


def phi(cell: ExcitableCurrent, g: float, k: float, v_u: float) -> float:
    return cell.smallest_equilibrium(g, k, v_u)


def rest_excited_equilibria(cell: ExcitableCurrent, g: float, k: float) -> EquilibriumPair | None:
    roots = cell.rest_excited(g * k)
    if roots is None:
        return None
    return EquilibriumPair(*roots)


def persistent_propagation(cell: ExcitableCurrent, g: float, k: float) -> bool:
    """Whether iterating ``phi`` from 1 converges to ``v_+``.

    True when ``v_+`` exists and the line of slope ``g (k+1)`` through
    ``(v_+, F(v_+))`` stays under the critical segment, touching allowed.
    """
    pair = rest_excited_equilibria(cell, g, k)
    if pair is None:
        return False
    v = pair.v_plus
    line = Line.through(v, float(cell.f(v)), g * (k + 1.0))
    return line_below_critical_segment(cell, line, strict=False)


def iterate_phi(
    cell: ExcitableCurrent,
    g: float,
    k: float,
    tol: float = 1e-10,
    max_steps: int = 100_000,
    v0: float | None = None,
) -> IterationTrace:
    """Iterate ``v_{j+1} = phi(v_j)`` until successive iterates differ by < tol.

    The limit is tagged by proximity (``100 * tol``) to ``v_+`` or to 0.
    Landing anywhere else contradicts the convergence theorem and raises
    :class:`NonConvergenceError`, as does running out of steps.
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    v = cell.landmarks.v_F if v0 is None else v0
    trace = IterationTrace(iterates=[v])
    for step in range(1, max_steps + 1):
        nxt = phi(cell, g, k, v)
        trace.iterates.append(nxt)
        if abs(nxt - v) < tol:
            trace.limit = nxt
            trace.steps = step
            break
        v = nxt
    else:
        trace.steps = max_steps
        raise NonConvergenceError(f"no convergence within {max_steps} steps", trace)

    near = 100.0 * tol
    pair = rest_excited_equilibria(cell, g, k)
    if pair is not None and abs(trace.limit - pair.v_plus) < near:
        trace.limit_tag = LimitTag.V_PLUS
    elif abs(trace.limit) < near:
        trace.limit_tag = LimitTag.ZERO
    else:
        raise NonConvergenceError(
            f"iterates settled at {trace.limit!r}, which is neither 0 nor v_+", trace
        )
    return trace


def tree_g_min(cell: ExcitableCurrent) -> float:
    """Smallest coupling admitting persistent propagation (reached at k = 0)."""
    v_F = cell.landmarks.v_F
    tangent = cell.tangent_through(v_F, 0.0)
    assert tangent is not None
    return -tangent.line.intercept / v_F


def k_prop_branch(cell: ExcitableCurrent, g: float) -> tuple[float, str]:
    """Largest ``k`` with persistent propagation, and the binding constraint.

    Branch ``"excitability"`` means ``k_prop = F'(v_E) / g`` (existence of
    ``v_+``); ``"tangency"`` means the line through ``v_+`` touches the
    critical segment first, located by bisection on ``k``.
    """
    g_lo = tree_g_min(cell)
    if g < g_lo * (1.0 - 1e-12):
        raise DomainError(f"g={g!r} is below the tree g_min={g_lo!r}")
    k_top = float(cell.df(cell.landmarks.v_E)) / g
    if persistent_propagation(cell, g, k_top):
        return k_top, "excitability"
    lo, hi = 0.0, k_top
    if not persistent_propagation(cell, g, lo):
        return 0.0, "tangency"
    while hi - lo > K_PROP_XTOL:
        mid = 0.5 * (lo + hi)
        if persistent_propagation(cell, g, mid):
            lo = mid
        else:
            hi = mid
    return lo, "tangency"


def k_prop(cell: ExcitableCurrent, g: float) -> float:
    return k_prop_branch(cell, g)[0]
