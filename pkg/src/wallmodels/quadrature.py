"""Gauss-Lobatto-Legendre rules and their maps onto the wall-model layer."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidDomainError, InvalidOrderError, NumericalError

NODE_TOL = 1e-14
_MAX_NEWTON = 100
_E2M1 = np.expm1(2.0)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Q-point GLL rule on [-1, 1].

    Arrays are read-only so a cached rule can be shared between callers.
    """

    order_q: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f) -> float:
        """Apply the rule to a vectorised callable on [-1, 1]."""
        return float(np.dot(self.weights, f(self.nodes)))


class MapKind(enum.Enum):
    LINEAR = "linear"
    CLUSTERED = "clustered"


@dataclass(frozen=True)
class DomainMap:
    kind: MapKind
    h_wm: float


def legendre_pair(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (L_n(x), L_{n-1}(x)) by the three-term recurrence, n >= 1."""
    p_prev = np.ones_like(x)
    p = np.array(x, dtype=float, copy=True)
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p, p_prev


def _gll_nodes(order_q: int) -> np.ndarray:
    n = order_q - 1
    # Chebyshev-Gauss-Lobatto seeds; endpoints are fixed points of the update.
    x = -np.cos(np.pi * np.arange(order_q) / n)
    delta = np.zeros_like(x)
    for _ in range(_MAX_NEWTON):
        p, p_prev = legendre_pair(n, x)
        # Newton on (1 - x^2) L_n'(x), written without the derivative.
        delta = (x * p - p_prev) / (order_q * p)
        x = x - delta
        if np.max(np.abs(delta)) < NODE_TOL:
            break
    else:
        bad = int(np.argmax(np.abs(delta)))
        raise NumericalError(
            f"GLL node {bad} of Q={order_q} did not converge "
            f"(last update {abs(delta[bad]):.3e})",
            index=bad,
        )
    x[0], x[-1] = -1.0, 1.0
    # enforce exact antisymmetry; Newton leaves last-bit noise
    x = 0.5 * (x - x[::-1])
    if order_q % 2 == 1:
        x[n // 2] = 0.0
    return x


@lru_cache(maxsize=None)
def build_gll_rule(order_q: int) -> QuadratureRule:
    """Build (and cache) the ``order_q``-point Gauss-Lobatto-Legendre rule.

    Interior nodes are the roots of the derivative of the Legendre
    polynomial of degree ``order_q - 1``; weights are
    ``2 / (Q (Q - 1) L_{Q-1}(x_i)^2)``.

    Raises
    ------
    InvalidOrderError
        If ``order_q < 2``.
    NumericalError
        If the node iteration does not converge.
    """
    if isinstance(order_q, bool) or int(order_q) != order_q or order_q < 2:
        raise InvalidOrderError(f"GLL order must be an integer >= 2, got {order_q!r}")
    order_q = int(order_q)
    x = _gll_nodes(order_q)
    p, _ = legendre_pair(order_q - 1, x)
    w = 2.0 / (order_q * (order_q - 1) * p**2)
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(order_q, x, w)


def map_to_physical(rule: QuadratureRule, dmap: DomainMap) -> tuple[np.ndarray, np.ndarray]:
    """Map a GLL rule from [-1, 1] onto [0, h_wm].

    Returns the physical abscissae and the weights with the Jacobian of
    the transformation folded in, so that ``sum(jw * f(y))`` approximates
    the integral of ``f`` over the layer.
    """
    h = dmap.h_wm
    if not np.isfinite(h) or h <= 0.0:
        raise InvalidDomainError(f"wall-model height must be positive, got {h!r}")
    xi = rule.nodes
    if dmap.kind is MapKind.LINEAR:
        y = 0.5 * h * (1.0 + xi)
        jw = 0.5 * h * rule.weights
    elif dmap.kind is MapKind.CLUSTERED:
        y = h * np.expm1(xi + 1.0) / _E2M1
        y[0], y[-1] = 0.0, h
        jw = h / _E2M1 * rule.weights * np.exp(xi + 1.0)
    else:  # pragma: no cover
        raise InvalidDomainError(f"unknown map kind {dmap.kind!r}")
    return y, jw


def rule_table_csv(orders) -> str:
    """CSV text with columns ``q, index, node, weight``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q", "index", "node", "weight"])
    for q in orders:
        rule = build_gll_rule(q)
        for i, (x, w) in enumerate(zip(rule.nodes, rule.weights)):
            writer.writerow([q, i, repr(float(x)), repr(float(w))])
    return buf.getvalue()
