"""B-spline bases and spline functions for the time-varying infection rate.

The basis is built by the Cox-de Boor recursion on a clamped knot vector
(degree+1 copies of each boundary knot). 0/0 terms in the recursion are
defined as 0, and the rightmost interval is treated as closed so the
spline is defined at the right end of the domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot configuration: domain, sorted interior knots, degree."""

    start: float
    end: float
    interior: tuple[float, ...]
    degree: int

    def __post_init__(self):
        if not np.isfinite(self.start) or not np.isfinite(self.end):
            raise ValueError("domain endpoints must be finite")
        if self.start >= self.end:
            raise ValueError("domain start must precede domain end")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        ik = np.asarray(self.interior, dtype=float)
        if ik.size:
            if np.any(ik <= self.start) or np.any(ik >= self.end):
                raise ValueError("interior knots must lie strictly inside the domain")
            if np.any(np.diff(ik) <= 0):
                raise ValueError("interior knots must be strictly increasing")
        object.__setattr__(self, "interior", tuple(float(x) for x in ik))

    @property
    def num_interior(self) -> int:
        return len(self.interior)

    @property
    def num_basis(self) -> int:
        return self.num_interior + self.degree + 1

    @property
    def extended(self) -> np.ndarray:
        """Knot sequence with degree+1 copies of each boundary."""
        d = self.degree
        return np.concatenate([
            np.full(d + 1, self.start),
            np.asarray(self.interior, dtype=float),
            np.full(d + 1, self.end),
        ])

    def shifted(self, offset: float) -> "KnotVector":
        return KnotVector(
            self.start + offset,
            self.end + offset,
            tuple(t + offset for t in self.interior),
            self.degree,
        )


def basis_matrix(knots: KnotVector, t) -> np.ndarray:
    """Evaluate all basis functions at the given times.

    Returns an array of shape (len(t), k+d+1). Times outside the domain
    raise ValueError.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < knots.start) or np.any(t > knots.end):
        raise ValueError("evaluation time outside the spline domain")

    tau = knots.extended
    d = knots.degree
    n0 = len(tau) - 1  # number of degree-0 indicators

    b = np.zeros((t.size, n0))
    for i in range(n0):
        if tau[i] < tau[i + 1]:
            b[:, i] = (tau[i] <= t) & (t < tau[i + 1])
    # close the last nonempty interval so t == end is defined
    last = knots.num_interior + d  # index of the rightmost nonempty interval
    b[t == knots.end, last] = 1.0

    for deg in range(1, d + 1):
        nb = n0 - deg
        nxt = np.zeros((t.size, nb))
        for i in range(nb):
            denom_l = tau[i + deg] - tau[i]
            denom_r = tau[i + deg + 1] - tau[i + 1]
            acc = 0.0
            if denom_l > 0:
                acc = (t - tau[i]) / denom_l * b[:, i]
            if denom_r > 0:
                acc = acc + (tau[i + deg + 1] - t) / denom_r * b[:, i + 1]
            nxt[:, i] = acc
        b = nxt

    return b[:, : knots.num_basis]


def basis_value(knots: KnotVector, index: int, t: float) -> float:
    """Single basis function value at a single time (0-based index)."""
    if not 0 <= index < knots.num_basis:
        raise ValueError(f"basis index {index} out of range 0..{knots.num_basis - 1}")
    return float(basis_matrix(knots, t)[0, index])


@dataclass(frozen=True)
class SplineModel:
    """A spline function: knot vector plus coefficient vector."""

    knots: KnotVector
    coefficients: tuple[float, ...]

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or c.size != self.knots.num_basis:
            raise ValueError(
                f"expected {self.knots.num_basis} coefficients, got {c.size}"
            )
        object.__setattr__(self, "coefficients", tuple(float(x) for x in c))

    def value(self, t):
        """Evaluate the spline; scalar in -> float, array in -> array."""
        out = basis_matrix(self.knots, t) @ np.asarray(self.coefficients)
        if np.isscalar(t) or np.ndim(t) == 0:
            return float(out[0])
        return out

    def __call__(self, t):
        return self.value(t)

    def to_json(self) -> str:
        return json.dumps({
            "degree": self.knots.degree,
            "domain": [self.knots.start, self.knots.end],
            "interior_knots": list(self.knots.interior),
            "coefficients": list(self.coefficients),
        })

    @classmethod
    def from_json(cls, text: str) -> "SplineModel":
        obj = json.loads(text)
        knots = KnotVector(
            start=obj["domain"][0],
            end=obj["domain"][1],
            interior=tuple(obj["interior_knots"]),
            degree=obj["degree"],
        )
        return cls(knots=knots, coefficients=tuple(obj["coefficients"]))
