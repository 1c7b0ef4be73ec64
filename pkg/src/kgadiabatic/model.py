"""Klein-Gordon chain: parameters, Hamiltonian pieces and forces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .poly import REAL, Polynomial


@dataclass(frozen=True)
class ModelParams:
    """Chain of ``N`` sites with coupling ``eps`` at inverse temperature ``beta``.

    ``omega = sqrt(1 + 2 eps)`` is derived.  ``boundary`` is ``"open"`` for the
    model proper; ``"periodic"`` is only used by the transfer-kernel oracle.
    """

    N: int
    eps: float
    beta: float = 1.0
    boundary: str = "open"
    omega: float = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and > 0, got {self.beta}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "omega", math.sqrt(1.0 + 2.0 * self.eps))

    def with_(self, **changes) -> "ModelParams":
        kw = dict(N=self.N, eps=self.eps, beta=self.beta, boundary=self.boundary)
        kw.update(changes)
        return ModelParams(**kw)

    def as_dict(self) -> dict:
        return {"N": self.N, "eps": self.eps, "beta": self.beta,
                "omega": self.omega, "boundary": self.boundary}


def build_hamiltonian(params: ModelParams):
    """Return ``(H0, H1)`` as real-basis polynomials on the open chain."""
    w = params.omega
    h0 = {}
    h1 = {}
    for i in range(1, params.N + 1):
        h0[((i, 2, 0),)] = w / 2
        h0[((i, 0, 2),)] = w / 2
        h1[((i, 0, 4),)] = 1.0 / (4 * w * w)
    for i in range(1, params.N):
        h1[((i, 0, 1), (i + 1, 0, 1))] = params.eps / w
    return Polynomial(REAL, h0), Polynomial(REAL, h1)


def coupling_pairs(params: ModelParams):
    n = params.N
    if params.boundary == "periodic":
        return [(i, (i + 1) % n) for i in range(n)]
    return [(i, i + 1) for i in range(n - 1)]


def potential(q, params: ModelParams, quartic: bool = True):
    """``U_N(q)`` for states of shape (..., N) (open chain)."""
    q = np.asarray(q, dtype=float)
    w = params.omega
    u = 0.5 * w * np.sum(q * q, axis=-1)
    if quartic:
        u = u + np.sum(q ** 4, axis=-1) / (4 * w * w)
    u = u + params.eps / w * np.sum(q[..., :-1] * q[..., 1:], axis=-1)
    return u


def energy(q, p, params: ModelParams, quartic: bool = True):
    p = np.asarray(p, dtype=float)
    return 0.5 * params.omega * np.sum(p * p, axis=-1) + potential(q, params, quartic)


def force(q, params: ModelParams, quartic: bool = True):
    """``-dU/dq`` with neighbours missing at the open ends."""
    q = np.asarray(q, dtype=float)
    w = params.omega
    f = -w * q
    if quartic:
        f = f - q ** 3 / (w * w)
    nb = np.zeros_like(q)
    nb[..., 1:] += q[..., :-1]
    nb[..., :-1] += q[..., 1:]
    return f - params.eps / w * nb
