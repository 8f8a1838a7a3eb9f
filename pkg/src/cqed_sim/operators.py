"""Charge-basis single-mode operators and their tensor-product embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, InvalidCutoff

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class ModeOperators:
    cutoff_N: int
    n_op: np.ndarray
    cos_op: np.ndarray
    sin_op: np.ndarray

    @property
    def dim(self):
        return 2 * self.cutoff_N + 1


@dataclass(frozen=True)
class TrigBundle:
    """Embedded products for cos(phi_b - phi_a - theta) by the addition theorem.

    cos(phi_b - phi_a - theta) = cos(theta)*(CC + SS) + sin(theta)*(CS - SC)
    with CC = cos_a cos_b, SS = sin_a sin_b, CS = cos_a sin_b, SC = sin_a cos_b.
    """

    CC: sp.spmatrix
    SS: sp.spmatrix
    CS: sp.spmatrix
    SC: sp.spmatrix

    @property
    def even(self):
        return self.CC + self.SS

    @property
    def odd(self):
        return self.CS - self.SC

    def combined(self, theta):
        return np.cos(theta) * self.even + np.sin(theta) * self.odd


@lru_cache(maxsize=32)
def single_mode_operators(N: int) -> ModeOperators:
    """n, cos(phi), sin(phi) in the Cooper-pair number basis |-N>..|N>."""
    if int(N) != N or N < 1:
        raise InvalidCutoff(f"charge cutoff must be an integer >= 1, got {N!r}")
    N = int(N)
    d = 2 * N + 1
    n_op = np.diag(np.arange(-N, N + 1)).astype(float)
    raise_op = np.eye(d, k=-1)  # e^{i phi}|n> = |n+1>
    lower_op = raise_op.T
    cos_op = 0.5 * (raise_op + lower_op)
    sin_op = (raise_op - lower_op) / 2j
    for m in (n_op, cos_op, sin_op):
        m.setflags(write=False)
    return ModeOperators(N, n_op, cos_op, sin_op)


def _check(op, site, dims):
    if not 0 <= site < len(dims):
        raise DimensionMismatch(f"site {site} outside {len(dims)} modes")
    if op.shape != (dims[site], dims[site]):
        raise DimensionMismatch(f"operator {op.shape} does not fit mode dimension {dims[site]}")


def embed_operator(op, site: int, dims) -> sp.csr_matrix:
    """Kronecker-embed a single-mode operator; factor order follows site order."""
    return embed_product({site: op}, dims)


def embed_product(ops: dict, dims) -> sp.csr_matrix:
    """Embed a product of single-mode operators acting on distinct sites."""
    dims = list(dims)
    for s, op in ops.items():
        _check(op, s, dims)
    out = sp.identity(1, format="csr")
    for s, d in enumerate(dims):
        factor = sp.csr_matrix(ops[s]) if s in ops else sp.identity(d, format="csr")
        out = sp.kron(out, factor, format="csr")
    return out


def loop_junction_term(site_a: int, site_b: int, dims, N: int) -> TrigBundle:
    if site_a == site_b:
        raise DimensionMismatch("loop junction needs two distinct sites")
    m = single_mode_operators(N)
    c, s = m.cos_op, m.sin_op
    return TrigBundle(
        CC=embed_product({site_a: c, site_b: c}, dims),
        SS=embed_product({site_a: s, site_b: s}, dims),
        CS=embed_product({site_a: c, site_b: s}, dims),
        SC=embed_product({site_a: s, site_b: c}, dims),
    )


def maybe_dense(op):
    """Dense array for small operators, sparse otherwise."""
    if sp.issparse(op) and op.shape[0] <= DENSE_LIMIT:
        return op.toarray()
    return op
