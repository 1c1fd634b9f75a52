"""Numpy fallback for the prefix distance scan.

Works on a float64 mirror of the float32 table so no per-query upcast
copy is needed and accumulation happens in float64.  Column slices of
the mirror stay views, so a scan at prefix m touches only the leading m
columns of each row.

Both reductions go through einsum rather than a BLAS matmul: einsum
reduces each row with the same summation order no matter where the row
sits in the table, so bit-identical rows always score bit-identically
and equal-distance ties resolve deterministically by id.  BLAS gemv
blocks over row groups and can round identical rows differently near
the table edges, which would break that tie behavior.
"""

from __future__ import annotations

import numpy as np

_ZERO_SQ_NORM = 1e-24  # squared-norm guard: prefixes shorter than this score as orthogonal


class NumpyScanBackend:
    name = "numpy"

    def prepare(self, table32: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(table32, dtype=np.float64)

    def distances(self, ctx, query_unit: np.ndarray, m: int,
                  row_idx: np.ndarray | None = None,
                  prefix_sq_norms: np.ndarray | None = None) -> np.ndarray:
        block = ctx[:, :m] if row_idx is None else ctx[row_idx, :m]
        q = np.asarray(query_unit[:m], dtype=np.float64)
        dots = np.einsum("ij,j->i", block, q)
        if prefix_sq_norms is None:
            sq_norms = np.einsum("ij,ij->i", block, block)
        else:
            sq_norms = prefix_sq_norms if row_idx is None else prefix_sq_norms[row_idx]
        cos = dots / np.sqrt(np.maximum(sq_norms, _ZERO_SQ_NORM))
        cos[sq_norms <= _ZERO_SQ_NORM] = 0.0
        return 2.0 - 2.0 * cos

    def prefix_sq(self, ctx, m: int) -> np.ndarray:
        # The same expression the scan evaluates on the fly, so cached
        # norms reproduce uncached distances bit-for-bit.
        block = ctx[:, :m]
        return np.einsum("ij,ij->i", block, block)
