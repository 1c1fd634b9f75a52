"""Backend selection for the hot distance-scan kernel.

The flat store's only hot loop is the prefix distance scan: for each
stored row, dot its first m coordinates against the unit query, divide by
the prefix norm, and report 2 - 2*cos as a squared L2 distance between
unit vectors.  Two interchangeable backends implement it:

* ``compiled`` — a Cython kernel reading the float32 table directly with
  float64 accumulators (built at install time; absent if the extension
  could not compile).
* ``numpy`` — einsum reductions over a float64 mirror of the table.

Both accumulate in float64 from the same float32 rows, so distances agree
to the last few ulps, and both reduce each row independently of its table
position, so exact ties (identical rows) tie exactly in either.  Selection
order between equal distances is decided downstream by vector id, never by
the backend.  Each backend also computes prefix squared norms with the
same arithmetic it uses inside the scan, which keeps cached-norm and
on-the-fly scans bit-identical.

Set ``MVEC_PURE_PYTHON=1`` to force the numpy backend even when the
compiled kernel is available.
"""

from __future__ import annotations

import os

import numpy as np

from .scan_numpy import NumpyScanBackend

try:
    from . import _scan as _compiled_mod
except ImportError:
    _compiled_mod = None


class CompiledScanBackend:
    """Cython scan over the float32 table; float64 accumulation."""

    name = "compiled"

    def prepare(self, table32: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(table32, dtype=np.float32)

    def distances(self, ctx, query_unit: np.ndarray, m: int,
                  row_idx: np.ndarray | None = None,
                  prefix_sq_norms: np.ndarray | None = None) -> np.ndarray:
        n = ctx.shape[0] if row_idx is None else row_idx.shape[0]
        out = np.empty(n, dtype=np.float64)
        q = np.ascontiguousarray(query_unit[:m], dtype=np.float64)
        if row_idx is None:
            _compiled_mod.prefix_sq_l2(ctx, q, out, prefix_sq_norms)
        else:
            idx = np.ascontiguousarray(row_idx, dtype=np.int64)
            _compiled_mod.prefix_sq_l2_subset(ctx, q, idx, out, prefix_sq_norms)
        return out

    def prefix_sq(self, ctx, m: int) -> np.ndarray:
        out = np.empty(ctx.shape[0], dtype=np.float64)
        _compiled_mod.prefix_sq(ctx, m, out)
        return out


def compiled_available() -> bool:
    return _compiled_mod is not None


def get_backend(name: str = "auto"):
    """Resolve a backend by name: 'auto', 'compiled', or 'numpy'."""
    if name == "auto":
        if os.environ.get("MVEC_PURE_PYTHON", "") not in ("", "0"):
            return NumpyScanBackend()
        return CompiledScanBackend() if compiled_available() else NumpyScanBackend()
    if name == "numpy":
        return NumpyScanBackend()
    if name == "compiled":
        if not compiled_available():
            raise RuntimeError("compiled scan kernel is not available in this install")
        return CompiledScanBackend()
    raise ValueError(f"unknown kernel backend {name!r}")
