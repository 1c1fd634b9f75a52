"""Flat, exact top-k vector store exploiting nested prefix embeddings.

One contiguous float32 table holds every embedding at full dimension;
searching at a smaller prefix length just reads fewer leading columns of
each row, re-normalizing the prefix at query time.  That keeps storage at
exactly one table — the whole point of prefix-truncatable embeddings —
while letting queries trade accuracy for scan time.

Search is exact (exhaustive scan, no approximation).  Ties in distance
break toward the smaller vector id, so results are deterministic across
runs, platforms, and scan backends.
"""

from __future__ import annotations

import platform
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_backend
from .core import NORM_EPS, as_vector, rng_for
from .errors import (
    BoundsError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DuplicateIdError,
    FormatError,
)

STORE_MAGIC = b"MVST"
STORE_VERSION = 1

BYTES_PER_DIM = 4  # float32 storage

BENCH_HEADER = "dim,storage_mb,mean_query_ms,delta_storage_pct,delta_time_pct"


def storage_mb(num_rows: int, dim: int) -> float:
    """Table size in MiB at 4 bytes per stored dimension."""
    return num_rows * dim * BYTES_PER_DIM / (1024.0 * 1024.0)


class VectorStore:
    """Append-only table of unit-normalized float32 rows with u64 ids."""

    def __init__(self, dim: int, backend: str = "auto"):
        if dim < 1:
            raise DimensionError(f"store dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self._rows = np.empty((0, self.dim), dtype=np.float32)
        self._count = 0
        self._ids = np.empty(0, dtype=np.uint64)
        self._id_set: set[int] = set()
        self._backend = get_backend(backend)
        self._scan_ctx = None
        self._prefix_sq_norms: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return self._count

    @property
    def ids(self) -> np.ndarray:
        return self._ids[: self._count]

    @property
    def rows(self) -> np.ndarray:
        """The live (count, dim) float32 view of the table."""
        return self._rows[: self._count]

    @property
    def backend_name(self) -> str:
        return self._backend.name

    # -- ingest ---------------------------------------------------------

    def _grow(self, extra: int):
        need = self._count + extra
        if need <= self._rows.shape[0]:
            return
        cap = max(need, 2 * self._rows.shape[0], 1024)
        rows = np.empty((cap, self.dim), dtype=np.float32)
        rows[: self._count] = self._rows[: self._count]
        ids = np.empty(cap, dtype=np.uint64)
        ids[: self._count] = self._ids[: self._count]
        self._rows, self._ids = rows, ids

    def ingest(self, vec_id: int, embedding) -> None:
        """Append one embedding, L2-normalized, as float32."""
        vec = as_vector(embedding, "embedding")
        if vec.size != self.dim:
            raise DimensionError(f"embedding dim {vec.size} != store dim {self.dim}")
        norm = float(np.linalg.norm(vec))
        if norm < NORM_EPS:
            raise DegenerateInputError("cannot ingest a zero embedding")
        if int(vec_id) in self._id_set:
            raise DuplicateIdError(f"id {vec_id} already ingested")
        self._grow(1)
        self._rows[self._count] = (vec / norm).astype(np.float32)
        self._ids[self._count] = np.uint64(vec_id)
        self._id_set.add(int(vec_id))
        self._count += 1
        self._invalidate()

    def ingest_many(self, vec_ids, embeddings) -> None:
        """Bulk ingest: same semantics as one :meth:`ingest` per row."""
        mat = np.asarray(embeddings, dtype=np.float64)
        ids = np.asarray(vec_ids, dtype=np.uint64)
        if mat.ndim != 2 or mat.shape[1] != self.dim:
            raise DimensionError(f"expected (n, {self.dim}) embeddings, got {mat.shape}")
        if ids.shape != (mat.shape[0],):
            raise DimensionError("one id per embedding row required")
        norms = np.linalg.norm(mat, axis=1)
        if norms.min() < NORM_EPS:
            raise DegenerateInputError("cannot ingest a zero embedding")
        unique = np.unique(ids)
        if unique.size != ids.size or any(int(i) in self._id_set for i in unique):
            raise DuplicateIdError("duplicate id in bulk ingest")
        self._grow(mat.shape[0])
        self._rows[self._count:self._count + mat.shape[0]] = (mat / norms[:, None]).astype(np.float32)
        self._ids[self._count:self._count + mat.shape[0]] = ids
        self._id_set.update(int(i) for i in ids)
        self._count += mat.shape[0]
        self._invalidate()

    def _invalidate(self):
        self._scan_ctx = None
        self._prefix_sq_norms.clear()

    # -- search ---------------------------------------------------------

    def _ctx(self):
        if self._scan_ctx is None:
            self._scan_ctx = self._backend.prepare(self.rows)
        return self._scan_ctx

    def precompute_prefix_norms(self, dims) -> None:
        """Cache per-row prefix squared norms for the given prefix lengths.

        Optional: trades one float64 vector per dimension for skipping the
        norm accumulation during scans at that dimension.  The backend
        computes the cache with the same arithmetic its scan uses, so
        cached and on-the-fly searches return bit-identical distances.
        """
        for m in dims:
            if not 1 <= m <= self.dim:
                raise DimensionError(f"prefix {m} out of range [1, {self.dim}]")
            self._prefix_sq_norms[int(m)] = self._backend.prefix_sq(
                self._ctx(), int(m))

    @property
    def has_precomputed_norms(self) -> bool:
        return bool(self._prefix_sq_norms)

    def _distances(self, query, m: int, row_idx=None) -> np.ndarray:
        q = as_vector(query, "query")
        if q.size != self.dim:
            raise DimensionError(f"query dim {q.size} != store dim {self.dim}")
        if not 1 <= m <= self.dim:
            raise DimensionError(f"prefix {m} out of range [1, {self.dim}]")
        q_prefix = q[:m]
        q_unit = q_prefix / max(float(np.linalg.norm(q_prefix)), NORM_EPS)
        return self._backend.distances(self._ctx(), q_unit, m, row_idx,
                                       self._prefix_sq_norms.get(int(m)))

    @staticmethod
    def _top_k_positions(dist: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
        """Positions of the exact top-k by (distance, id) ascending."""
        if k < dist.size:
            part = np.argpartition(dist, k - 1)[:k]
            kth = dist[part].max()
            strict = np.flatnonzero(dist < kth)
            at_kth = np.flatnonzero(dist == kth)
            need = k - strict.size
            at_kth = at_kth[np.argsort(ids[at_kth], kind="stable")][:need]
            sel = np.concatenate([strict, at_kth])
        else:
            sel = np.arange(dist.size)
        return sel[np.lexsort((ids[sel], dist[sel]))]

    def search(self, query, m: int, k: int) -> list[tuple[int, float]]:
        """Exact top-k at prefix length m.

        The query is truncated to m and normalized; every candidate row's
        prefix is re-normalized before the squared L2 distance, so results
        rank identically to descending cosine over the prefixes.  Returns
        (id, distance) pairs ascending by (distance, id).
        """
        if not 1 <= k <= self._count:
            raise BoundsError(f"k={k} out of range [1, {self._count}]")
        dist = self._distances(query, m)
        ids = self.ids
        pos = self._top_k_positions(dist, ids, k)
        return [(int(ids[i]), float(dist[i])) for i in pos]

    def funnel_search(self, query, stages, k: int) -> list[tuple[int, float]]:
        """Coarse-to-fine search: prune with short prefixes, rerank longer.

        ``stages`` is a list of (prefix_dim, candidate_count) with strictly
        increasing dims ending at the full dimension and non-increasing
        candidate counts, all >= k.  Stage 1 scans the whole table; later
        stages rescan only the survivors.  The final stage's top-k at full
        dimension is returned.
        """
        if not stages:
            raise ConfigError("funnel needs at least one stage")
        dims = [int(m) for m, _ in stages]
        counts = [int(c) for _, c in stages]
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise ConfigError(f"funnel dims must be strictly increasing: {dims}")
        if dims[-1] != self.dim:
            raise ConfigError(f"final funnel dim {dims[-1]} != store dim {self.dim}")
        if any(b > a for a, b in zip(counts, counts[1:])):
            raise ConfigError(f"funnel candidate counts must be non-increasing: {counts}")
        if any(c < k for c in counts):
            raise ConfigError(f"every funnel count must be >= k={k}: {counts}")
        if not 1 <= k <= self._count:
            raise BoundsError(f"k={k} out of range [1, {self._count}]")

        survivors = None  # row indices into the table; None = all rows
        ordered_dist = None
        for m, count in zip(dims, counts):
            count = min(count, self._count if survivors is None else survivors.size)
            dist = self._distances(query, m, row_idx=survivors)
            ids = self.ids if survivors is None else self.ids[survivors]
            pos = self._top_k_positions(dist, ids, count)
            ordered_dist = dist[pos]
            survivors = pos if survivors is None else survivors[pos]
        # the last stage scanned at the full dimension and left survivors
        # ordered by (distance, id); its leading k entries are the answer
        top_ids = self.ids[survivors[:k]]
        return [(int(i), float(d)) for i, d in zip(top_ids, ordered_dist[:k])]

    # -- persistence ------------------------------------------------------
    # magic "MVST", version u32, N u64, dim u32, ids (N x u64), then the
    # float32 row-major payload.  Little-endian.

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(STORE_MAGIC)
            fh.write(struct.pack("<IQI", STORE_VERSION, self._count, self.dim))
            fh.write(np.ascontiguousarray(self.ids, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(self.rows, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, backend: str = "auto") -> "VectorStore":
        """Load an MVST file, (re-)normalizing rows at ingest semantics."""
        ids, rows = load_vectors(path)
        store = cls(rows.shape[1], backend=backend)
        store.ingest_many(ids, rows.astype(np.float64))
        return store


def save_vectors(path, ids, rows) -> None:
    """Write raw (unnormalized) vectors in the store's file layout.

    The same MVST layout doubles as the embedding exchange format, so
    extracted embeddings feed both evaluation and search without
    conversion.
    """
    rows = np.asarray(rows, dtype=np.float32)
    ids = np.asarray(ids, dtype=np.uint64)
    if rows.ndim != 2:
        raise DimensionError(f"expected (n, d) vectors, got shape {rows.shape}")
    if ids.shape != (rows.shape[0],):
        raise DimensionError("one id per vector row required")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<IQI", STORE_VERSION, rows.shape[0], rows.shape[1]))
        fh.write(np.ascontiguousarray(ids, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def load_vectors(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an MVST file; returns (ids u64, rows float32) unmodified."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != STORE_MAGIC:
            raise FormatError(f"bad vector-file magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError("truncated vector-file header")
        version, count, dim = struct.unpack("<IQI", header)
        if version != STORE_VERSION:
            raise FormatError(f"unsupported vector-file version {version}")
        if dim < 1:
            raise FormatError(f"vector file declares dimension {dim}")
        id_bytes = fh.read(count * 8)
        payload = fh.read(count * dim * 4)
        if len(id_bytes) != count * 8 or len(payload) != count * dim * 4:
            raise FormatError("truncated vector-file payload")
        if fh.read(1):
            raise FormatError("trailing bytes after vector payload")
    ids = np.frombuffer(id_bytes, dtype="<u8").copy()
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    return ids, rows


# -- benchmark ----------------------------------------------------------------


@dataclass
class BenchReport:
    """Storage/latency trade-off table, one row per prefix dimension.

    ``rows`` holds (dim, storage_mb, mean_query_ms, delta_storage_pct,
    delta_time_pct) in descending dim order; deltas are percent reductions
    against the largest dimension benchmarked.
    """

    rows: list[tuple[int, float, float, float, float]]
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [f"# {key}: {value}" for key, value in self.meta.items()]
        lines.append(BENCH_HEADER)
        for dim, mb, ms, d_mb, d_ms in self.rows:
            lines.append(f"{dim},{mb:.2f},{ms:.2f},{d_mb:.2f},{d_ms:.2f}")
        return "\n".join(lines) + "\n"


def bench(store: VectorStore, dims, k: int, num_queries: int = 200, seed: int = 0,
          storage_rows: int | None = None, precompute_norms: bool = False) -> BenchReport:
    """Measure mean warm-query latency per prefix dimension.

    Queries are seeded Gaussian vectors; each dimension gets a small
    unmeasured warm-up pass, then every query is timed individually
    (distance scan + top-k selection only; ingest excluded by
    construction).  ``storage_rows`` lets the storage column model a
    deployment larger than the benchmarked store; timing always reflects
    the actual store.
    """
    dims = sorted({int(m) for m in dims}, reverse=True)
    if not dims:
        raise ConfigError("bench needs at least one dimension")
    if dims[0] > store.dim:
        raise DimensionError(f"bench dim {dims[0]} exceeds store dim {store.dim}")
    if num_queries < 100:
        raise ConfigError("bench means are taken over >= 100 warm queries")
    if not 1 <= k <= len(store):
        raise BoundsError(f"k={k} out of range [1, {len(store)}]")

    if precompute_norms:
        store.precompute_prefix_norms(dims)
    n_storage = len(store) if storage_rows is None else int(storage_rows)
    rng = rng_for(seed, "queries")
    queries = rng.standard_normal((num_queries, store.dim))

    mean_ms = {}
    for m in dims:
        for q in queries[: min(10, num_queries)]:
            store.search(q, m, k)
        total = 0.0
        for q in queries:
            start = time.perf_counter()
            store.search(q, m, k)
            total += time.perf_counter() - start
        mean_ms[m] = 1000.0 * total / num_queries

    ref_dim = dims[0]
    ref_mb = storage_mb(n_storage, ref_dim)
    ref_ms = mean_ms[ref_dim]
    rows = []
    for m in dims:
        mb = storage_mb(n_storage, m)
        ms = mean_ms[m]
        rows.append((m, mb, ms,
                     100.0 * (1.0 - mb / ref_mb),
                     100.0 * (1.0 - ms / ref_ms) if ref_ms > 0 else 0.0))
    meta = {
        "machine": f"{platform.machine()} {platform.processor() or 'unknown-cpu'}".strip(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel": store.backend_name,
        "prefix_norms": "precomputed" if store.has_precomputed_norms else "on_the_fly",
        "stored_rows": len(store),
        "storage_rows": n_storage,
        "k": k,
        "queries": num_queries,
    }
    return BenchReport(rows, meta)


def write_bench_report(path, report: BenchReport):
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(report.to_csv())
