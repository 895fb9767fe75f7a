"""Exhaustive inner-product search over a quantized dataset."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codebook import source_tag_for_dimension
from .quantizer import MseCodes, MseQuantizer, ProdCodes, ProdQuantizer
from .storage import MODE_MSE, MODE_PROD, IndexFormatError, IndexHeader, read_index, write_index

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchResult:
    ids: np.ndarray
    scores: np.ndarray


def make_quantizer(mode: str, d: int, b: int, seed: int, m: int | None = None):
    if mode == MODE_MSE:
        return MseQuantizer(d, b, seed)
    if mode == MODE_PROD:
        return ProdQuantizer(d, b, seed, m=m)
    raise ValueError(f"unknown mode {mode!r}")


class QuantizedIndex:
    def __init__(self, header: IndexHeader, quantizer, codes):
        if len(codes) != header.n:
            raise ValueError("header record count does not match codes")
        self.header = header
        self.quantizer = quantizer
        self.codes = codes

    def __len__(self):
        return self.header.n

    @property
    def d(self) -> int:
        return self.header.d

    def records(self) -> np.ndarray:
        return self.codes.records()

    def save(self, path) -> None:
        write_index(path, self.header, self.records())

    @classmethod
    def load(cls, path) -> "QuantizedIndex":
        header, records = read_index(path)
        return cls.from_records(header, records)

    @classmethod
    def from_records(cls, header: IndexHeader, records: np.ndarray) -> "QuantizedIndex":
        expected_source = source_tag_for_dimension(header.d).split(":")[0]
        if header.source != expected_source:
            raise IndexFormatError(f"codebook source {header.source!r} inconsistent with d={header.d}")
        q = make_quantizer(header.mode, header.d, header.b, header.master_seed, header.m or None)
        records = np.ascontiguousarray(records)
        nb = q.index_bytes
        if header.mode == MODE_MSE:
            codes = MseCodes(records[:, :nb].copy(), records[:, nb:nb + 4].copy().view("<f4")[:, 0].astype(np.float32))
        else:
            ns = q.sketch.sign_bytes
            tail = records[:, nb + ns:nb + ns + 8].copy().view("<f4")
            codes = ProdCodes(records[:, :nb].copy(), records[:, nb:nb + ns].copy(),
                              tail[:, 0].astype(np.float32), tail[:, 1].astype(np.float32))
        return cls(header, q, codes)

    def scores(self, query) -> np.ndarray:
        """Estimated inner products of ``query`` with every record."""
        prepared = self.quantizer.prepare_query(query)
        if self.header.mode == MODE_MSE:
            return self.quantizer.scores(self.codes, prepared)
        return self.quantizer.scores(self.codes, *prepared)

    def dequantize(self) -> np.ndarray:
        return self.quantizer.dequantize_batch(self.codes)


def build_index(vectors, mode: str, b: int, seed: int = 0, m: int | None = None) -> QuantizedIndex:
    """Quantize every row of ``vectors`` with one shared quantizer."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError("build_index needs a non-empty (n, d) array")
    n, d = vectors.shape
    start = time.perf_counter()
    q = make_quantizer(mode, d, b, seed, m)
    codes = q.quantize_batch(vectors)
    elapsed = time.perf_counter() - start
    sketch_m = q.m if mode == MODE_PROD else 0
    header = IndexHeader(mode, d, b, sketch_m, n, int(seed), source_tag_for_dimension(d).split(":")[0])
    log.info("indexed %d vectors (d=%d, %s, b=%d) in %.3fs, %d bytes/record", n, d, mode, b, elapsed,
             header.record_bytes)
    return QuantizedIndex(header, q, codes)


def search(index: QuantizedIndex, query, k: int) -> SearchResult:
    """Top-``k`` records by estimated inner product; ties go to the smaller id."""
    scores = index.scores(query)
    ids = kernels.topk(scores, k)
    return SearchResult(ids, scores[ids])


def search_batch(index: QuantizedIndex, queries, k: int) -> np.ndarray:
    queries = np.atleast_2d(queries)
    out = np.empty((len(queries), min(k, len(index))), dtype=np.int64)
    for i, q in enumerate(queries):
        out[i] = search(index, q, k).ids
    return out


def exact_ground_truth(vectors, queries) -> np.ndarray:
    """Exact top-1 inner-product id per query (float64), ties to the lowest id."""
    vectors = np.asarray(vectors, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if vectors.shape[1] != queries.shape[1]:
        raise ValueError("vectors and queries differ in dimension")
    out = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), 256):
        block = queries[start:start + 256] @ vectors.T
        out[start:start + 256] = np.argmax(block, axis=1)
    return out


def recall_eval(index: QuantizedIndex, queries, ground_truth_top1, k_list) -> dict[int, float]:
    """Fraction of queries whose true top-1 id is in the approximate top-k, per k."""
    queries = np.atleast_2d(queries)
    gt = np.asarray(ground_truth_top1).reshape(-1)
    if len(gt) != len(queries):
        raise ValueError(f"{len(queries)} queries but {len(gt)} ground-truth ids")
    if len(gt) and (gt.min() < 0 or gt.max() >= len(index)):
        raise ValueError("ground-truth id outside the index")
    k_list = sorted(set(int(k) for k in k_list))
    kmax = max(k_list)
    ranks = search_batch(index, queries, kmax)
    hits = ranks == gt[:, None]
    return {k: float(hits[:, :k].any(axis=1).mean()) for k in k_list}
