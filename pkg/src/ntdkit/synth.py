"""Synthetic ground-truth generators tailored to each assumption set.

Every generator is deterministic per seed, normalizes factor columns to
unit sum, and the composed instance is re-validated against its assumption
tag before being returned (rejection on failure).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .cones import check_ssc
from .errors import GenerationError, InputError, ShapeError
from .evaluate import validate_assumptions
from .model import NtdModel
from .solvers import numerical_rank
from .tensor import (DenseTensor, mode_slice, read_tensor, unfold,
                     write_tensor_json)

GEN_SSC_MAX_RANK = 6  # exact certification stays cheap up to here


@dataclass
class Instance:
    """Ground-truth model plus the tensor it generates."""

    tensor: DenseTensor
    truth: NtdModel
    assumption_id: str
    seed: int
    meta: dict = field(default_factory=dict)


def _as_rng(rng):
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(0 if rng is None else int(rng))
    return rng


def gen_ssc_factor(n, r, rng=None, nnz_per_row=2, max_tries=100):
    """Sparse stochastic matrix certified to satisfy the SSC.

    Rows carry ``nnz_per_row`` uniform entries on random supports, every
    column is touched, columns are normalized to unit sum; draws are
    rejected until the exact SSC check passes.
    """
    if not 2 <= r <= n:
        raise ShapeError(f"need n >= r >= 2, got n={n}, r={r}")
    if r > GEN_SSC_MAX_RANK:
        raise GenerationError(
            f"cannot certify SSC at r={r} (> {GEN_SSC_MAX_RANK})"
        )
    if not 1 <= nnz_per_row <= r:
        raise ShapeError(f"nnz_per_row={nnz_per_row} out of range")
    rng = _as_rng(rng)
    for _ in range(max_tries):
        h = np.zeros((n, r))
        for i in range(n):
            cols = rng.choice(r, size=nnz_per_row, replace=False)
            h[i, cols] = rng.random(nnz_per_row)
        if (h.sum(axis=0) == 0).any():
            continue
        h /= h.sum(axis=0)
        if check_ssc(h).ssc:
            return h
    raise GenerationError(f"no SSC draw accepted in {max_tries} tries")


def gen_separable_factor(n, r, rng=None):
    """Stochastic matrix with a scaled identity block on its first r rows."""
    if n < r:
        raise ShapeError(f"need n >= r, got n={n}, r={r}")
    rng = _as_rng(rng)
    top = np.diag(rng.random(r) + 0.5)
    rest = np.abs(rng.standard_normal((n - r, r)))
    h = np.vstack([top, rest])
    return h / h.sum(axis=0)


def gen_anchor_factor(n, r, rng=None):
    """Stochastic matrix whose rows are all scaled unit vectors.

    Separable (hence SSC), and any tensor slice weighted by one of its rows
    sees exactly one core slice: the stress shape for the randomized
    procedures.
    """
    if n < r:
        raise ShapeError(f"need n >= r, got n={n}, r={r}")
    rng = _as_rng(rng)
    cols = np.concatenate([rng.permutation(r),
                           rng.integers(r, size=n - r)])
    h = np.zeros((n, r))
    h[np.arange(n), cols] = rng.random(n) + 0.1
    return h / h.sum(axis=0)


@dataclass(frozen=True)
class CoreConstraints:
    """Requested certified properties of a random core tensor."""

    unfolding_ranks: dict = field(default_factory=dict)  # axes tuple -> rank
    exists_full_slice: dict = field(default_factory=dict)  # mode -> rank
    span_maximal: dict = field(default_factory=dict)  # mode -> rank
    nonneg: bool = False
    deficient_slices_mode: int = None  # every slice along it rank-deficient


def _structured_deficient_core(ranks, mode, rng):
    """Core whose every slice along ``mode`` is rank deficient while the
    slice span still reaches full rank: slice k only populates the k-th
    block of rows (round-robin split of the row indices)."""
    if len(ranks) != 3 or mode != 2:
        raise ShapeError("deficient-slice construction supports order-3 "
                         "cores along the last mode")
    r, r2, r3 = ranks
    if r2 != r or r3 < 2:
        raise ShapeError("deficient-slice construction needs square slices "
                         "and at least two of them")
    arr = np.zeros(ranks)
    groups = [list(range(k, r, r3)) for k in range(r3)]
    for k, rows in enumerate(groups):
        arr[rows, :, k] = rng.standard_normal((len(rows), r))
    return DenseTensor.from_array(arr)


def gen_core(ranks, constraints=None, rng=None, max_tries=100):
    """Gaussian core resampled until every requested constraint verifies."""
    ranks = tuple(int(r) for r in ranks)
    constraints = constraints or CoreConstraints()
    rng = _as_rng(rng)
    for _ in range(max_tries):
        if constraints.deficient_slices_mode is not None:
            core = _structured_deficient_core(
                ranks, constraints.deficient_slices_mode, rng)
            if constraints.nonneg:
                core = DenseTensor(core.dims, np.abs(core.data))
        else:
            data = rng.standard_normal(prod(ranks))
            if constraints.nonneg:
                data = np.abs(data)
            core = DenseTensor(ranks, data)
        if _core_ok(core, constraints, rng):
            return core
    raise GenerationError(
        f"core constraints not met in {max_tries} tries "
        f"(likely infeasible for ranks {ranks})"
    )


def _core_ok(core, constraints, rng):
    for axes, target in constraints.unfolding_ranks.items():
        if numerical_rank(unfold(core, tuple(axes))) != target:
            return False
    for mode, target in constraints.exists_full_slice.items():
        ranks = [numerical_rank(mode_slice(core, mode, j))
                 for j in range(core.dims[mode])]
        if max(ranks) != target:
            return False
    for mode, target in constraints.span_maximal.items():
        slices = [mode_slice(core, mode, j)
                  for j in range(core.dims[mode])]
        hit = False
        for _ in range(20):
            w = rng.standard_normal(len(slices))
            if numerical_rank(sum(wi * s for wi, s in zip(w, slices))) \
                    == target:
                hit = True
                break
        if not hit:
            return False
    if constraints.deficient_slices_mode is not None:
        mode = constraints.deficient_slices_mode
        full = min(s for k, s in enumerate(core.dims) if k != mode)
        for j in range(core.dims[mode]):
            if numerical_rank(mode_slice(core, mode, j)) >= full:
                return False
    return True


def _compose(factors, core, assumption_id, seed, meta):
    truth = NtdModel(factors, core, core.dims, {"generator": assumption_id})
    tensor = truth.reconstruct()
    return Instance(tensor, truth, assumption_id, seed, meta)


def gen_instance(assumption_id, dims, ranks, seed=0, axes=None,
                 partition=None, max_tries=50) -> Instance:
    """Draw factors and core for one assumption set, validate, retry.

    Kronecker-group SSC requirements are certified constructively: beyond
    the enumeration cap one group member is generated separable so that
    the SSC of the other member carries over to the product.
    """
    dims = tuple(int(n) for n in dims)
    ranks = tuple(int(r) for r in ranks)
    d = len(dims)
    if len(ranks) != d:
        raise ShapeError("dims and ranks must have equal length")
    if any(n < r for n, r in zip(dims, ranks)):
        raise ShapeError(f"dims {dims} smaller than ranks {ranks}")
    rng = np.random.default_rng(int(seed))
    meta = {"dims": list(dims), "ranks": list(ranks)}
    if axes is not None:
        meta["axes"] = [int(a) for a in axes]
    if partition is not None:
        meta["partition"] = {k: [int(m) for m in v]
                             for k, v in partition.items()}

    last_report = None
    for _ in range(max_tries):
        factors, core = _draw(assumption_id, dims, ranks, rng, meta)
        inst = _compose(factors, core, assumption_id, seed, meta)
        report = validate_assumptions(inst, assumption_id)
        if report.overall == "pass":
            inst.meta["validation"] = report.to_json()
            return inst
        last_report = report
    raise GenerationError(
        f"no valid {assumption_id} instance in {max_tries} tries; last "
        f"report: {None if last_report is None else last_report.to_json()}"
    )


def _draw(assumption_id, dims, ranks, rng, meta):
    d = len(dims)

    def ssc(k):
        # At r=2 the SSC equals separability, which two-nonzero rows can
        # never satisfy; fall back to one nonzero per row there.
        nnz = 1 if ranks[k] == 2 else 2
        return gen_ssc_factor(dims[k], ranks[k], rng, nnz_per_row=nnz)

    def sep(k):
        return gen_separable_factor(dims[k], ranks[k], rng)

    def generic(k):
        u = np.abs(rng.standard_normal((dims[k], ranks[k]))) + 0.05
        return u / u.sum(axis=0)

    if assumption_id in ("A4.1", "A5.1"):
        factors = [generic(k) for k in range(d)]
        core = gen_core(ranks, rng=rng)
    elif assumption_id == "A4.x-unfold":
        if d != 3 or ranks[2] != ranks[0] * ranks[1]:
            raise ShapeError("A4.x-unfold needs order 3 and r3 == r1*r2")
        factors = [ssc(0), sep(1), ssc(2)]
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={(2,): ranks[2]}), rng)
    elif assumption_id == "A4.2":
        if d != 3 or ranks[0] != ranks[1] or ranks[2] > ranks[0]:
            raise ShapeError("A4.2 needs order 3 with r3 <= r1 == r2")
        factors = [ssc(0), ssc(1), ssc(2)]
        core = gen_core(ranks, CoreConstraints(
            exists_full_slice={2: ranks[0], 1: ranks[2]}), rng)
    elif assumption_id == "A4.3":
        if d != 3 or ranks[0] != ranks[1] or ranks[2] > ranks[0]:
            raise ShapeError("A4.3 needs order 3 with r3 <= r1 == r2")
        factors = [ssc(0), ssc(1), gen_anchor_factor(dims[2], ranks[2], rng)]
        core = gen_core(ranks, CoreConstraints(
            span_maximal={2: ranks[0], 1: ranks[2]},
            deficient_slices_mode=2), rng)
    elif assumption_id == "A4.4":
        if d != 3 or ranks[0] != ranks[1] or ranks[2] > ranks[0] ** 2:
            raise ShapeError("A4.4 needs order 3 with r3 <= r^2, r1 == r2")
        factors = [ssc(0), ssc(1), ssc(2)]
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={(2,): ranks[2]},
            exists_full_slice={2: ranks[0]}), rng)
    elif assumption_id == "A4.5":
        if d != 3 or ranks[0] != ranks[1] or ranks[2] > ranks[0] ** 2:
            raise ShapeError("A4.5 needs order 3 with r3 <= r^2, r1 == r2")
        factors = [ssc(0), ssc(1), gen_anchor_factor(dims[2], ranks[2], rng)]
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={(2,): ranks[2]},
            span_maximal={2: ranks[0]},
            deficient_slices_mode=2), rng)
    elif assumption_id == "A5.2":
        axes = tuple(meta.get("axes", (d - 1,)))
        rest = tuple(k for k in range(d) if k not in axes)
        if prod(ranks[k] for k in axes) != prod(ranks[k] for k in rest):
            raise ShapeError("A5.2 needs equal rank products")
        factors = [None] * d
        for group in (rest, axes):
            for pos, k in enumerate(group):
                factors[k] = ssc(k) if pos == 0 else sep(k)
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={axes: prod(ranks[k] for k in axes)}), rng)
    elif assumption_id == "A5.3":
        if ranks[0] != ranks[1] or any(r > ranks[0] for r in ranks[2:]):
            raise ShapeError("A5.3 needs r_i <= r1 == r2")
        factors = [ssc(k) for k in range(d)]
        core = gen_core(ranks, rng=rng)
    elif assumption_id == "A5.4":
        part = meta.get("partition")
        if part is None:
            raise ShapeError("A5.4 needs an explicit partition in meta")
        rows, fixed, cols = (tuple(part["rows"]), tuple(part["fixed"]),
                             tuple(part["cols"]))
        factors = [None] * d
        for group in (rows, fixed, cols):
            for pos, k in enumerate(group):
                factors[k] = ssc(k) if pos == 0 else sep(k)
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={fixed: prod(ranks[k] for k in fixed)}), rng)
    elif assumption_id == "A-sep":
        factors = [sep(k) for k in range(d)]
        core = gen_core(ranks, CoreConstraints(
            unfolding_ranks={(k,): ranks[k] for k in range(d)}), rng)
    else:
        raise ShapeError(f"unknown assumption id {assumption_id!r}")
    return factors, core


def save_instance(inst: Instance, path):
    os.makedirs(path, exist_ok=True)
    write_tensor_json(inst.tensor, os.path.join(path, "tensor.json"))
    inst.truth.save(os.path.join(path, "truth.json"))
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump({"assumption_id": inst.assumption_id,
                   "seed": inst.seed, "meta": inst.meta}, fh)
        fh.write("\n")


def load_instance(path) -> Instance:
    tensor = read_tensor(os.path.join(path, "tensor.json"))
    truth = NtdModel.load(os.path.join(path, "truth.json"))
    try:
        with open(os.path.join(path, "meta.json")) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read instance metadata: {exc}") from exc
    return Instance(tensor, truth, doc.get("assumption_id", ""),
                    int(doc.get("seed", 0)), doc.get("meta", {}))
