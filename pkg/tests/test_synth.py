import numpy as np
import pytest

from ntdkit.cones import check_separable, check_ssc
from ntdkit.errors import GenerationError, ShapeError
from ntdkit.solvers import numerical_rank, spa_separable_nmf
from ntdkit.synth import (CoreConstraints, gen_anchor_factor, gen_core,
                          gen_instance, gen_separable_factor, gen_ssc_factor,
                          load_instance, save_instance)
from ntdkit.tensor import mode_slice, unfold


class TestGenSscFactor:
    def test_certified_ssc(self, rng):
        h = gen_ssc_factor(20, 4, rng)
        assert check_ssc(h).ssc
        assert np.abs(h.sum(axis=0) - 1).max() <= 1e-12
        assert ((h > 0).sum(axis=1) == 2).all()

    def test_anchor_rows_when_nnz_one(self, rng):
        h = gen_ssc_factor(4, 4, rng, nnz_per_row=1)
        # permutation-scaled identity: separable hence SSC
        assert check_separable(h)[0]
        assert ((h > 0).sum(axis=1) == 1).all()

    def test_refuses_above_certification_cap(self, rng):
        with pytest.raises(GenerationError):
            gen_ssc_factor(30, 7, rng)

    def test_acceptance_rate_near_reported(self):
        # two-nonzero 20x4 draws: a clear majority band, not all-or-nothing
        from tests.conftest import two_nonzero
        hits = 0
        for seed in range(30):
            h = two_nonzero(20, 4, np.random.default_rng(seed))
            hits += bool(check_ssc(h).ssc)
        assert 0.40 <= hits / 30 <= 0.95


class TestGenSeparableFactor:
    def test_square_is_diagonal(self, rng):
        h = gen_separable_factor(4, 4, rng)
        assert np.count_nonzero(h - np.diag(np.diag(h))) == 0

    def test_anchors_in_identity_block(self, rng):
        h = gen_separable_factor(30, 4, rng)
        flag, anchors = check_separable(h)
        assert flag and all(a < 4 for a in anchors)

    def test_spa_roundtrip(self, rng):
        h = gen_separable_factor(25, 4, rng)
        w = rng.standard_normal((18, 4))
        anchors, _, _ = spa_separable_nmf(w @ h.T, 4)
        assert sorted(anchors) == list(range(4))

    def test_too_small(self, rng):
        with pytest.raises(ShapeError):
            gen_separable_factor(3, 4, rng)


class TestGenAnchorFactor:
    def test_one_sparse_rows_cover_columns(self, rng):
        h = gen_anchor_factor(10, 3, rng)
        assert ((h > 0).sum(axis=1) == 1).all()
        assert (h.sum(axis=0) > 0).all()
        assert check_separable(h)[0]


class TestGenCore:
    def test_generic_rank(self, rng):
        core = gen_core((4, 4, 3), CoreConstraints(
            unfolding_ranks={(2,): 3}), rng)
        assert numerical_rank(unfold(core, (2,))) == 3

    def test_deficient_slices_with_full_span(self, rng):
        core = gen_core((4, 4, 2), CoreConstraints(
            span_maximal={2: 4}, deficient_slices_mode=2), rng)
        for j in range(2):
            assert numerical_rank(mode_slice(core, 2, j)) < 4
        combo = sum(rng.standard_normal() * mode_slice(core, 2, j)
                    for j in range(2))
        assert numerical_rank(combo) == 4

    def test_infeasible_combination(self, rng):
        with pytest.raises(ShapeError):
            gen_core((3, 3, 0), CoreConstraints(), rng)
        with pytest.raises(GenerationError):
            # rank-4 unfolding is impossible for a 3x3x1 core
            gen_core((3, 3, 1), CoreConstraints(unfolding_ranks={(2,): 4}),
                     rng, max_tries=5)

    def test_nonneg_option(self, rng):
        core = gen_core((3, 3, 2), CoreConstraints(nonneg=True), rng)
        assert core.data.min() >= 0


class TestGenInstance:
    def test_valid_and_reconstructs(self):
        inst = gen_instance("A4.2", (14, 14, 10), (3, 3, 2), seed=11)
        assert inst.meta["validation"]["overall"] == "pass"
        recon = inst.truth.reconstruct()
        assert np.array_equal(recon.data, inst.tensor.data)
        for u in inst.truth.factors:
            assert np.abs(u.sum(axis=0) - 1).max() <= 1e-12

    def test_determinism_bytes(self, tmp_path):
        a = gen_instance("A4.2", (10, 10, 8), (3, 3, 2), seed=12)
        b = gen_instance("A4.2", (10, 10, 8), (3, 3, 2), seed=12)
        save_instance(a, tmp_path / "a")
        save_instance(b, tmp_path / "b")
        for name in ("tensor.json", "truth.json", "meta.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_roundtrip(self, tmp_path):
        inst = gen_instance("A4.4", (10, 10, 6), (3, 3, 2), seed=13)
        save_instance(inst, tmp_path / "inst")
        back = load_instance(tmp_path / "inst")
        assert back.assumption_id == "A4.4"
        assert np.array_equal(back.tensor.data, inst.tensor.data)
        assert np.array_equal(back.truth.core.data, inst.truth.core.data)

    def test_dims_smaller_than_ranks(self):
        with pytest.raises(ShapeError):
            gen_instance("A4.2", (2, 10, 8), (3, 3, 2), seed=1)

    def test_unknown_assumption(self):
        with pytest.raises(ShapeError):
            gen_instance("A7.7", (5, 5, 5), (2, 2, 2), seed=1)
