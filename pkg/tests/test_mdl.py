import math

import numpy as np
import pytest

from helpers import random_step_law, true_validation_model
from walklen.divergence import Tolerance, gkl
from walklen.evidence import augment
from walklen.fit import FitConfig, fit
from walklen.histogram import EmpiricalDistribution
from walklen.mdl import (
    GRID_LOG_LO,
    HEADER_BITS,
    MAX_BITS,
    NaiveBits,
    decode_block,
    encode_block,
    mdl_compare,
    min_bits,
    naive_bits,
    quantization_gkl,
    quantize,
)
from walklen.walk import (
    MixtureModel,
    ModelTemplate,
    StepLaw,
    WalkComponent,
    mixture_pmf,
)


def random_returning_model(rng, max_components=3):
    order = int(rng.integers(1, 4))
    size = int(rng.integers(1, max_components + 1))
    ks = tuple(sorted(rng.choice([1, 2, 3, 4, 5], size=size, replace=False)))
    comps = []
    for k in ks:
        while True:
            law = random_step_law(order, rng, floor=0.02)
            if law.drift() < -0.15:
                break
        comps.append(WalkComponent(int(k), law))
    if len(ks) == 1:
        weights = (1.0,)
    else:
        raw = rng.dirichlet(np.ones(len(ks)))
        raw = 0.05 + 0.8 * raw
        weights = tuple(raw / raw.sum())
    return MixtureModel(tuple(comps), weights)


def model_gkl(a, b, L):
    return gkl(mixture_pmf(a, L).as_dict(), mixture_pmf(b, L).as_dict(),
               validate=False)


def exact_data(model, L):
    d = mixture_pmf(model, L).as_dict()
    total = sum(d.values())
    return EmpiricalDistribution({x: v / total for x, v in d.items()})


class TestQuantize:
    def test_codes_in_range(self):
        rng = np.random.default_rng(1)
        for bits in (1, 4, 9, 16):
            m = random_returning_model(rng)
            qm = quantize(m, {}, bits)
            assert all(0 <= c < (1 << bits) for c in qm.codes)

    def test_grid_point_round_trip(self):
        bits = 6
        n = 1 << bits
        grid_vals = np.exp(GRID_LOG_LO * (1.0 - np.arange(n) / (n - 1)))
        some = grid_vals[[3, 17, 40]]
        codes = encode_block(some, bits)
        assert list(codes) == [3, 17, 40]

    def test_one_bit_collapses_blocks(self):
        rng = np.random.default_rng(2)
        m = random_returning_model(rng)
        for comp in m.components:
            codes = encode_block(np.array(comp.steps.probs), 1)
            assert set(codes.tolist()) <= {0, 1}

    def test_sixteen_bit_error_small(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = random_returning_model(rng)
            qm = quantize(m, {}, 16)
            assert model_gkl(m, qm.model, m.k_min + 500) < 1e-3

    def test_error_trend_non_increasing(self):
        # grids at different depths are not nested, so a single extra bit
        # can land less luckily and tick the error up; the envelope must
        # still fall: no depth may exceed the best coarser depth by more
        # than rounding luck, and the finest grid must sit near the bottom
        rng = np.random.default_rng(4)
        for _ in range(5):
            m = random_returning_model(rng)
            L = m.k_min + 400
            errs = [model_gkl(m, quantize(m, {}, b).model, L)
                    for b in range(1, MAX_BITS + 1)]
            best = errs[0]
            for e in errs[1:]:
                assert e <= max(8 * best, 1e-5)
                best = min(best, e)
            assert errs[-1] <= max(2 * min(errs), 1e-5)

    def test_total_bits_accounting(self):
        law = StepLaw(1, (0.5, 0.25, 0.25))
        single = MixtureModel((WalkComponent(3, law),), (1.0,))
        assert quantize(single, {}, 5).total_bits == 5 * 3 + HEADER_BITS
        pair = MixtureModel(
            (WalkComponent(2, law), WalkComponent(4, law)), (0.6, 0.4)
        )
        assert quantize(pair, {}, 5).total_bits == 5 * 8 + HEADER_BITS
        with_aux = quantize(pair, {1: 0.7, 3: 0.3}, 5)
        assert with_aux.total_bits == 5 * 10 + HEADER_BITS
        singleton_aux = quantize(pair, {1: 1.0}, 5)
        assert singleton_aux.total_bits == 5 * 8 + HEADER_BITS
        assert singleton_aux.aux == {1: 1.0}

    def test_dequantized_model_valid(self):
        rng = np.random.default_rng(5)
        m = random_returning_model(rng)
        qm = quantize(m, {}, 3)
        assert qm.model.ks == m.ks  # invariants enforced by construction
        for comp in qm.model.components:
            assert min(comp.steps.probs) > 0


class TestMinBits:
    def test_minimality(self):
        model = true_validation_model()
        data = exact_data(model, 300)
        tol = Tolerance(1e-4)
        qm = min_bits(data, model, tol)
        assert qm is not None
        aug = augment(data, model)
        assert quantization_gkl(data, qm, aug.lam) <= tol.delta
        if qm.bits_per_param > 1:
            worse = quantize(model, aug.aux, qm.bits_per_param - 1)
            assert quantization_gkl(data, worse, aug.lam) > tol.delta

    def test_infinite_tolerance_needs_one_bit(self):
        model = true_validation_model()
        data = exact_data(model, 200)
        qm = min_bits(data, model, Tolerance(math.inf))
        assert qm is not None and qm.bits_per_param == 1

    def test_unrepresentable_returns_none(self):
        model = true_validation_model()
        data = exact_data(model, 200)
        assert min_bits(data, model, Tolerance(0.0)) is None


class TestNaiveBits:
    def test_point_mass_is_free(self):
        data = EmpiricalDistribution({7: 1.0})
        assert naive_bits(data, Tolerance(1e-6)) == NaiveBits(0, 0, 0)

    def test_bits_scale_with_support(self):
        data = EmpiricalDistribution({1: 0.4, 2: 0.35, 3: 0.25})
        nb = naive_bits(data, Tolerance(1e-5))
        assert nb is not None
        assert nb.n_params == 2
        assert nb.total_bits == nb.bits_per_param * 2

    def test_tail_below_model_grid_still_representable(self):
        # a support point at 1e-6 lies below the model grid floor of 2^-16
        probs = {1: 0.5, 2: 0.3, 3: 0.199999, 4: 1e-6}
        data = EmpiricalDistribution(probs)
        nb = naive_bits(data, Tolerance(1e-5))
        assert nb is not None

    def test_looser_tolerance_never_needs_more_bits(self):
        data = EmpiricalDistribution({1: 0.4, 2: 0.3, 3: 0.2, 4: 0.1})
        tight = naive_bits(data, Tolerance(1e-8))
        loose = naive_bits(data, Tolerance(1e-3))
        assert loose.bits_per_param <= tight.bits_per_param


class TestMdlCompare:
    @pytest.fixture(scope="class")
    def fits_and_data(self):
        model = true_validation_model()
        data = exact_data(model, 250)
        cfg = FitConfig(max_iters=3000)
        ids = [ModelTemplate(1, (3,)), ModelTemplate(1, (2, 3)), ModelTemplate(1, (2,))]
        return data, [fit(data, t, cfg) for t in ids]

    def test_winner_is_tolerable_and_minimal(self, fits_and_data):
        data, fits = fits_and_data
        tol = Tolerance(1e-4)
        report = mdl_compare(data, fits, tol)
        assert report.winner_id == "1.k3"
        winner = report.winner
        rep = {e.model_id: e for e in report.entries}
        for e in report.entries:
            if e.representable:
                assert e.quantized.total_bits >= winner.total_bits

    def test_tsv_shape(self, fits_and_data):
        data, fits = fits_and_data
        report = mdl_compare(data, fits, Tolerance(1e-4))
        lines = report.to_tsv().strip().split("\n")
        assert lines[0] == "model_id\tmq\tnq\ttb\tpct_size"
        cells = lines[1].split("\t")
        assert cells[0] == "1.k3"
        assert int(cells[3]) == report.winner.total_bits
