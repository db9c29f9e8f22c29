import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from zcalo.errors import DegenerateSampleError, UnphysicalInputError
from zcalo.report import (Histogram, core_width, emit_csv, emit_panels,
                          emit_plot, fmt9, parse_csv)


class TestHistogram:
    def test_fill_at_lo_goes_to_first_bin(self):
        h = Histogram(n_bins=10, lo=0.0, hi=1.0)
        h.fill(0.0)
        assert h.counts[0] == 1

    def test_fill_at_hi_goes_to_overflow(self):
        h = Histogram(n_bins=10, lo=0.0, hi=1.0)
        h.fill(1.0)
        assert h.overflow == 1
        assert h.counts.sum() == 0

    def test_total_conserved(self):
        rng = np.random.default_rng(1)
        h = Histogram(n_bins=7, lo=-1.0, hi=1.0)
        for _ in range(1000):
            h.fill(rng.normal(0, 1.5))
        assert h.total() == 1000

    def test_non_finite_rejected(self):
        h = Histogram(n_bins=2, lo=0, hi=1)
        with pytest.raises(UnphysicalInputError):
            h.fill(float("nan"))

    def test_merge(self):
        h1 = Histogram(n_bins=4, lo=0, hi=1)
        h2 = Histogram(n_bins=4, lo=0, hi=1)
        h1.fill(0.1)
        h2.fill(0.9)
        h2.fill(2.0)
        h1.merge(h2)
        assert h1.total() == 3

    def test_incompatible_merge_rejected(self):
        h1 = Histogram(n_bins=4, lo=0, hi=1)
        h2 = Histogram(n_bins=5, lo=0, hi=1)
        with pytest.raises(ValueError):
            h1.merge(h2)


class TestCoreWidth:
    def test_standard_normal_unbiased(self):
        rng = np.random.default_rng(2)
        fit = core_width(rng.normal(0.0, 1.0, 100_000))
        assert fit.mean == pytest.approx(0.0, abs=0.02)
        assert fit.sigma == pytest.approx(1.0, abs=0.02)

    def test_unbiased_at_ten_thousand(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            fit = core_width(np.random.default_rng(seed).normal(0, 1, 10_000))
            assert fit.sigma == pytest.approx(1.0, rel=0.02)

    def test_peak_on_uniform_pedestal(self):
        # mixture Monte Carlo oracle: narrow unit peak + 10x wider pedestal
        rng = np.random.default_rng(4)
        n = 100_000
        peak = rng.normal(0.0, 1.0, int(n * 0.8))
        pedestal = rng.uniform(-10.0, 10.0, int(n * 0.2))
        fit = core_width(np.concatenate([peak, pedestal]))
        assert fit.sigma == pytest.approx(1.0, rel=0.10)

    def test_minimum_sample_size(self):
        with pytest.raises(DegenerateSampleError):
            core_width(np.zeros(49) + np.arange(49))
        # exactly 50 distinct samples is fine
        core_width(np.linspace(0, 1, 50))

    def test_identical_samples_rejected(self):
        with pytest.raises(DegenerateSampleError):
            core_width(np.full(100, 3.14))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(0, 1, 20_000)
        f1 = core_width(x)
        f2 = core_width(5.0 * x + 2.0)
        assert f2.sigma == pytest.approx(5.0 * f1.sigma, rel=1e-9)
        assert f2.mean == pytest.approx(5.0 * f1.mean + 2.0, abs=1e-9)


class TestCsv:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(6)
        h = Histogram(n_bins=20, lo=4.9, hi=5.9)
        for _ in range(500):
            h.fill(rng.uniform(4.5, 6.2))
        text = emit_csv(h)
        back = parse_csv(text)
        assert np.array_equal(back.counts, h.counts)
        assert back.underflow == h.underflow
        assert back.overflow == h.overflow
        assert emit_csv(back) == text

    def test_empty_histogram(self):
        h = Histogram(n_bins=3, lo=0.0, hi=3.0)
        text = emit_csv(h)
        lines = text.splitlines()
        assert lines[0] == "bin_lo,bin_hi,count"
        assert lines[1] == "0,1,0"
        assert lines[-1] == "overflow,,0"

    def test_determinism(self):
        h = Histogram(n_bins=5, lo=0, hi=1)
        h.fill(0.5, weight=1.23456789012)
        assert emit_csv(h) == emit_csv(h)

    def test_nine_significant_digits(self):
        assert fmt9(1.0 / 3.0) == "0.333333333"
        assert fmt9(123456789.123) == "123456789"


class TestPlot:
    def _hist(self, seed):
        rng = np.random.default_rng(seed)
        h = Histogram(n_bins=25, lo=0, hi=1)
        for _ in range(300):
            h.fill(rng.uniform(0, 1))
        return h

    def test_two_series_two_polylines(self):
        svg = emit_plot([self._hist(1), self._hist(2)], ["a", "b"])
        root = ET.fromstring(svg)
        polylines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
        assert len(polylines) == 2

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            emit_plot([], [])

    def test_well_formed_xml(self):
        svg = emit_plot([self._hist(3)], ["one"], title="check")
        ET.fromstring(svg)  # raises on malformed markup

    def test_incompatible_binning_rejected(self):
        h1 = Histogram(n_bins=10, lo=0, hi=1)
        h2 = Histogram(n_bins=11, lo=0, hi=1)
        with pytest.raises(ValueError):
            emit_plot([h1, h2], ["a", "b"])

    def test_panels_stack(self):
        svg = emit_panels([([self._hist(4)], ["a"], "p1", "x"),
                           ([self._hist(5)], ["b"], "p2", "x")])
        root = ET.fromstring(svg)
        polylines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
        assert len(polylines) == 2
        assert int(root.get("height")) == 840
