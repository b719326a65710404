"""
Tests for seed splitting and stage timing utilities.
"""

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellgen.core.exceptions import ValidationError
from bellgen.core.utils.performance import PerformanceProfiler, ProgressTracker
from bellgen.core.utils.seeding import MAX_SEED, make_rng, split_seed, validate_seed


class TestSeeding:
    """Test the seed-splitting contract."""

    @pytest.mark.parametrize("seed", [0, 1, MAX_SEED, np.uint64(5)])
    def test_valid_seeds(self, seed):
        assert validate_seed(seed) == int(seed)

    @pytest.mark.parametrize("seed", [-1, MAX_SEED + 1, 1.0, "3", True, None])
    def test_invalid_seeds(self, seed):
        with pytest.raises(ValidationError) as exc_info:
            validate_seed(seed, "mle.seed")
        assert exc_info.value.parameter == "mle.seed"

    def test_split_is_stable(self):
        assert split_seed(42, 4) == split_seed(42, 4)

    def test_split_prefix_stable(self):
        """Asking for more children does not change the earlier ones."""
        assert split_seed(42, 6)[:4] == split_seed(42, 4)

    @given(st.integers(min_value=0, max_value=MAX_SEED))
    def test_children_are_distinct_64_bit(self, seed):
        children = split_seed(seed, 8)
        assert len(set(children)) == 8
        assert all(0 <= child <= MAX_SEED for child in children)

    def test_different_parents_differ(self):
        assert split_seed(1, 3) != split_seed(2, 3)

    def test_make_rng_reproducible(self):
        assert make_rng(9).poisson(100.0, 5).tolist() == make_rng(9).poisson(100.0, 5).tolist()


class TestPerformanceProfiler:
    """Test stage timing."""

    def test_stage_records_duration(self):
        profiler = PerformanceProfiler()
        with profiler.stage("reconstruction"):
            sum(range(1000))
        summary = profiler.get_summary()
        assert set(summary) == {"reconstruction"}
        assert summary["reconstruction"] >= 0.0

    def test_stage_records_on_error(self):
        profiler = PerformanceProfiler()
        with pytest.raises(RuntimeError):
            with profiler.stage("fit"):
                raise RuntimeError("boom")
        assert "fit" in profiler.get_summary()

    def test_unfinished_stage_not_reported(self):
        profiler = PerformanceProfiler()
        profiler.start_operation("acquisition")
        assert profiler.get_summary() == {}

    def test_end_without_start(self):
        with pytest.raises(ValueError):
            PerformanceProfiler().end_operation("monte_carlo")


class TestProgressTracker:
    """Test Monte Carlo progress reporting."""

    def test_disabled_writes_nothing(self):
        stream = io.StringIO()
        tracker = ProgressTracker(10, "Resampling", enabled=False, stream=stream)
        for _ in range(10):
            tracker.update()
        tracker.finish()
        assert stream.getvalue() == ""
        assert tracker.current_item == 10

    def test_finish_shows_complete_bar(self):
        stream = io.StringIO()
        tracker = ProgressTracker(4, "Resampling", enabled=True, stream=stream)
        tracker.update(2)
        tracker.finish()
        text = stream.getvalue()
        assert "Resampling" in text
        assert "100.0%" in text
        assert "(4/4)" in text
        assert text.endswith("\n")

    def test_zero_items_never_shows(self):
        stream = io.StringIO()
        tracker = ProgressTracker(0, enabled=True, stream=stream)
        tracker.finish()
        assert stream.getvalue() == ""
