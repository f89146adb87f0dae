"""Unit tests for out-of-distribution scoring."""

import numpy as np
import pytest

from dlf_distill.core.errors import EmptyDataError
from dlf_distill.core.numerics import SeededRng
from dlf_distill.services.ood_service import mi_scores, ood_score
from tests.factories import make_multi_model


def _collapsed_body():
    """Student whose loadings are identically zero."""
    body = make_multi_model(c=3, q=2)
    body.params.weights[-1][3:, :] = 0.0
    body.params.biases[-1][3:] = 0.0
    return body


class TestOodScore:
    """Test AUROC of mutual-information scores."""

    def test_no_spread_gives_chance(self) -> None:
        """Test that Phi == 0 scores every input zero and AUROC 0.5."""
        body = _collapsed_body()
        rng = SeededRng(0)

        report = ood_score(body, rng.standard_normal(10, 2), 5.0 + rng.standard_normal(8, 2), 6, SeededRng(1))

        assert report.auroc == pytest.approx(0.5)
        assert report.scores_in == [0.0] * 10
        assert report.samples == 6

    def test_in_scores_ignore_out_set(self) -> None:
        """Test that the in-distribution scores use their own sub-stream."""
        body = make_multi_model(c=3)
        x_in = SeededRng(2).standard_normal(5, 2)

        a = ood_score(body, x_in, np.ones((3, 2)), 4, SeededRng(7))
        b = ood_score(body, x_in, np.ones((9, 2)), 4, SeededRng(7))

        assert a.scores_in == b.scores_in

    def test_scores_are_non_negative(self) -> None:
        """Test that mutual information never goes below zero."""
        body = make_multi_model(c=3)

        scores = mi_scores(body, SeededRng(3).standard_normal(20, 2), 8, SeededRng(0))

        assert scores.shape == (20,)
        assert np.all(scores >= 0.0)

    def test_empty_inputs(self) -> None:
        """Test that an empty input set is refused."""
        with pytest.raises(EmptyDataError):
            mi_scores(make_multi_model(c=3), np.zeros((0, 2)), 4, SeededRng(0))
