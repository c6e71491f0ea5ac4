import numpy as np
import pytest

from pridec.lp import simplex_minimax


def brute_value(rows, block_sizes, offsets=None, res=60):
    """Grid evaluation of the minimax value for tiny cross-checks."""
    from pridec.dec import simplex_grid

    off = np.zeros(rows.shape[0]) if offsets is None else np.asarray(offsets)
    grids = [simplex_grid(size, res) for size in block_sizes]
    best = np.inf
    if len(grids) == 1:
        for x in grids[0]:
            best = min(best, (rows @ x + off).max())
    else:
        for x in grids[0]:
            for y in grids[1]:
                best = min(best, (rows @ np.concatenate([x, y]) + off).max())
    return best


class TestSimplexMinimax:
    def test_matching_pennies(self):
        sol = simplex_minimax(np.eye(2), [2])
        assert sol.value == pytest.approx(0.5)
        assert np.allclose(sol.blocks[0], [0.5, 0.5])
        assert np.allclose(sol.adversary, [0.5, 0.5])

    def test_pure_offsets(self):
        sol = simplex_minimax(np.zeros((2, 1)), [1], offsets=[0.3, 0.7])
        assert sol.value == pytest.approx(0.7)

    def test_two_blocks_decouple(self):
        rows = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
        sol = simplex_minimax(rows, [2, 2])
        assert sol.value == pytest.approx(0.0, abs=1e-9)

    def test_random_games_against_grid(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            J = int(rng.integers(1, 5))
            rows = rng.normal(size=(J, 3))
            sol = simplex_minimax(rows, [3])
            grid = brute_value(rows, [3])
            assert sol.value <= grid + 1e-9
            assert sol.value >= grid - 0.05  # grid is only accurate to its step

    def test_achieved_matches_value(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            J = int(rng.integers(1, 6))
            n1, n2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            rows = rng.normal(size=(J, n1 + n2)) * 10.0 ** rng.integers(-3, 3)
            sol = simplex_minimax(rows, [n1, n2])
            x = np.concatenate(sol.blocks)
            assert (rows @ x).max() == pytest.approx(sol.value, abs=1e-7 * max(1, abs(sol.value)))

    def test_adversary_weights_form_distribution(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            rows = rng.normal(size=(4, 3))
            sol = simplex_minimax(rows, [3])
            assert sol.adversary.min() >= 0
            assert sol.adversary.sum() == pytest.approx(1.0)
