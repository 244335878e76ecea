import sys

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spd_matrices(n_values=(3, 4, 5), max_cond=1e4):
    """Hypothesis strategy for well-conditioned SPD matrices ``A A^T + c I``."""

    @st.composite
    def build(draw):
        n = draw(st.sampled_from(n_values))
        a = draw(arrays(np.float64, (n, n), elements=st.floats(-3, 3, allow_nan=False)))
        shift = draw(st.floats(0.05, 3.0))
        m = a @ a.T + shift * np.eye(n)
        w = np.linalg.eigvalsh(m)
        if w[-1] / w[0] > max_cond:
            m = m + w[-1] / max_cond * np.eye(n)
        return 0.5 * (m + m.T)

    return build()


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
