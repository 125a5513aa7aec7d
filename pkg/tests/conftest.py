import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pnpkit", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pnpkit")


def spatial_circular_convolve(x, kernel):
    """Nested-loop circular convolution, kernel centered on each output pixel."""
    x = np.asarray(x, dtype=np.float64)
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    h, w = x.shape[:2]
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    acc = acc + kernel[a, b] * x[(i - (a - ch)) % h, (j - (b - cw)) % w]
            out[i, j] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    """Log one acceptance verdict; the lines are echoed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}"
    ACCEPTANCE_LINES.append(line + (f" ({detail})" if detail else ""))
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
