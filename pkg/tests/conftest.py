import numpy as np
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qpnls.field import FourierField


@st.composite
def fields(draw, d=None, b=None, max_radius=3, real=None):
    """Random FourierField with small integer-ish coefficients."""
    d = draw(st.integers(1, 2)) if d is None else d
    b = draw(st.integers(1, 2)) if b is None else b
    radius = draw(st.integers(1, max_radius))
    shape = (2 * radius - 1,) * (d + b)
    elems = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
    re = draw(hnp.arrays(np.float64, shape, elements=elems))
    real = draw(st.booleans()) if real is None else real
    if real:
        return FourierField(re, d, b)
    im = draw(hnp.arrays(np.float64, shape, elements=elems))
    return FourierField(re + 1j * im, d, b)


@st.composite
def field_pairs(draw, max_radius=3, real=None):
    d = draw(st.integers(1, 2))
    b = draw(st.integers(1, 2))
    return (draw(fields(d, b, max_radius, real)), draw(fields(d, b, max_radius, real)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
