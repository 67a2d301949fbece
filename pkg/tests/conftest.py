import math

import numpy as np
from hypothesis import settings

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def close_vec(a, b, tol=1e-9):
    return math.hypot(a.x - b.x, a.y - b.y) <= tol


def angle_close(a, b, tol=1e-9):
    d = (a - b) % 360.0
    return min(d, 360.0 - d) <= tol


def homogeneous(rotation_deg, tx, ty):
    """3x3 matrix oracle for a planar rigid transform."""
    r = math.radians(rotation_deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
