"""Shared fixtures and independent reference implementations for the tests."""

import sys

import numpy as np
import pytest

from cake.video import SamplingGeometry


def direct_circular_convolution(frame, kernel):
    """Quadruple-loop circular convolution: out[i] = sum_j frame[j] kernel[i - j]."""
    n1, n2 = frame.shape
    out = np.zeros((n1, n2))
    for i1 in range(n1):
        for i2 in range(n2):
            acc = 0.0
            for j1 in range(n1):
                for j2 in range(n2):
                    acc += frame[j1, j2] * kernel[(i1 - j1) % n1, (i2 - j2) % n2]
            out[i1, i2] = acc
    return out


def circulant_matrix(kernel):
    """Dense BCCB matrix of circular convolution with ``kernel`` (row-major pixels)."""
    n1, n2 = kernel.shape
    i1, i2 = np.divmod(np.arange(n1 * n2), n2)
    return kernel[(i1[:, None] - i1[None, :]) % n1, (i2[:, None] - i2[None, :]) % n2]


def downsample_matrix(geometry, kind, phase=None, signs=None):
    """Dense S (subsample), D (integrate) or D diag(s) (random demodulation)."""
    g = geometry
    mat = np.zeros((g.m, g.n))
    p1, p2 = (g.d1 - 1, g.d2 - 1) if phase is None else phase
    for l1 in range(g.m1):
        for l2 in range(g.m2):
            row = l1 * g.m2 + l2
            if kind == "subsample":
                mat[row, (l1 * g.d1 + p1) * g.n2 + l2 * g.d2 + p2] = 1.0
            else:
                for a in range(g.d1):
                    for b in range(g.d2):
                        mat[row, (l1 * g.d1 + a) * g.n2 + l2 * g.d2 + b] = 1.0
    if kind == "random_demod":
        mat = mat * signs.ravel()[None, :]
    return mat


def dense_cake_matrix(geometry, masks, kind="subsample", phase=None, signs=None):
    """Explicit A = [S H_t] arranged by exposure block, built without FFTs."""
    g = geometry
    down = downsample_matrix(g, kind, phase, signs)
    A = np.zeros((g.m * g.M, g.n * g.N))
    for t in range(g.N):
        k = t // g.B
        A[k * g.m:(k + 1) * g.m, t * g.n:(t + 1) * g.n] = down @ circulant_matrix(masks[t])
    return A


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_geometry():
    return SamplingGeometry(8, 8, 4, 2, 2, 2)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[k])
