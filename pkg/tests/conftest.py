import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from perturba.algebra import BlockComposition, random_skew
from perturba.numkernel import exp_skew, operator_norm


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_hermitian(n, rng, scale=1.0):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = (g + g.conj().T) / 2
    return scale * h / operator_norm(h)


def random_unitary(n, rng):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_projection(n, rank, rng):
    u = random_unitary(n, rng)
    d = np.zeros(n)
    d[:rank] = 1.0
    return (u * d) @ u.conj().T


def random_partial_isometry(n, rank, rng):
    u = random_unitary(n, rng)
    w = random_unitary(n, rng)
    d = np.zeros(n)
    d[:rank] = 1.0
    return (u * d) @ w.conj().T


def small_rotation(n, eps, rng):
    k = random_skew(n, rng)
    return exp_skew(k * eps / operator_norm(k))


def random_blockdiag_unitary(comp: BlockComposition, rng):
    out = np.zeros((comp.total, comp.total), dtype=complex)
    for k in range(1, comp.r + 1):
        sl = comp.block_slice(k)
        out[sl, sl] = random_unitary(comp.sizes[k - 1], rng)
    return out
