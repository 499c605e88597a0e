"""Dense float64 primitives, Glorot initialisation and a central-difference oracle.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
The helpers here validate shapes and finiteness; the hot loops in the model
code call numpy directly on already-validated arrays.
"""

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ShapeError

DTYPE = np.float64


def as_float(x):
    """Array view of ``x`` as float64, keeping extended precision if already present."""
    arr = np.asarray(x)
    if arr.dtype == np.longdouble or arr.dtype == DTYPE:
        return arr
    return arr.astype(DTYPE)


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=DTYPE)
    if arr.ndim != 1:
        raise ShapeError(name, "(n,)", arr.shape)
    return arr


def as_matrix(m, name="matrix"):
    arr = np.asarray(m, dtype=DTYPE)
    if arr.ndim != 2:
        raise ShapeError(name, "(rows, cols)", arr.shape)
    return arr


def check_finite(arr, name="value"):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def matvec(m, v):
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError("matvec", f"matrix cols == vector length ({m.shape})", v.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        out = m @ v
    return check_finite(out, "matvec result")


def _binary(a, b, name):
    a = as_vector(a, f"{name} lhs")
    b = as_vector(b, f"{name} rhs")
    if a.shape != b.shape:
        raise ShapeError(name, a.shape, b.shape)
    return a, b


def sigmoid(v):
    return expit(as_float(v))


def tanh(v):
    return np.tanh(as_float(v))


def hadamard(a, b):
    a, b = _binary(a, b, "hadamard")
    return a * b


def add(a, b):
    a, b = _binary(a, b, "add")
    return check_finite(a + b, "add result")


def make_rng(seed):
    """Seeded counter-based generator (Philox); identical seeds give identical streams."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed, *keys):
    """Deterministic child seed for an independent stream (per condition, per epoch, ...)."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def glorot_bound(fan_in, fan_out):
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_uniform(rng, rows, cols, fan_in=None, fan_out=None):
    if rows <= 0 or cols <= 0:
        raise ShapeError("init_uniform", "positive dimensions", (rows, cols))
    fan_in = cols if fan_in is None else fan_in
    fan_out = rows if fan_out is None else fan_out
    if fan_in <= 0 or fan_out <= 0:
        raise ShapeError("init_uniform fans", "positive", (fan_in, fan_out))
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(DTYPE)


def finite_diff_grad(f, params, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``params`` (any shape).

    ``params`` is not modified.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    p = np.array(as_float(params), copy=True)
    flat = p.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(p)
        flat[i] = orig - h
        fm = f(p)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"objective is non-finite near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(p.shape)


def relative_error(a, b, floor=1e-8):
    """Elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
