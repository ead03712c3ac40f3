"""Seed-deterministic parameter initialization (fan-in-scaled uniform)."""

import numpy as np

from .tensor import Parameter


def uniform_param(rng, shape, fan_in, name, dtype, scale=1.0):
    bound = scale / np.sqrt(fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Parameter(data, name)


def conv_pair(rng, name, c_out, c_in, k, dtype, scale=1.0):
    """Weight and bias for a k x k convolution, drawn in a fixed order."""
    fan_in = c_in * k * k
    w = uniform_param(rng, (c_out, c_in, k, k), fan_in, name + ".w", dtype, scale)
    b = uniform_param(rng, (c_out,), fan_in, name + ".b", dtype, scale)
    return w, b


def square_matrix(rng, name, n, dtype):
    return uniform_param(rng, (n, n), n, name, dtype)
