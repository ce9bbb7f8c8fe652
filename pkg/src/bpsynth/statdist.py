"""Seeded random streams and the handful of scalar distributions the
forecasting pipeline samples from or evaluates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class RandomStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Backed by numpy's Philox generator, so stream ``k`` yields the same
    sequence no matter which process or thread consumes it.
    """

    def __init__(self, master_seed: int, stream_id: int | tuple[int, ...] = 0):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.master_seed = int(master_seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *key: int) -> "RandomStream":
        """Independent stream whose id extends this one's."""
        return RandomStream(self.master_seed, self.stream_id + tuple(key))

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class StudentT:
    """Location-scale Student-t; ``scale`` is variance-like (the DLM ``q``)."""

    location: float
    scale: float
    dof: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"StudentT scale must be positive, got {self.scale}")
        if not self.dof > 0:
            raise ValueError(f"StudentT dof must be positive, got {self.dof}")

    def mean(self) -> float:
        return self.location

    def sample(self, stream: RandomStream, size=None):
        return sample_student_t(stream, self.location, self.scale, self.dof, size=size)


def sample_normal(stream: RandomStream, mean, variance, size=None):
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ValueError("normal variance must be non-negative")
    z = stream.generator.standard_normal(size=size if size is not None else np.broadcast(mean, variance).shape)
    out = mean + np.sqrt(variance) * z
    return float(out) if np.ndim(out) == 0 else out


def sample_gamma(stream: RandomStream, shape, rate, size=None):
    """Gamma draw parameterised by shape and *rate* (mean ``shape / rate``)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma shape and rate must be positive")
    out = stream.generator.gamma(shape, 1.0 / rate, size=size)
    return float(out) if np.ndim(out) == 0 else out


def sample_student_t(stream: RandomStream, location, scale, dof, size=None):
    # scale mixture: x = loc + z * sqrt(scale / lam), lam ~ G(dof/2, dof/2)
    dof = np.asarray(dof, dtype=float)
    lam = sample_gamma(stream, dof / 2.0, dof / 2.0, size=size)
    z = stream.generator.standard_normal(size=np.shape(lam))
    out = location + z * np.sqrt(np.asarray(scale) / lam)
    return float(out) if np.ndim(out) == 0 else out


def student_t_logpdf(x, d: StudentT):
    return _t_logpdf(x, d.location, d.scale, d.dof)


def _t_logpdf(x, location, scale, dof):
    """Vectorised location-scale Student-t log density."""
    x = np.asarray(x, dtype=float)
    z2 = (x - location) ** 2 / scale
    out = (
        gammaln((dof + 1.0) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * np.log(dof * np.pi * scale)
        - 0.5 * (dof + 1.0) * np.log1p(z2 / dof)
    )
    return float(out) if np.ndim(out) == 0 else out


def kl_normal(mean1, var1, mean2, var2):
    """KL(N(mean1, var1) || N(mean2, var2))."""
    if np.any(np.asarray(var1) <= 0) or np.any(np.asarray(var2) <= 0):
        raise ValueError("variances must be positive")
    out = 0.5 * (np.log(var2 / var1) + var1 / var2 + (mean1 - mean2) ** 2 / var2 - 1.0)
    return float(out) if np.ndim(out) == 0 else out
