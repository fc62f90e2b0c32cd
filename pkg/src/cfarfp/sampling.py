"""Raw snapshot generation with reproducible per-trial random streams.

Each trial draws from its own Philox stream: the key is the master seed and
the high word of the 256-bit counter is the stream id. Streams therefore
never overlap and a trial's data depend only on ``(master_seed, stream_id)``,
not on chunking or worker count.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import linalg

#: stream ids are ``trial_index + block * BLOCK`` so experiment phases never share noise
BLOCK = 2**40


class Hypothesis(enum.Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(key=self.master_seed, counter=[0, 0, 0, self.stream_id])
        return np.random.Generator(bitgen)


@dataclass(frozen=True, eq=False)
class Snapshot:
    z: np.ndarray
    scatter: np.ndarray
    trial_index: int


def _white(gen: np.random.Generator, shape) -> np.ndarray:
    x = gen.standard_normal((2,) + tuple(shape))
    return (x[0] + 1j * x[1]) * np.sqrt(0.5)


def sample_complex_gaussian(chol_c, rng, size=None) -> np.ndarray:
    """Draw from ``CN(0, C)`` given the Cholesky factor of ``C``.

    ``rng`` is an :class:`RngStream` or a numpy ``Generator``. With ``size``
    the result has shape ``(size, N)``.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = np.shape(chol_c)[-1]
    if size is None:
        return chol_c @ _white(gen, (n,))
    return _white(gen, (size, n)) @ np.asarray(chol_c).T


def white_block(master_seed: int, stream_ids, n: int, k: int) -> np.ndarray:
    """Unit-power white noise for a batch of trials, shape ``(B, n, k + 1)``.

    Column 0 is the cell under test, columns 1..k the secondary data.
    """
    out = np.empty((len(stream_ids), n, k + 1), dtype=complex)
    for row, sid in enumerate(stream_ids):
        out[row] = _white(RngStream(master_seed, int(sid)).generator(), (n, k + 1))
    return out


def sample_batch(real, hyp: Hypothesis, k: int, master_seed: int, stream_ids, chol_c=None):
    """Draw ``(z, S)`` for a batch of trials.

    Parameters
    ----------
    real : ScenarioRealization
        Supplies ``p``, ``alpha`` and (unless ``chol_c`` overrides it) the
        disturbance covariance factor.
    hyp : Hypothesis
        Under ``H1`` the CUT gets ``alpha * p``; secondary data stay target-free.
    stream_ids : sequence of int
        One random stream per trial.

    Returns
    -------
    z : ndarray, shape (B, N)
    scatter : ndarray, shape (B, N, N)
    """
    chol = real.chol_c if chol_c is None else chol_c
    noise = chol @ white_block(master_seed, stream_ids, real.n, k)
    z = noise[:, :, 0]
    if hyp is Hypothesis.H1 and real.alpha != 0:
        z = z + real.alpha * real.p
    sec = noise[:, :, 1:]
    scatter = sec @ np.conj(np.swapaxes(sec, -1, -2))
    return z, scatter


def sample_snapshot(real, hyp: Hypothesis, cfg, trial_index: int, block: int = 0) -> Snapshot:
    z, scatter = sample_batch(real, hyp, cfg.k, cfg.seed, [trial_index + block * BLOCK])
    return Snapshot(z=z[0], scatter=scatter[0], trial_index=trial_index)
