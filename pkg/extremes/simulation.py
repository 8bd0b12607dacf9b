"""
Simulation of randomly stopped extremes and goodness-of-fit diagnostics.

Samples are drawn directly: for every index i a count n_i comes from the
stopping pgf, then n_i base variates, and the maximum (or minimum) is kept.
Indices are split into blocks of BLOCK; block b draws from
Generator(Philox(SeedSequence(seed, spawn_key=(b,)))), so a sample depends
only on (seed, generator spec, m) and not on how blocks are scheduled.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from extremes.base_distributions import model_from_spec, model_spec
from extremes.errors import ConfigError, ParameterError
from extremes.pgf_core import pgf_pmf_block, pgf_sample
from extremes.stopping_catalog import pgf_spec, stopping_from_spec
from extremes.utils import write_json

logger = logging.getLogger(__name__)

BLOCK = 1024
GENERATOR = "numpy.random.Philox"

REDUCERS = {"max": np.maximum, "min": np.minimum}


def block_generator(seed, block):
    """Philox stream of one block of indices."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass
class StoppedSample:
    values: np.ndarray
    counts: Optional[np.ndarray]
    mode: str
    seed: int
    generator_spec: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.values)

    def to_frame(self):
        frame = pd.DataFrame({"y": self.values})
        if self.counts is not None:
            frame["n"] = self.counts
        return frame


def _simulate_block(stopping, base, mode, seed, block, size, tail_policy):
    rng = block_generator(seed, block)
    counts = np.asarray(pgf_sample(stopping, rng, size=size, tail_policy=tail_policy), dtype=np.int64)
    draws = np.asarray(base.sample(rng, int(counts.sum())), dtype=float)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return REDUCERS[mode].reduceat(draws, offsets), counts


def simulate_stopped(stopping, base, m, mode="max", seed=0, keep_counts=True, workers=1, tail_policy="clip"):
    """
    Draw m randomly stopped extremes.

    Parameters:
    stopping (Pgf): Count model N.
    base (ContinuousModel): Model of the stopped observations X.
    m (int): Number of extremes, at least 1.
    mode (str): "max" or "min".
    seed (int): Root seed.
    keep_counts (bool): Retain the drawn n_i.
    workers (int): Threads generating blocks; results do not depend on it.
    tail_policy (str): Passed to the count sampler.

    Returns:
    StoppedSample: The extremes and, optionally, their counts.
    """
    if int(m) != m or m < 1:
        raise ParameterError(f"Invalid sample size: m={m}")
    if mode not in REDUCERS:
        raise ParameterError(f"Unknown extreme mode: {mode}")
    m = int(m)
    sizes = [min(BLOCK, m - start) for start in range(0, m, BLOCK)]

    def run(block):
        return _simulate_block(stopping, base, mode, seed, block, sizes[block], tail_policy)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(block) for block in range(len(sizes))]

    values = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts]) if keep_counts else None
    logger.info("Simulated %d stopped %s values of %s under %s", m, mode, base.label, stopping.label)
    spec = {
        "stopping": pgf_spec(stopping),
        "base": model_spec(base),
        "mode": mode,
        "m": m,
        "generator": GENERATOR,
        "block": BLOCK,
    }
    return StoppedSample(values, counts, mode, int(seed), spec)


def regenerate(sample_or_spec, seed=None, keep_counts=True):
    """Rebuild a sample from its seed and generator spec."""
    if isinstance(sample_or_spec, StoppedSample):
        spec, seed = sample_or_spec.generator_spec, sample_or_spec.seed
    else:
        spec = sample_or_spec
    if seed is None:
        raise ParameterError("Regeneration needs a seed")
    return simulate_stopped(
        stopping_from_spec(spec["stopping"]),
        model_from_spec(spec["base"]),
        spec["m"],
        mode=spec["mode"],
        seed=seed,
        keep_counts=keep_counts,
    )


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_sample(sample, path):
    """Write y[,n] as CSV and the seed and generator spec as a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sample.to_frame().to_csv(path, index=False, float_format="%.17g")
    write_json({"seed": sample.seed, "mode": sample.mode, "generator_spec": sample.generator_spec},
               sidecar_path(path))
    logger.info("Sample saved to '%s'", path)
    return path


def read_sample(path):
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    with open(sidecar_path(path)) as file:
        meta = json.load(file)
    counts = frame["n"].to_numpy(dtype=np.int64) if "n" in frame else None
    return StoppedSample(frame["y"].to_numpy(dtype=float), counts, meta["mode"], meta["seed"],
                         meta["generator_spec"])


def read_data(path):
    """
    Read observations from one value per line, or from the "y" column of a CSV
    with a header row.
    """
    path = Path(path)
    with open(path) as file:
        first = file.readline().strip()
    if not first:
        raise ConfigError(f"Data file is empty: {path}")
    try:
        float(first.split(",")[0])
        header = False
    except ValueError:
        header = True
    if header:
        frame = pd.read_csv(path, float_precision="round_trip")
        if "y" not in frame:
            raise ConfigError(f"Data file {path} has a header but no 'y' column: {list(frame.columns)}")
        column = frame["y"]
    else:
        column = pd.read_csv(path, header=None, usecols=[0], float_precision="round_trip")[0]
    try:
        return column.to_numpy(dtype=float)
    except ValueError as err:
        raise ConfigError(f"Non-numeric observations in {path}: {err}") from err


def ks_distance(sample, cdf):
    """Kolmogorov-Smirnov distance between the empirical cdf of ``sample`` and ``cdf``."""
    values = np.sort(np.asarray(sample, dtype=float))
    n = values.size
    if n == 0:
        raise ParameterError("KS distance of an empty sample")
    fitted = np.asarray(cdf(values), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - fitted)), np.max(np.abs((i - 1) / n - fitted))))


def ks_critical_value(n, level=0.01):
    """Asymptotic KS critical value, about 1.63/sqrt(n) at the 1% level."""
    return float(stats.kstwobign.isf(level) / np.sqrt(n))


def count_consistency(sample, pgf, n_max=10):
    """
    Compare the empirical pmf of retained counts with the stopping pmf.

    Returns:
    pd.DataFrame: Columns n, empirical, expected, stderr, z for n = 1..n_max.
    """
    if sample.counts is None:
        raise ParameterError("Sample was drawn without keeping counts")
    m = len(sample.counts)
    n = np.arange(1, n_max + 1)
    expected = np.asarray(pgf_pmf_block(pgf, n_max), dtype=float)[1:]
    empirical = np.array([np.mean(sample.counts == k) for k in n])
    stderr = np.sqrt(expected * (1.0 - expected) / m)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, (empirical - expected) / stderr, np.where(empirical == expected, 0.0, np.inf))
    return pd.DataFrame({"n": n, "empirical": empirical, "expected": expected, "stderr": stderr, "z": z})
