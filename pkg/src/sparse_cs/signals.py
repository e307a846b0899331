"""Bernoulli-Gaussian signals, linear measurement, and signal densification."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidPrior, ParseError, SupportFull


@dataclass(frozen=True)
class PriorParams:
    """Parameters of the spike-and-slab prior (1-rho)*delta(x) + rho*N(mean, variance)."""

    rho: float
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidPrior(f"rho={self.rho} outside [0, 1]")
        if self.variance < 0.0:
            raise InvalidPrior(f"variance={self.variance} negative")


@dataclass
class Signal:
    """A length-N signal vector together with its nonzero support."""

    values: np.ndarray
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.support = np.flatnonzero(self.values)

    @property
    def n(self):
        return self.values.size

    @property
    def density(self):
        return self.support.size / self.values.size


@dataclass
class Measurement:
    """A length-M measurement vector y = F s."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def m(self):
        return self.values.size


def sample_signal(n, prior, rng_seed):
    """Draw a length-n signal with iid components: zero w.p. 1-rho, else
    Gaussian(mean, variance)."""
    rng = np.random.default_rng(rng_seed)
    mask = rng.random(n) < prior.rho
    draws = rng.normal(prior.mean, np.sqrt(prior.variance), size=n)
    return Signal(np.where(mask, draws, 0.0))


def sample_signal_fixed(n, count, prior, rng_seed):
    """Draw a length-n signal with exactly `count` nonzeros at uniformly
    chosen positions, values Gaussian(mean, variance)."""
    if count > n:
        raise SupportFull(f"asked for {count} nonzeros in a length-{n} signal")
    rng = np.random.default_rng(rng_seed)
    values = np.zeros(n)
    if count > 0:
        pos = rng.choice(n, size=count, replace=False)
        values[pos] = rng.normal(prior.mean, np.sqrt(prior.variance), size=count)
    return Signal(values)


def measure(matrix, signal):
    """Compute y = F s by a single pass over the edge list. Cost O(|edges|)."""
    s = signal.values
    if s.size != matrix.n_cols:
        raise DimensionMismatch(
            f"signal length {s.size} != matrix n_cols {matrix.n_cols}"
        )
    y = np.bincount(
        matrix.row, weights=matrix.val * s[matrix.col], minlength=matrix.n_rows
    )
    return Measurement(y)


def densify(signal, extra, prior, rng):
    """Return a copy of `signal` with `extra` uniformly chosen zero positions
    replaced by fresh Gaussian(mean, variance) draws.

    Existing nonzeros are untouched, so successive calls produce nested
    supports. `rng` is a numpy Generator and is advanced in place.
    """
    if extra == 0:
        return Signal(signal.values.copy())
    zeros = np.flatnonzero(signal.values == 0.0)
    if extra > zeros.size:
        raise SupportFull(
            f"asked for {extra} new nonzeros but only {zeros.size} zero slots"
        )
    picked = rng.choice(zeros.size, size=extra, replace=False)
    values = signal.values.copy()
    values[zeros[picked]] = rng.normal(prior.mean, np.sqrt(prior.variance), size=extra)
    return Signal(values)


def save_vector(path, values, header_comment=None):
    """Write a signal/measurement: optional '#' provenance line, a length
    header, then one value per line at 17 significant digits."""
    lines = []
    if header_comment is not None:
        lines.append(f"# {header_comment}")
    lines.append(str(len(values)))
    lines.extend(f"{v:.17g}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vector(path):
    """Read a vector written by save_vector. Returns a float64 array."""
    with open(path) as fh:
        raw = fh.readlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(raw)]
    rows = [(no, ln) for no, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty vector file")
    no, head = rows[0]
    try:
        n = int(head)
    except ValueError:
        raise ParseError(f"bad length header {head!r}", line=no) from None
    body = rows[1:]
    if len(body) != n:
        raise DimensionMismatch(f"header says {n} values, file has {len(body)}")
    out = np.empty(n, dtype=np.float64)
    for k, (no, ln) in enumerate(body):
        try:
            out[k] = float(ln)
        except ValueError:
            raise ParseError(f"bad value {ln!r}", line=no) from None
    return out
