"""Data generation and ingestion.

Samplers are pure functions of ``(seed, index)``: draws are produced in
fixed-size blocks, block ``b`` seeded by ``SeedSequence(seed, spawn_key=(b,))``,
so ``sample(start, count)`` returns the same rows however the stream is cut.
Within a block the confounder, the observation and the target use disjoint
child streams.
"""
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .solvers import DirichletPrior, GaussianHierarchy

BLOCK = 512


class Scenario:
    """Base class for block-seeded samplers of ``(X, Y, Z)`` triples."""

    block_size = BLOCK

    def __init__(self, seed):
        self.seed = int(seed)
        self._cache = {}

    def _streams(self, b, k=3):
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(b),))
        return [np.random.default_rng(c) for c in ss.spawn(k)]

    def _draw_block(self, b):
        raise NotImplementedError

    def _block(self, b):
        blk = self._cache.get(b)
        if blk is None:
            blk = self._draw_block(b)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[b] = blk
        return blk

    def sample(self, start, count):
        """Rows ``start .. start+count-1`` of the stream as a dict of arrays."""
        if count < 1:
            raise ConfigError("count must be at least 1")
        bs = self.block_size
        b0, b1 = start // bs, (start + count - 1) // bs
        parts = [self._block(b) for b in range(b0, b1 + 1)]
        lo = start - b0 * bs
        return {k: np.concatenate([p[k] for p in parts])[lo:lo + count] for k in parts[0]}

    # network input and the outcome set carried by an observation
    def features(self, X):
        return np.asarray(X, dtype=np.float64)

    def obs_outcomes(self, X):
        raise ConfigError(f"{type(self).__name__} observations do not contain outcome samples")

    def observation_only(self):
        return ObservationSource(self)


class ObservationSource:
    """View of a scenario that can hand out observations but never targets.

    The ERM and DRO trainers accept only this type, so the target stream of
    the underlying scenario is unreachable from them.
    """

    __slots__ = ("_draw", "features", "obs_outcomes", "seed")

    def __init__(self, scenario):
        draw = scenario.sample
        self._draw = lambda start, count: draw(start, count)["X"]
        self.features = scenario.features
        self.obs_outcomes = scenario.obs_outcomes
        self.seed = scenario.seed

    def observations(self, start, count):
        return self._draw(start, count)


class GaussianScenario(Scenario):
    """``Z ~ N(mu_z, var_z)``; ``X`` = n i.i.d. ``N(Z, var_y)`` draws; ``Y ~ N(Z, var_y)``."""

    def __init__(self, h=None, seed=0):
        super().__init__(seed)
        self.h = h or GaussianHierarchy()

    def _draw_block(self, b):
        rz, rx, ry = self._streams(b)
        h, bs = self.h, self.block_size
        Z = rz.normal(h.mu_z, math.sqrt(h.var_z), size=bs)
        sd = math.sqrt(h.var_y)
        X = Z[:, None] + sd * rx.standard_normal((bs, h.n))
        Y = Z + sd * ry.standard_normal(bs)
        return {"X": X, "Y": Y, "Z": Z}

    def obs_outcomes(self, X):
        return np.asarray(X, dtype=np.float64)


def _categorical(rng, probs, shape):
    """Levels 1..d drawn row-wise from ``probs`` (rows, d); ``shape`` = (rows, k)."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(shape)
    return (u[:, :, None] >= cdf[:, None, :]).sum(axis=2) + 1


class NewsvendorScenario(Scenario):
    """``Z ~ Dirichlet(alpha)``; ``X`` = n categorical demands; ``Y`` one more.

    ``per_z`` consecutive rows share one draw of Z.  Network features are
    the demand histogram ``counts / n``, optionally centered at the uniform
    frequency ``1/d`` and multiplied by ``feature_scale``.
    """

    def __init__(self, prior=None, n=20, seed=0, per_z=1, center=False, feature_scale=1.0):
        super().__init__(seed)
        self.prior = prior or DirichletPrior.uniform(11)
        self.n = int(n)
        self.per_z = int(per_z)
        if self.per_z < 1:
            raise ConfigError("per_z must be positive")
        if not feature_scale > 0:
            raise ConfigError("feature_scale must be positive")
        self.center = bool(center)
        self.feature_scale = float(feature_scale)
        self.block_size = self.per_z * (BLOCK // self.per_z or 1)

    @property
    def d(self):
        return self.prior.d

    def _draw_block(self, b):
        rz, rx, ry = self._streams(b)
        nz = self.block_size // self.per_z
        Z = np.repeat(rz.dirichlet(self.prior.alpha, size=nz), self.per_z, axis=0)
        X = _categorical(rx, Z, (self.block_size, self.n))
        Y = _categorical(ry, Z, (self.block_size, 1))[:, 0]
        return {"X": X, "Y": Y, "Z": Z}

    def counts(self, X):
        X = np.asarray(X, dtype=np.int64)
        out = np.zeros((X.shape[0], self.d))
        np.add.at(out, (np.repeat(np.arange(X.shape[0]), X.shape[1]), X.ravel() - 1), 1.0)
        return out

    def features(self, X):
        F = self.counts(X) / self.n
        if self.center:
            F -= 1.0 / self.d
        return F * self.feature_scale

    def obs_outcomes(self, X):
        return np.asarray(X, dtype=np.int64)


class ConditionalTargets(Scenario):
    """Replace each sampled target by its full conditional law given Z.

    For the newsvendor model ``P(Y = j | Z) = Z_j`` and ``Y`` is independent
    of ``X`` given ``Z``, so scoring a decision against every level weighted
    by ``Z`` has the same expectation as scoring it against one draw of
    ``Y``, with less variance.  Rows carry ``Y`` = levels 1..d and ``W`` = Z.
    """

    def __init__(self, scenario):
        super().__init__(scenario.seed)
        self.base = scenario
        self.features = scenario.features
        self.obs_outcomes = scenario.obs_outcomes

    def sample(self, start, count):
        data = dict(self.base.sample(start, count))
        Z = np.asarray(data["Z"], dtype=np.float64)
        data["Y"] = np.tile(np.arange(1, Z.shape[1] + 1), (Z.shape[0], 1))
        data["W"] = Z
        return data


class ArrayScenario(Scenario):
    """Finite pool of ``(X, Y)`` rows served in seeded per-epoch shuffles.

    ``X`` is used as network input directly.  Optional ``W`` holds outcome
    weights when each row of ``Y`` is a set of weighted outcomes.
    """

    def __init__(self, X, Y, seed=0, shuffle=True, W=None):
        super().__init__(seed)
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        self.W = None if W is None else np.asarray(W, dtype=np.float64)
        if len(self.X) != len(self.Y) or len(self.X) == 0:
            raise ConfigError("X and Y must be nonempty with equal row counts")
        self.shuffle = shuffle

    def _indices(self, start, count):
        n = len(self.X)
        idx = np.arange(start, start + count)
        if not self.shuffle:
            return idx % n
        epochs = idx // n
        out = np.empty(count, dtype=np.int64)
        for e in np.unique(epochs):
            perm = np.random.default_rng([self.seed, int(e)]).permutation(n)
            m = epochs == e
            out[m] = perm[idx[m] % n]
        return out

    def sample(self, start, count):
        i = self._indices(start, count)
        out = {"X": self.X[i], "Y": self.Y[i]}
        if self.W is not None:
            out["W"] = self.W[i]
        return out


def sample_gaussian(h, seed, count):
    return GaussianScenario(h, seed).sample(0, count)


def sample_newsvendor(prior, n, seed, count, per_z=1):
    return NewsvendorScenario(prior, n, seed, per_z).sample(0, count)


# --------------------------------------------------------------------------
# wind data
# --------------------------------------------------------------------------

@dataclass
class WindRecord:
    timestamp: np.datetime64
    active_power: float
    wind_speed: float
    wind_direction: float
    temperature: float
    valid: bool = True


@dataclass
class WindSeries:
    """Columnar wind records in chronological order."""

    timestamps: np.ndarray          # datetime64[m]
    power: np.ndarray
    speed: np.ndarray
    direction: np.ndarray
    temperature: np.ndarray
    dropped: int = 0
    raw_count: int = 0

    def __len__(self):
        return len(self.timestamps)

    def record(self, i):
        return WindRecord(self.timestamps[i], float(self.power[i]), float(self.speed[i]),
                          float(self.direction[i]), float(self.temperature[i]))

    def records(self):
        return [self.record(i) for i in range(len(self))]

    def take(self, idx):
        return WindSeries(self.timestamps[idx], self.power[idx], self.speed[idx],
                          self.direction[idx], self.temperature[idx],
                          dropped=self.dropped, raw_count=self.raw_count)

    def thin(self, frequency, offset=0):
        """Keep every ``frequency/10``-th record, starting at ``offset``."""
        return self.take(slice(offset, None, _stride(frequency)))

    def split(self, boundary=None, fraction=0.8):
        """Chronological train/test split at a timestamp or a row fraction."""
        if boundary is None:
            cut = int(round(fraction * len(self)))
        else:
            cut = int(np.searchsorted(self.timestamps, np.datetime64(boundary, "m"), side="left"))
        return self.take(slice(0, cut)), self.take(slice(cut, None))


def _stride(frequency):
    if frequency not in (10, 30, 60):
        raise ConfigError(f"frequency must be 10, 30 or 60 minutes, got {frequency}")
    return frequency // 10


@dataclass
class WindSyntheticParams:
    """AR(1) wind speed with a direction-dependent mean and diurnal cycle."""

    mean_speed: float = 6.0
    direction_effect: float = 1.5
    diurnal_speed: float = 0.8
    ar: float = 0.98
    innovation_sd: float = 0.45
    temp_mean: float = 15.0
    temp_amplitude: float = 6.0
    temp_noise: float = 0.5
    direction_sd: float = 6.0
    power_noise: float = 0.04
    capacity: float = 2.0
    cut_in: float = 3.0
    rated: float = 12.0
    cut_out: float = 25.0
    start: str = "2018-01-01T00:00"


def power_curve(speed, p):
    """Cubic ramp between cut-in and rated speed, flat to cut-out, 0 beyond."""
    s = np.asarray(speed, dtype=np.float64)
    ramp = (s ** 3 - p.cut_in ** 3) / (p.rated ** 3 - p.cut_in ** 3)
    out = p.capacity * np.clip(ramp, 0.0, 1.0)
    return np.where((s < p.cut_in) | (s >= p.cut_out), 0.0, out)


def wind_synthetic(params=None, seed=0, count=10_000):
    """Synthetic 10-minute wind records; power always within [0, capacity]."""
    if count < 1:
        raise ConfigError("count must be at least 1")
    p = params or WindSyntheticParams()
    rs, rd, rt, rp = [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(4)]
    hours = np.arange(count) / 6.0
    day = 2.0 * np.pi * hours / 24.0
    direction = np.mod(180.0 + np.cumsum(rd.normal(0.0, p.direction_sd, count)), 360.0)
    base = (p.mean_speed + p.direction_effect * np.cos(np.deg2rad(direction - 225.0))
            + p.diurnal_speed * np.sin(day - np.pi / 2))
    xi = rs.normal(0.0, p.innovation_sd, count)
    e = np.empty(count)
    e[0] = xi[0] / math.sqrt(1.0 - p.ar ** 2)
    for t in range(1, count):
        e[t] = p.ar * e[t - 1] + xi[t]
    speed = np.maximum(base + e, 0.0)
    temperature = p.temp_mean + p.temp_amplitude * np.sin(day - 2.0) + rt.normal(0.0, p.temp_noise, count)
    power = np.clip(power_curve(speed, p) + rp.normal(0.0, p.power_noise, count), 0.0, p.capacity)
    ts = np.datetime64(p.start, "m") + np.arange(count) * np.timedelta64(10, "m")
    return WindSeries(ts, power, speed, direction, temperature, dropped=0, raw_count=count)


DEFAULT_COLUMNS = {
    # schema of the public turbine dataset; override with a column map
    "timestamp": "",
    "active_power": "ActivePower",
    "wind_speed": "WindSpeed",
    "wind_direction": "WindDirection",
    "temperature": "AmbientTemperatue",
}


def _parse_time(s):
    t = datetime.fromisoformat(s.strip())
    if t.tzinfo is not None:
        t = t.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(t, "m")


def ingest_wind_csv(path, frequency=10, column_map=None, delimiter=",", power_scale=1.0):
    """Read wind records from CSV, dropping corrupted rows, then thin.

    A row is corrupted when a mapped field is empty or non-numeric, a value
    is not finite, or its timestamp does not increase.  ``dropped`` counts
    them; ``len(series) + dropped == raw_count`` before thinning.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    cmap = dict(DEFAULT_COLUMNS)
    cmap.update(column_map or {})
    stride = _stride(frequency)
    ts, cols, raw, dropped = [], {k: [] for k in cmap if k != "timestamp"}, 0, 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        pos = {h.strip(): i for i, h in enumerate(header)}
        missing = [f"{k}={v!r}" for k, v in cmap.items() if v not in pos]
        if missing:
            raise DataError(f"{path}: missing columns {', '.join(missing)}")
        idx = {k: pos[v] for k, v in cmap.items()}
        last = None
        for row in reader:
            if not row:
                continue
            raw += 1
            try:
                t = _parse_time(row[idx["timestamp"]])
                vals = {k: float(row[i]) for k, i in idx.items() if k != "timestamp"}
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in vals.values()) or (last is not None and t <= last):
                dropped += 1
                continue
            last = t
            ts.append(t)
            for k, v in vals.items():
                cols[k].append(v)
    series = WindSeries(np.array(ts, dtype="datetime64[m]"),
                        np.array(cols["active_power"]) * power_scale,
                        np.array(cols["wind_speed"]), np.array(cols["wind_direction"]),
                        np.array(cols["temperature"]), dropped=dropped, raw_count=raw)
    return series.take(slice(0, None, stride)) if stride > 1 else series


@dataclass(frozen=True)
class ObservationSpec:
    kind: str = "myopic"
    lags: int = 2

    KINDS = ("myopic", "myopic_incomplete", "historical", "lag1")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown observation kind {self.kind!r}")

    @property
    def dim(self):
        return {"myopic": 3, "myopic_incomplete": 1, "historical": 3 + 4 * self.lags,
                "lag1": 1}[self.kind]


def build_observations(series, spec):
    """Feature rows at each time t and the power at t+1.

    Returns ``(X, Y, skipped)``; rows without enough history or no next
    record are skipped and counted.
    """
    n = len(series)
    now = np.column_stack([series.temperature, series.speed, series.direction])
    first = spec.lags if spec.kind == "historical" else 0
    t = np.arange(first, n - 1)
    if spec.kind == "myopic":
        X = now[t]
    elif spec.kind == "myopic_incomplete":
        X = series.direction[t][:, None]
    elif spec.kind == "lag1":
        X = series.power[t][:, None]
    else:
        full = np.column_stack([now, series.power])
        X = np.hstack([now[t]] + [full[t - k] for k in range(1, spec.lags + 1)])
    X = X.reshape(len(t), spec.dim)
    return X, series.power[t + 1], n - len(t)


def export_csv(path, columns):
    """Write equal-length columns (name -> 1-D array) to a CSV file."""
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
