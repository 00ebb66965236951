"""Array geometry, steering delays, delay-and-sum beamforming and CFAR-style cleanup.

Direction convention: for azimuth ``az`` and elevation ``el`` the look vector
(pointing from the array toward the reflector) is::

    s = (cos(el) sin(az), sin(el), cos(el) cos(az))

with ``z`` the boresight and the array in the ``z = 0`` plane. The wave
arriving from ``s`` propagates along ``u = -s``.
"""

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ParameterError, check_int, check_positive
from .signal import Waveform, analytic_magnitude

N_MICS = 32
SPEED_OF_SOUND = 343.0
N_AZIMUTH = 13
N_ELEVATION = 7

CFAR_GUARD = 4
CFAR_TRAIN = 16
CFAR_MIN_FLOOR = 1e-12


@dataclass
class ArrayGeometry:
    positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (N_MICS, 3):
            raise ParameterError(f"expected {N_MICS} x 3 positions, got {pos.shape}")
        if len(np.unique(np.round(pos, 12), axis=0)) != N_MICS:
            raise ParameterError("microphone positions must be distinct")
        check_positive(self.speed_of_sound, "speed_of_sound")
        self.positions = pos

    @property
    def aperture(self):
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def to_json(self, path):
        doc = {"speed_of_sound": self.speed_of_sound, "positions": self.positions.tolist()}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(np.array(doc["positions"], dtype=float), float(doc["speed_of_sound"]))


@dataclass(frozen=True)
class Direction:
    azimuth: float
    elevation: float

    def __post_init__(self):
        for name in ("azimuth", "elevation"):
            v = getattr(self, name)
            if not -90.0 <= v <= 90.0:
                raise ParameterError(f"{name} must lie in [-90, 90] degrees, got {v}")

    def look_vector(self):
        az, el = np.radians(self.azimuth), np.radians(self.elevation)
        return np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])


@dataclass
class DirectionList:
    """Azimuth-major grid; elevation is the minor (fastest-cycling) index.

    Row ``i`` is ``(azimuths[i // n_el], elevations[i % n_el])``.
    """

    azimuths: np.ndarray = field(default_factory=lambda: np.linspace(-90, 90, N_AZIMUTH))
    elevations: np.ndarray = field(default_factory=lambda: np.linspace(-90, 90, N_ELEVATION))

    def __post_init__(self):
        self.azimuths = np.asarray(self.azimuths, dtype=float)
        self.elevations = np.asarray(self.elevations, dtype=float)
        self.directions = [
            Direction(float(a), float(e)) for a in self.azimuths for e in self.elevations
        ]

    def __len__(self):
        return len(self.directions)

    def __getitem__(self, i):
        return self.directions[i]

    def __iter__(self):
        return iter(self.directions)

    def index(self, azimuth, elevation):
        ia = int(np.flatnonzero(np.isclose(self.azimuths, azimuth))[0])
        ie = int(np.flatnonzero(np.isclose(self.elevations, elevation))[0])
        return ia * len(self.elevations) + ie

    def look_vectors(self):
        return np.stack([d.look_vector() for d in self.directions])


@dataclass
class Energyscape:
    values: np.ndarray
    directions: DirectionList = field(default_factory=DirectionList)
    range_resolution: float = SPEED_OF_SOUND / (2 * 450e3)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.directions):
            raise ParameterError(
                f"energyscape needs {len(self.directions)} rows, got shape {self.values.shape}"
            )

    @property
    def shape(self):
        return self.values.shape


def default_geometry(seed=0, side=0.08, min_spacing=0.008, max_tries=100_000):
    """32 microphones Poisson-disc sampled (dart throwing) on a ``side`` x ``side`` plane."""
    rng = np.random.default_rng(seed)
    half = side / 2
    pts = []
    for _ in range(max_tries):
        p = rng.uniform(-half, half, size=2)
        if all(np.hypot(*(p - q)) >= min_spacing for q in pts):
            pts.append(p)
            if len(pts) == N_MICS:
                break
    else:
        raise RuntimeError("Poisson-disc sampling did not place all microphones")
    xy = np.array(pts)
    return ArrayGeometry(np.column_stack([xy, np.zeros(N_MICS)]))


def _raw_delays(geom, direction):
    # delay_i = -(p_i . u) / c with u = -s the propagation vector
    u = -direction.look_vector()
    return -(geom.positions @ u) / geom.speed_of_sound


def steering_delays(geom, direction):
    """Per-microphone compensation delays (seconds) for ``direction``, min delay 0."""
    d = _raw_delays(geom, direction)
    return d - d.min()


def steering_offset(geom, direction):
    """Time (seconds) by which :func:`steering_delays` lags the array-origin reference."""
    return float(-_raw_delays(geom, direction).min())


def delay_and_sum(channels, delays):
    """Delay channel ``i`` by ``round(delays[i] * fs)`` samples, sum, divide by the count.

    Vacated samples are zero; output keeps the input length.
    """
    x = np.atleast_2d(channels.samples)
    delays = np.asarray(delays, dtype=float)
    if delays.shape != (x.shape[0],):
        raise ParameterError(f"need one delay per channel ({x.shape[0]}), got {delays.shape}")
    if np.any(delays < 0):
        raise ParameterError("delays must be non-negative")
    shifts = np.floor(delays * channels.sample_rate + 0.5).astype(int)
    return Waveform(_shift_sum(x, shifts), channels.sample_rate)


def _shift_sum(x, shifts):
    n_ch, n = x.shape
    out = np.zeros(n)
    for i in range(n_ch):
        k = shifts[i]
        if k < n:
            out[k:] += x[i, : n - k]
    return out / n_ch


def _advance(row, k):
    if k <= 0:
        return row
    out = np.zeros_like(row)
    out[: row.size - k] = row[k:]
    return out


def build_energyscape(channels, directions=None, geom=None):
    """Delay-and-sum then envelope for every direction, rows in ``directions`` order.

    Each beam is advanced by its steering offset so that column ``k`` is the
    two-way range ``k * c / (2 fs)`` measured from the array origin, whatever
    the look direction.
    """
    directions = DirectionList() if directions is None else directions
    geom = default_geometry(0) if geom is None else geom
    x = np.atleast_2d(channels.samples)
    if x.shape[0] != N_MICS:
        raise ParameterError(f"expected {N_MICS} channels, got {x.shape[0]}")
    fs = channels.sample_rate
    beams = np.empty((len(directions), x.shape[1]))
    leads = []
    for row, d in enumerate(directions):
        shifts = np.floor(steering_delays(geom, d) * fs + 0.5).astype(int)
        lead = int(np.floor(steering_offset(geom, d) * fs + 0.5))
        beams[row] = _shift_sum(x, shifts)
        leads.append(lead)
    # envelope before the advance, so the zero-filled tail stays exactly zero
    values = analytic_magnitude(beams, axis=1)
    for row, lead in enumerate(leads):
        values[row] = _advance(values[row], lead)
    return Energyscape(values, directions, geom.speed_of_sound / (2 * fs))


def cfar_cleanup(scape, guard=CFAR_GUARD, train=CFAR_TRAIN, min_floor=CFAR_MIN_FLOOR):
    """Divide each cell by the mean of its range-wise training cells.

    ``train`` cells are taken on each side of the cell under test, beyond
    ``guard`` cells; at the row ends only the cells that exist are averaged.
    The divisor is clamped below by ``min_floor``.
    """
    train = check_int(train, "train", minimum=1)
    guard = check_int(guard, "guard", minimum=0)
    v = np.asarray(scape.values, dtype=float)
    n = v.shape[1]
    if n < 2 * (guard + train) + 1:
        raise ParameterError(
            f"rows of {n} cells are shorter than the CFAR window {2 * (guard + train) + 1}"
        )
    c = np.concatenate([np.zeros((v.shape[0], 1)), np.cumsum(v, axis=1)], axis=1)
    ones = np.concatenate([[0], np.cumsum(np.ones(n))])
    idx = np.arange(n)

    def window(lo, hi):
        lo = np.clip(lo, 0, n)
        hi = np.clip(hi, 0, n)
        return c[:, hi] - c[:, lo], ones[hi] - ones[lo]

    s_lead, n_lead = window(idx - guard - train, idx - guard)
    s_lag, n_lag = window(idx + guard + 1, idx + guard + train + 1)
    noise = (s_lead + s_lag) / (n_lead + n_lag)
    out = v / np.maximum(noise, min_floor)
    return Energyscape(np.maximum(out, 0.0), scape.directions, scape.range_resolution)


def write_energyscape(path, scape):
    """``u32 rows | u32 cols | f32 range_resolution`` (LE) then row-major f32 values."""
    rows, cols = scape.shape
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<IIf", rows, cols, scape.range_resolution))
        fh.write(np.ascontiguousarray(scape.values, dtype="<f4").tobytes())
    tmp.replace(path)


def read_energyscape(path, mmap=False):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) != 12:
        raise ParameterError(f"{path}: truncated energyscape header")
    rows, cols, res = struct.unpack("<IIf", head)
    if path.stat().st_size != 12 + 4 * rows * cols:
        raise ParameterError(f"{path}: size does not match a {rows} x {cols} energyscape")
    if mmap:
        values = np.memmap(path, dtype="<f4", mode="r", offset=12, shape=(rows, cols))
    else:
        values = np.fromfile(path, dtype="<f4", offset=12).reshape(rows, cols)
    directions = DirectionList() if rows == N_AZIMUTH * N_ELEVATION else _generic_directions(rows)
    return Energyscape(values, directions, float(res))


def _generic_directions(rows):
    return DirectionList(np.zeros(1), np.linspace(-90, 90, rows))


def write_energyscape_csv(path, scape):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"r{j}" for j in range(scape.shape[1])])
        for row in np.asarray(scape.values, dtype=np.float32):
            w.writerow([repr(float(v)) for v in row])


def read_energyscape_csv(path, range_resolution=SPEED_OF_SOUND / (2 * 450e3)):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    values = np.array([[float(v) for v in r] for r in rows])
    directions = DirectionList() if len(values) == N_AZIMUTH * N_ELEVATION else _generic_directions(len(values))
    return Energyscape(values, directions, range_resolution)
