"""Synthetic road scenes rendered to 32-channel echoes and PDM recordings.

Surfaces and damages are point-scatterer fields. All their shape parameters
live in :data:`SIGNATURES` so the separability of the synthetic classes can be
tightened or relaxed in one place.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from ._validation import ParameterError, check_int
from .signal import BASEBAND_RATE, Waveform, pdm_encode, write_pdm

log = logging.getLogger(__name__)

MATERIALS = ("Asphalt", "Concrete", "Element")
DAMAGES = ("Alligator Crack", "Pothole", "Crack", "Patch")
RECORD_SAMPLES = 16384
PDM_PEAK = 0.9

# Angles in degrees, ranges in metres, amplitudes relative to a unit reflector.
# The road is a plane ``sensor_height`` below the array; a reflector seen at
# elevation ``el < 0`` sits at range ``sensor_height / sin(-el)``.
#
# Elements are paver joints: two periodic azimuth trains, one per entry of
# ``joint_elevations``, each at the fixed range of its elevation. Concrete
# slabs are long, so a concrete scene holds a single joint: one such row, at
# one of the two ranges (picked per scene), on top of its sparse speckle. In
# joint terms concrete is half an element scene, so it sits between asphalt
# (no joint) and element (both).
SIGNATURES = {
    "road": {
        "sensor_height": 0.6,
        "azimuth": (-60.0, 60.0),
        "elevation": (-70.0, -12.0),
        "range_jitter": 0.02,
    },
    "joints": {
        "joint_elevations": (-30.0, -60.0),
        "range_jitter": 0.001,
        "angle_jitter": 0.3,
    },
    "Asphalt": {"count": 2000, "amplitude": 0.02},
    "Concrete": {"count": 6, "amplitude": 0.1, "joint_amplitude": 0.2},
    "Element": {
        "azimuth_spacing": 15.0,
        "azimuth_span": (-60.0, 60.0),
        "amplitude": 0.2,
    },
    "Pothole": {"edge_count": 12, "radius": 4.0, "amplitude": 0.6},
    "Crack": {"count": 15, "length": 24.0, "amplitude": 0.3},
    "Alligator Crack": {"chains": 3, "count": 8, "cell": 5.0, "amplitude": 0.25},
    "Patch": {"count": 60, "size": (16.0, 10.0), "amplitude": 0.1},
}


@dataclass(frozen=True)
class Reflector:
    azimuth: float
    elevation: float
    range: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.range > 0:
            raise ParameterError(f"reflector range must be positive, got {self.range}")
        if self.amplitude < 0:
            raise ParameterError("reflector amplitude must be >= 0")
        for name in ("azimuth", "elevation"):
            if not -90.0 <= getattr(self, name) <= 90.0:
                raise ParameterError(f"reflector {name} must lie within +-90 degrees")

    def position(self):
        az, el = np.radians(self.azimuth), np.radians(self.elevation)
        s = np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
        return self.range * s


@dataclass
class Scene:
    reflectors: list
    material: str
    damages: frozenset = frozenset()
    seed: int = 0

    def __post_init__(self):
        if not self.reflectors:
            raise ParameterError("a scene needs at least one reflector")
        self.damages = frozenset(self.damages)

    @property
    def labels(self):
        return [self.material] + [d for d in DAMAGES if d in self.damages]

    def arrays(self):
        """(positions (n, 3), ranges (n,), amplitudes (n,))."""
        pos = np.array([r.position() for r in self.reflectors])
        rng = np.array([r.range for r in self.reflectors])
        amp = np.array([r.amplitude for r in self.reflectors])
        return pos, rng, amp


def _road_range(el, rng):
    road = SIGNATURES["road"]
    r = road["sensor_height"] / np.sin(np.radians(-np.asarray(el)))
    return r + rng.uniform(-road["range_jitter"], road["range_jitter"], np.shape(el))


def _field(az, el, amp, rng):
    az = np.clip(az, -90.0, 90.0)
    el = np.clip(el, -89.0, -1.0)
    ranges = _road_range(el, rng)
    return [
        Reflector(float(a), float(e), float(r), float(m))
        for a, e, r, m in zip(az, el, ranges, amp)
    ]


def _speckle(n, sigma, rng, az_lim=None, el_lim=None):
    road = SIGNATURES["road"]
    az = rng.uniform(*(az_lim or road["azimuth"]), n)
    el = rng.uniform(*(el_lim or road["elevation"]), n)
    return _field(az, el, rng.rayleigh(sigma, n), rng)


def _joint_range(el, rng, n):
    """Range of a joint at nominal elevation ``el``: fixed by the road geometry, tight jitter."""
    road, joints = SIGNATURES["road"], SIGNATURES["joints"]
    r = road["sensor_height"] / np.sin(np.radians(-el))
    return r + rng.uniform(-joints["range_jitter"], joints["range_jitter"], n)


def _joint_row(az, el, amp, rng):
    j = SIGNATURES["joints"]["angle_jitter"]
    az = np.asarray(az, dtype=float)
    ranges = _joint_range(el, rng, az.size)
    az = az + rng.uniform(-j, j, az.size)
    els = el + rng.uniform(-j, j, az.size)
    return [
        Reflector(float(a), float(e), float(r), float(m))
        for a, e, r, m in zip(az, els, ranges, np.broadcast_to(amp, az.shape))
    ]


def _joint_azimuths():
    lo, hi = SIGNATURES["Element"]["azimuth_span"]
    return np.arange(lo, hi + 1e-9, SIGNATURES["Element"]["azimuth_spacing"])


def _material_field(material, rng):
    if material not in MATERIALS:
        raise ParameterError(f"unknown material {material!r}; expected one of {MATERIALS}")
    cfg = SIGNATURES[material]
    joint_els = SIGNATURES["joints"]["joint_elevations"]
    if material == "Asphalt":
        return _speckle(cfg["count"], cfg["amplitude"], rng)
    cols = _joint_azimuths()
    if material == "Concrete":
        refl = _speckle(cfg["count"], cfg["amplitude"], rng)
        el = joint_els[rng.integers(len(joint_els))]
        amp = cfg["joint_amplitude"] * rng.uniform(0.8, 1.2, cols.size)
        return refl + _joint_row(cols, el, amp, rng)
    refl = []
    for el in joint_els:
        refl += _joint_row(cols, el, cfg["amplitude"] * rng.uniform(0.8, 1.2, cols.size), rng)
    return refl


def _damage_field(damage, rng):
    cfg = SIGNATURES[damage]
    road = SIGNATURES["road"]
    c_az = rng.uniform(road["azimuth"][0] + 15, road["azimuth"][1] - 15)
    c_el = rng.uniform(road["elevation"][0] + 15, road["elevation"][1] - 8)
    if damage == "Pothole":
        t = np.linspace(0, 2 * np.pi, cfg["edge_count"], endpoint=False)
        t = t + rng.uniform(0, 2 * np.pi)
        az = c_az + cfg["radius"] * np.cos(t)
        el = c_el + cfg["radius"] * np.sin(t)
        return _field(az, el, cfg["amplitude"] * rng.uniform(0.8, 1.2, t.size), rng)
    if damage == "Crack":
        theta = rng.uniform(0, np.pi)
        s = np.linspace(-0.5, 0.5, cfg["count"]) * cfg["length"]
        az = c_az + s * np.cos(theta)
        el = c_el + s * np.sin(theta) * 0.5
        return _field(az, el, cfg["amplitude"] * rng.uniform(0.8, 1.2, s.size), rng)
    if damage == "Alligator Crack":
        k, m, cell = cfg["chains"], cfg["count"], cfg["cell"]
        lines = (np.arange(k) - (k - 1) / 2) * cell
        s = np.linspace(-0.5, 0.5, m) * cell * (k - 1)
        az = np.concatenate([np.repeat(lines, m), np.tile(s, k)]) + c_az
        el = np.concatenate([np.tile(s, k), np.repeat(lines, m)]) * 0.6 + c_el
        return _field(az, el, cfg["amplitude"] * rng.uniform(0.8, 1.2, az.size), rng)
    if damage == "Patch":
        w, h = cfg["size"]
        return _speckle(
            cfg["count"],
            cfg["amplitude"],
            rng,
            az_lim=(c_az - w / 2, c_az + w / 2),
            el_lim=(c_el - h / 2, c_el + h / 2),
        )
    raise ParameterError(f"unknown damage {damage!r}; expected one of {DAMAGES}")


def make_scene(material, damages=(), seed=0):
    """Deterministic reflector field for a material plus any damages."""
    if material not in MATERIALS:
        raise ParameterError(f"unknown material {material!r}; expected one of {MATERIALS}")
    damages = [d for d in DAMAGES if d in set(damages) - {None, "None"}]
    unknown = set(damages) - set(DAMAGES)
    if unknown:
        raise ParameterError(f"unknown damages {sorted(unknown)}")
    ss = np.random.SeedSequence([seed, MATERIALS.index(material)])
    rng_material, *rng_damage = (np.random.default_rng(s) for s in ss.spawn(1 + len(DAMAGES)))
    refl = _material_field(material, rng_material)
    for d in damages:
        refl += _damage_field(d, rng_damage[DAMAGES.index(d)])
    return Scene(refl, material, frozenset(damages), seed)


def render_echoes(scene, geom, chirp, noise_db=np.inf, seed=0, n_samples=RECORD_SAMPLES):
    """Sum of delayed, 1/range^2-scaled chirp copies per microphone, plus white noise.

    The emitter sits at the array origin. Delays are fractional: each echo's
    impulse is split linearly between the two neighbouring samples before the
    chirp is convolved in. ``noise_db`` is the SNR relative to the strongest
    echo's peak amplitude.
    """
    fs = chirp.sample_rate
    c = geom.speed_of_sound
    pos, ranges, amp = scene.arrays()
    max_range = c * (n_samples / fs) / 2
    if np.any(ranges > max_range):
        raise ParameterError(
            f"reflector at {ranges.max():.3f} m exceeds the unambiguous range {max_range:.3f} m"
        )
    mic = geom.positions
    path = ranges[None, :] + np.linalg.norm(pos[None, :, :] - mic[:, None, :], axis=2)
    tau = path / c * fs
    k = np.floor(tau).astype(int)
    frac = tau - k
    gain = amp / ranges**2
    n_mic = mic.shape[0]
    impulses = np.zeros((n_mic, n_samples + 1))
    for i in range(n_mic):
        impulses[i] = np.bincount(k[i], gain * (1 - frac[i]), minlength=n_samples + 1)[: n_samples + 1]
        impulses[i, 1:] += np.bincount(k[i], gain * frac[i], minlength=n_samples)[:n_samples]
    impulses = impulses[:, :n_samples]
    template = np.asarray(chirp.samples, dtype=float)
    nfft = next_fast_len(n_samples + template.size, real=True)
    out = irfft(rfft(impulses, nfft, axis=1) * rfft(template, nfft), nfft, axis=1)[:, :n_samples]
    if np.isfinite(noise_db):
        sigma = gain.max() / 10 ** (noise_db / 20)
        out = out + np.random.default_rng(seed).normal(0.0, sigma, out.shape)
    return Waveform(out, fs)


def to_pdm(channels, peak=PDM_PEAK, oversample=10):
    """Scale a rendered frame so its largest sample sits at ``peak`` full scale, then encode."""
    x = channels.samples
    m = np.abs(x).max()
    scaled = x * (peak / m) if m > 0 else x
    return pdm_encode(Waveform(scaled, channels.sample_rate), oversample)


@dataclass
class DatasetSpec:
    """Counts per material; damage counts give samples carrying that damage as primary."""

    materials: dict = field(default_factory=lambda: {m: 150 for m in MATERIALS})
    damages: dict = field(default_factory=dict)
    seed: int = 0
    noise_db: float = 20.0
    multi_damage_prob: float = 0.15
    frame_rate: float = 10.0
    n_samples: int = RECORD_SAMPLES


@dataclass
class ManifestEntry:
    path: str
    timestamp_s: float
    labels: list

    def to_json(self):
        return json.dumps(
            {"path": self.path, "timestamp_s": round(self.timestamp_s, 6), "labels": self.labels}
        )


@dataclass
class DatasetManifest:
    entries: list
    root: Path = Path(".")

    @property
    def class_names(self):
        present = {lab for e in self.entries for lab in e.labels}
        return [c for c in MATERIALS + DAMAGES if c in present] + sorted(
            present - set(MATERIALS + DAMAGES)
        )

    def label_matrix(self, class_names=None):
        names = self.class_names if class_names is None else list(class_names)
        Y = np.zeros((len(self.entries), len(names)), dtype=np.uint8)
        col = {n: j for j, n in enumerate(names)}
        for i, e in enumerate(self.entries):
            for lab in e.labels:
                if lab in col:
                    Y[i, col[lab]] = 1
        return Y, names

    def resolve(self, entry):
        return self.root / entry.path

    def write(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text("".join(e.to_json() + "\n" for e in self.entries))
        tmp.replace(path)

    @classmethod
    def read(cls, path):
        path = Path(path)
        entries = []
        for line in path.read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                entries.append(ManifestEntry(d["path"], float(d["timestamp_s"]), list(d["labels"])))
        return cls(entries, path.parent)


MANIFEST_NAME = "manifest.jsonl"


def plan_samples(spec):
    """(material, damages) per sample, in output order."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5CE7E]))
    plan = []
    for m in MATERIALS:
        plan += [(m, ())] * check_int(spec.materials.get(m, 0), f"count for {m}", minimum=0)
    for d in DAMAGES:
        for _ in range(check_int(spec.damages.get(d, 0), f"count for {d}", minimum=0)):
            extra = ()
            if rng.random() < spec.multi_damage_prob:
                extra = (DAMAGES[rng.choice([i for i in range(len(DAMAGES)) if DAMAGES[i] != d])],)
            plan.append((MATERIALS[rng.integers(len(MATERIALS))], (d,) + extra))
    if not plan:
        raise ParameterError("dataset spec requests zero samples")
    return plan


def synth_dataset(spec, out_dir, geom=None, chirp=None, progress=None):
    """Render every planned sample to a PDM file and write ``manifest.jsonl``."""
    from .beamform import default_geometry
    from .signal import generate_chirp

    geom = default_geometry(0) if geom is None else geom
    chirp = generate_chirp() if chirp is None else chirp
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"cannot write to dataset directory {out_dir}: {exc.strerror}") from exc

    plan = plan_samples(spec)
    seeds = np.random.SeedSequence(spec.seed).generate_state(2 * len(plan))
    jitter = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x71AE]))
    t = 0.0
    entries = []
    for i, (material, damages) in enumerate(plan):
        scene = make_scene(material, damages, int(seeds[2 * i]))
        echoes = render_echoes(
            scene, geom, chirp, spec.noise_db, int(seeds[2 * i + 1]), spec.n_samples
        )
        name = f"rec_{i:05d}.pdm"
        write_pdm(out_dir / name, to_pdm(echoes))
        t += 1.0 / spec.frame_rate + jitter.uniform(-0.01, 0.01)
        entries.append(ManifestEntry(name, t, scene.labels))
        if progress:
            progress(i + 1, len(plan))
    manifest = DatasetManifest(entries, out_dir)
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest
