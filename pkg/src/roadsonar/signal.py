"""Per-channel time-domain stages: chirp, PDM encode/decode, matched filter, envelope.

Multichannel signals are arrays shaped ``(channels, samples)``; time is always
the last axis.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.fft import next_fast_len

from ._validation import (
    ParameterError,
    check_finite,
    check_int,
    check_positive,
    integer_sample_count,
)

PDM_RATE = 4.5e6
BASEBAND_RATE = 450e3
RECORD_BITS = 163840

CIC_STAGES = 4
CIC_LENGTH = 10
DROOP_TAPS = 63
DROOP_PASS_HZ = 70e3
DROOP_STOP_HZ = 140e3

FFT_CORRELATION_MIN = 4096
PDM_MAGIC = b"PDM1"


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        check_positive(self.sample_rate, "sample_rate")
        self.samples = check_finite(self.samples, "samples")

    @property
    def n_samples(self):
        return self.samples.shape[-1]

    @property
    def n_channels(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    def channel(self, i):
        return Waveform(np.atleast_2d(self.samples)[i], self.sample_rate)


@dataclass
class PdmFrame:
    """1-bit recording; ``bits`` is a ``(channels, n_bits)`` uint8 array of 0/1."""

    bits: np.ndarray
    sample_rate: float = PDM_RATE

    def __post_init__(self):
        check_positive(self.sample_rate, "sample_rate")
        bits = np.asarray(self.bits)
        if bits.ndim == 1:
            bits = bits[None, :]
        if bits.ndim != 2:
            raise ParameterError(f"bits must be (channels, n_bits), got {bits.shape}")
        if bits.size and bits.max() > 1:
            raise ParameterError("bits must contain only 0 and 1")
        self.bits = bits.astype(np.uint8, copy=False)

    @property
    def n_channels(self):
        return self.bits.shape[0]

    @property
    def bits_per_channel(self):
        return self.bits.shape[1]


@dataclass(frozen=True)
class ChirpSpec:
    f_start: float = 20e3
    f_end: float = 50e3
    duration: float = 2.5e-3
    sample_rate: float = BASEBAND_RATE

    def validate(self):
        for name in ("f_start", "f_end", "duration", "sample_rate"):
            check_positive(getattr(self, name), name)
        nyquist = self.sample_rate / 2
        if self.f_start >= nyquist or self.f_end >= nyquist:
            raise ParameterError(
                f"chirp frequencies must lie below Nyquist ({nyquist:g} Hz)"
            )
        if integer_sample_count(self.duration, self.sample_rate) < 2:
            raise ParameterError("chirp must span at least two samples")
        return self


def chirp_frequency(spec, t):
    """Instantaneous frequency of the hyperbolic sweep at times ``t`` (seconds)."""
    f0, f1, T = spec.f_start, spec.f_end, spec.duration
    return f0 * f1 * T / (f1 * T + (f0 - f1) * np.asarray(t, dtype=float))


def generate_chirp(spec=ChirpSpec()):
    """Hyperbolic (linear-period) sweep from ``f_start`` to ``f_end``.

    The phase is the closed-form integral of the instantaneous frequency, so
    the output is exactly reproducible from its parameters.
    """
    spec.validate()
    f0, f1, T = spec.f_start, spec.f_end, spec.duration
    n = integer_sample_count(T, spec.sample_rate)
    t = np.arange(n) / spec.sample_rate
    if f0 == f1:
        phase = 2 * np.pi * f0 * t
    else:
        k = f0 * f1 * T / (f0 - f1)
        phase = 2 * np.pi * k * np.log1p((f0 - f1) * t / (f1 * T))
    return Waveform(np.sin(phase), spec.sample_rate)


def pdm_encode(w, oversample=10):
    """First-order sigma-delta modulation of ``w`` upsampled ``oversample`` times.

    Upsampling is linear interpolation (bounded, so it never pushes the input
    past full scale). The modulator keeps its integrator error in [-1/2, 1/2),
    which makes the bit count up to sample ``n`` equal to the rounded running
    sum of the input density. That identity lets the loop run as a cumsum.
    """
    oversample = check_int(oversample, "oversample", minimum=2)
    x = np.atleast_2d(w.samples)
    if np.any(np.abs(x) > 1.0):
        raise ParameterError("PDM input amplitude must satisfy |x| <= 1")
    n = x.shape[1]
    grid = np.arange(n * oversample) / oversample
    up = np.empty((x.shape[0], n * oversample))
    for ch in range(x.shape[0]):
        up[ch] = np.interp(grid, np.arange(n), x[ch])
    density = (up + 1.0) / 2.0
    level = np.floor(np.cumsum(density, axis=1) + 0.5)
    bits = np.diff(level, axis=1, prepend=0.0)
    return PdmFrame(bits.astype(np.uint8), w.sample_rate * oversample)


def _cic_response(f, fs_in):
    """Magnitude of the cascaded moving-average decimator at frequencies ``f``."""
    x = np.pi * np.asarray(f, dtype=float) / fs_in
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.sin(CIC_LENGTH * x) / (CIC_LENGTH * np.sin(x))
    h = np.where(x == 0, 1.0, h)
    return np.abs(h) ** CIC_STAGES


@lru_cache(maxsize=8)
def droop_compensator(fs_in=PDM_RATE, factor=CIC_LENGTH):
    """Linear-phase FIR at the decimated rate that flattens the CIC passband droop
    and removes the remaining quantization noise above ``DROOP_STOP_HZ``."""
    fs_out = fs_in / factor
    nyq = fs_out / 2
    f_pass = np.linspace(0.0, DROOP_PASS_HZ, 15)
    freq = np.concatenate([f_pass, [DROOP_STOP_HZ, nyq]])
    gain = np.concatenate([1.0 / _cic_response(f_pass, fs_in), [0.0, 0.0]])
    taps = sps.firwin2(DROOP_TAPS, freq, gain, fs=fs_out, window=("kaiser", 6.0))
    taps.setflags(write=False)
    return taps


def pdm_decode(frame, out_rate=BASEBAND_RATE):
    """Bits to +-1, four length-10 moving averages, decimate, droop-compensate.

    The moving averages run on integers (exact), and the decimation phase
    cancels their combined group delay so output sample ``k`` lines up with
    input bit ``k * factor``.
    """
    ratio = frame.sample_rate / out_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise ParameterError(
            f"decimation factor {frame.sample_rate:g}/{out_rate:g} is not an integer"
        )
    if factor != CIC_LENGTH:
        raise ParameterError(f"decoder is built for decimation by {CIC_LENGTH}")
    n_out = frame.bits_per_channel // factor
    delay = CIC_STAGES * (CIC_LENGTH - 1) // 2
    y = frame.bits.astype(np.int64) * 2 - 1
    y = np.pad(y, ((0, 0), (0, delay + factor)))
    for _ in range(CIC_STAGES):
        c = np.cumsum(y, axis=1)
        c[:, CIC_LENGTH:] -= c[:, :-CIC_LENGTH].copy()
        y = c
    idx = delay + factor * np.arange(n_out)
    dec = y[:, idx] / float(CIC_LENGTH**CIC_STAGES)
    taps = droop_compensator(frame.sample_rate, factor)
    out = sps.oaconvolve(dec, taps[None, :], mode="same", axes=1)
    return Waveform(out, out_rate)


def matched_filter(signal, template):
    """Cross-correlate ``signal`` with ``template``.

    ``out[k] = sum_m signal[k + m] * template[m]``, so an echo whose onset sits
    at sample ``k`` peaks at index ``k``. Output keeps the signal length.
    """
    if signal.sample_rate != template.sample_rate:
        raise ParameterError(
            f"sample-rate mismatch: {signal.sample_rate:g} vs {template.sample_rate:g}"
        )
    t = np.asarray(template.samples, dtype=float)
    if t.ndim != 1:
        raise ParameterError("template must be a single channel")
    x = np.atleast_2d(signal.samples)
    n, m = x.shape[1], t.size
    if m > n:
        raise ParameterError("template is longer than the signal")
    if n > FFT_CORRELATION_MIN:
        nfft = next_fast_len(n + m - 1, real=True)
        T = np.conj(np.fft.rfft(t, nfft))
        full = np.fft.irfft(np.fft.rfft(x, nfft, axis=1) * T, nfft, axis=1)
        out = full[:, :n]
    else:
        out = np.stack([np.correlate(row, t, mode="full")[m - 1 : m - 1 + n] for row in x])
    if np.ndim(signal.samples) == 1:
        out = out[0]
    return Waveform(out, signal.sample_rate)


def analytic_magnitude(x, axis=-1):
    """|x + j H{x}| with the analytic signal built by zeroing negative frequencies."""
    return np.abs(sps.hilbert(np.asarray(x, dtype=float), axis=axis))


def envelope(signal):
    if signal.n_samples < 8:
        raise ParameterError("envelope needs at least 8 samples")
    return Waveform(analytic_magnitude(signal.samples), signal.sample_rate)


def write_pdm(path, frame):
    """Header ``PDM1 | u32 channels | u64 bits | u32 rate`` (LE), then each channel
    bit-packed LSB-first and padded to a whole byte."""
    header = PDM_MAGIC + struct.pack(
        "<IQI", frame.n_channels, frame.bits_per_channel, int(round(frame.sample_rate))
    )
    payload = np.packbits(frame.bits, axis=1, bitorder="little")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())
    tmp.replace(path)


def read_pdm(path):
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != PDM_MAGIC:
        raise ParameterError(f"{path}: not a PDM1 file")
    n_ch, n_bits, rate = struct.unpack("<IQI", data[4:20])
    row_bytes = (n_bits + 7) // 8
    if len(data) != 20 + n_ch * row_bytes:
        raise ParameterError(
            f"{path}: payload is {len(data) - 20} bytes, expected {n_ch * row_bytes}"
        )
    packed = np.frombuffer(data, dtype=np.uint8, offset=20).reshape(n_ch, row_bytes)
    bits = np.unpackbits(packed, axis=1, count=n_bits, bitorder="little")
    return PdmFrame(bits, float(rate))
