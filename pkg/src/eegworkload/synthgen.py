"""Paradigm-faithful synthetic EEG/EOG sessions.

Each EEG channel carries

* a spectrally shaped (1/f^k) Gaussian background, independent per channel,
* a common-mode 1/f component shared identically by every EEG channel
  (activity picked up by the shared reference electrode),
* four coherent band oscillators (delta, theta, alpha, beta) with smooth
  spatial footprints, amplitude modulation, random phase and per-phase
  frequency jitter,
* label-dependent gains: theta boosted on frontal channels, alpha
  suppressed on parietal/occipital channels,
* 60 Hz mains interference, white noise and blink leakage.

The EOG channels carry blinks (vertical pair), mains, noise and a weak
background. Everything is a pure function of ``(seed, participant_index)``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .core import (ConfigError, Label, RawSession, ValidationError, paradigm_timeline,
                   standard_montage, N_EEG, N_EOG)

SAMPLE_RATE = 1000.0
BANDS = ("delta", "theta", "alpha", "beta")
BAND_FREQ = {"delta": 2.5, "theta": 6.0, "alpha": 10.0, "beta": 20.0}
# center (x, y) and width of each band generator's scalp footprint
_BAND_FOOTPRINT = {
    "delta": ((0.0, 0.0), 0.8),
    "theta": ((0.0, 0.45), 0.45),
    "alpha": ((0.0, -0.55), 0.45),
    "beta": ((0.0, 0.0), 0.5),
}
BLINK_DURATION = 0.4
_EYES = ((-0.3, 1.0), (0.3, 1.0))


def _default_bands():
    return {"delta": 4.0, "theta": 6.0, "alpha": 7.0, "beta": 2.0}


def _default_theta_gain():
    return {"NS": 1.0, "LW": 1.3, "HW": 1.8}


def _default_alpha_gain():
    return {"NS": 1.0, "LW": 0.8, "HW": 0.55}


@dataclass(frozen=True)
class SynthConfig:
    """Synthesis parameters; amplitudes are in microvolts."""

    seed: int = 0
    n_participants: int = 10
    background_exponent: float = 1.0
    background_amplitude: float = 3.0
    reference_amplitude: float = 12.0
    band_oscillators: dict = field(default_factory=_default_bands)
    theta_frontal_gain: dict = field(default_factory=_default_theta_gain)
    alpha_parietal_gain: dict = field(default_factory=_default_alpha_gain)
    mains_amplitude: float = 8.0
    blink_rate: float = 12.0
    blink_amplitude: float = 120.0
    noise_floor: float = 1.0
    am_depth: float = 0.1
    frequency_jitter: float = 0.1
    participant_jitter: float = 0.15

    def with_(self, **changes) -> "SynthConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        th, al = self.theta_frontal_gain, self.alpha_parietal_gain
        for name, g in (("theta_frontal_gain", th), ("alpha_parietal_gain", al)):
            if set(g) != {"NS", "LW", "HW"}:
                raise ConfigError(f"{name} needs exactly the keys NS, LW, HW")
            if g["NS"] != 1.0:
                raise ConfigError(f"{name}['NS'] must be 1.0")
        if not th["HW"] >= th["LW"] >= 1.0:
            raise ConfigError("theta gains must satisfy HW >= LW >= 1.0")
        if not al["HW"] <= al["LW"] <= 1.0 or al["HW"] < 0:
            raise ConfigError("alpha gains must satisfy 0 <= HW <= LW <= 1.0")
        if set(self.band_oscillators) != set(BANDS):
            raise ConfigError(f"band_oscillators needs exactly the bands {BANDS}")
        amps = dict(self.band_oscillators, background_amplitude=self.background_amplitude,
                    reference_amplitude=self.reference_amplitude, mains_amplitude=self.mains_amplitude,
                    blink_rate=self.blink_rate, blink_amplitude=self.blink_amplitude,
                    noise_floor=self.noise_floor, am_depth=self.am_depth,
                    frequency_jitter=self.frequency_jitter, participant_jitter=self.participant_jitter)
        for k, v in amps.items():
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{k} must be a finite value >= 0, got {v}")
        if self.am_depth >= 1 or self.frequency_jitter >= 1 or self.participant_jitter >= 1:
            raise ConfigError("am_depth, frequency_jitter and participant_jitter must be < 1")
        if self.n_participants < 1:
            raise ConfigError("n_participants must be >= 1")


def participant_seed(seed: int, participant_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(participant_index),))


def blink_template(sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Biphasic 400 ms blink shape, peak +1 at 125 ms, negative lobe -0.25."""
    n = int(round(BLINK_DURATION * sample_rate))
    t = np.arange(n) / sample_rate
    pos = t < 0.25
    out = np.empty(n)
    out[pos] = np.sin(np.pi * t[pos] / 0.25)
    out[~pos] = -0.25 * np.sin(np.pi * (t[~pos] - 0.25) / 0.15)
    return out


def leakage_coefficients(montage=None) -> np.ndarray:
    """Per-EEG-channel blink leakage; nonzero (in (0, 1]) on frontal channels only."""
    montage = montage or standard_montage()
    pos = montage.position_array()
    d = np.min([np.hypot(pos[:, 0] - ex, pos[:, 1] - ey) for ex, ey in _EYES], axis=0)
    frontal = montage.channels_in("frontal")
    coef = np.zeros(len(pos))
    dmin = d[frontal].min()
    coef[frontal] = 0.9 * np.exp(-(d[frontal] - dmin) / 0.2)
    return coef


def _add_blink(eog, eeg, onset, amplitude, template, leak):
    n = template.size
    shape = amplitude * template
    eog[0, onset:onset + n] += shape
    eog[1, onset:onset + n] -= shape
    for ch in np.flatnonzero(leak):
        eeg[ch, onset:onset + n] += leak[ch] * shape


def inject_blink(eog, eeg, onset, amplitude, sample_rate=SAMPLE_RATE, montage=None):
    """Return copies of ``(eog, eeg)`` with one blink added at ``onset``.

    The template goes at full amplitude onto the two vertical EOG channels
    (opposite polarity) and onto each frontal EEG channel scaled by its
    leakage coefficient.
    """
    eog = np.array(eog, dtype=float, copy=True)
    eeg = np.array(eeg, dtype=float, copy=True)
    template = blink_template(sample_rate)
    if onset < 0 or onset + template.size > eog.shape[-1]:
        raise ValidationError(
            f"blink onset {onset} with {template.size}-sample template exceeds signal length {eog.shape[-1]}")
    _add_blink(eog, eeg, int(onset), float(amplitude), template, leakage_coefficients(montage))
    return eog, eeg


class _SpectralNoise:
    """Gaussian noise synthesized in the frequency domain.

    The target power spectrum is ``colored**2 * S(f) + white**2`` where S is a
    unit-variance 1/f^k shape (flat below 1 Hz, zero at DC). One complex
    normal draw and one inverse FFT per channel produce both the colored
    background and the white floor.
    """

    def __init__(self, n, exponent):
        self.n = n
        self.m = scipy.fft.next_fast_len(max(n, 2), real=True)
        freqs = np.fft.rfftfreq(self.m, 1.0 / SAMPLE_RATE)
        shape = np.maximum(freqs, 1.0) ** (-exponent / 2.0)
        shape[0] = 0.0
        # irfft of (a + ib) * A_k has per-sample variance ~ (4 / m^2) * sum A_k^2
        self.unit_colored = shape / np.sqrt(4.0 / self.m ** 2 * np.sum(shape ** 2))
        self.unit_white = np.sqrt(self.m / 2.0)
        self.nbins = freqs.size

    def draw(self, rng, colored, white):
        amp = np.sqrt((colored * self.unit_colored) ** 2 + (white * self.unit_white) ** 2)
        amp[0] = 0.0
        spec = rng.standard_normal(2 * self.nbins, dtype=np.float32).view(np.complex64)
        spec *= amp.astype(np.float32)
        return scipy.fft.irfft(spec, self.m)[:self.n]


def colored_noise(rng, n, exponent, n_channels=1):
    """Approximately unit-variance Gaussian noise with a 1/f^exponent spectrum above 1 Hz."""
    gen = _SpectralNoise(n, exponent)
    return np.vstack([gen.draw(rng, 1.0, 0.0) for _ in range(n_channels)]).astype(np.float64)


def _phase_gains(timeline, gains):
    """Per-sample gain for a {label: gain} map; instruction phases use NS."""
    vals = []
    for e in timeline.events:
        lab = Label.for_phase(e.phase, e.level)
        lab = Label.NS if lab is None else lab
        vals.append(gains[lab.name])
    return np.repeat(np.asarray(vals, dtype=float), [e.duration for e in timeline.events])


def _band_source(rng, timeline, f0, am_depth, jitter):
    """Amplitude-modulated sinusoid restarted with new phase/frequency at each phase boundary."""
    out = np.empty(timeline.n_samples)
    fs = timeline.sample_rate
    for e in timeline.events:
        t = np.arange(e.duration) / fs
        f = f0 * (1.0 + rng.uniform(-jitter, jitter))
        f_am = rng.uniform(0.1, 0.5)
        env = 1.0 + am_depth * np.sin(2 * np.pi * f_am * t + rng.uniform(0, 2 * np.pi))
        out[e.onset:e.end] = env * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out


def spatial_footprints(montage=None) -> dict:
    montage = montage or standard_montage()
    pos = montage.position_array()
    out = {}
    for band, ((cx, cy), width) in _BAND_FOOTPRINT.items():
        d2 = (pos[:, 0] - cx) ** 2 + (pos[:, 1] - cy) ** 2
        out[band] = np.exp(-d2 / (2 * width ** 2))
    return out


def generate_session(config: SynthConfig, participant_index: int, timeline=None) -> RawSession:
    """Synthesize one participant's 1000 Hz session.

    ``timeline`` defaults to the full paradigm (35 trials, 3,100 s). Output is
    bit-identical for identical ``(config, participant_index, timeline)``.
    """
    config.validate()
    if not 0 <= participant_index < config.n_participants:
        raise ConfigError(f"participant_index {participant_index} outside [0, {config.n_participants})")
    montage = standard_montage()
    timeline = timeline or paradigm_timeline(SAMPLE_RATE)
    n = timeline.n_samples
    ss = participant_seed(config.seed, participant_index)
    r_jit, r_bg, r_osc, r_mains, r_noise, r_blink = (np.random.default_rng(s) for s in ss.spawn(6))

    j = config.participant_jitter

    def jitter(a):
        return a * (1.0 + r_jit.uniform(-j, j))

    band_amp = {b: jitter(config.band_oscillators[b]) for b in BANDS}
    bg_amp = jitter(config.background_amplitude)
    ref_amp = jitter(config.reference_amplitude)
    mains_amp = jitter(config.mains_amplitude)
    noise_amp = jitter(config.noise_floor)
    blink_amp = jitter(config.blink_amplitude)

    eeg = np.zeros((N_EEG, n))
    eog = np.zeros((N_EOG, n))
    if n == 0:
        return RawSession(f"P{participant_index + 1}", SAMPLE_RATE, eeg, eog, timeline, montage)

    noise = _SpectralNoise(n, config.background_exponent)
    if bg_amp > 0 or noise_amp > 0:
        for c in range(N_EEG):
            eeg[c] = noise.draw(r_bg, bg_amp, noise_amp)
        for c in range(N_EOG):
            eog[c] = noise.draw(r_bg, 0.3 * bg_amp, noise_amp)

    # deterministic sources mixed in with one weight matrix: eeg += W @ S
    footprints = spatial_footprints(montage)
    frontal = np.isin(np.arange(N_EEG), montage.channels_in("frontal"))
    posterior = np.isin(np.arange(N_EEG), montage.channels_in("parietal", "occipital"))
    gains = {"theta": (_phase_gains(timeline, config.theta_frontal_gain), frontal),
             "alpha": (_phase_gains(timeline, config.alpha_parietal_gain), posterior)}
    sources, weights, eog_weights = [], [], []
    for band in BANDS:
        if band_amp[band] == 0:
            continue
        src = band_amp[band] * _band_source(r_osc, timeline, BAND_FREQ[band], config.am_depth,
                                            config.frequency_jitter)
        w = footprints[band]
        if band in gains:
            g, targets = gains[band]
            sources += [src, src * g]
            weights += [np.where(targets, 0.0, w), np.where(targets, w, 0.0)]
            eog_weights += [np.zeros(N_EOG)] * 2
        else:
            sources.append(src)
            weights.append(w)
            eog_weights.append(np.zeros(N_EOG))
    if ref_amp > 0:
        sources.append(ref_amp * noise.draw(r_bg, 1.0, 0.0))
        weights.append(np.ones(N_EEG))
        eog_weights.append(np.zeros(N_EOG))
    if mains_amp > 0:
        arg = 2 * np.pi * 60.0 * np.arange(n) / SAMPLE_RATE
        phi_eeg = r_mains.uniform(0, 2 * np.pi, N_EEG)
        phi_eog = r_mains.uniform(0, 2 * np.pi, N_EOG)
        sources += [np.sin(arg), np.cos(arg)]
        del arg
        weights += [mains_amp * np.cos(phi_eeg), mains_amp * np.sin(phi_eeg)]
        eog_weights += [mains_amp * np.cos(phi_eog), mains_amp * np.sin(phi_eog)]
    if sources:
        S = np.vstack(sources)
        del sources
        W, We = np.column_stack(weights), np.column_stack(eog_weights)
        step = 1 << 16
        for k in range(0, n, step):
            sl = slice(k, k + step)
            eeg[:, sl] += W @ S[:, sl]
            eog[:, sl] += We @ S[:, sl]
        del S

    if config.blink_rate > 0 and blink_amp > 0:
        template = blink_template(SAMPLE_RATE)
        leak = leakage_coefficients(montage)
        n_blinks = r_blink.poisson(config.blink_rate * n / SAMPLE_RATE / 60.0)
        onsets = np.sort(r_blink.integers(0, n - template.size, size=n_blinks)) if n > template.size else []
        for onset in onsets:
            _add_blink(eog, eeg, int(onset), blink_amp * r_blink.uniform(0.8, 1.2), template, leak)

    return RawSession(f"P{participant_index + 1}", SAMPLE_RATE, eeg, eog, timeline, montage)


class Cohort(Sequence):
    """Lazily generated list of sessions P1..Pn.

    A full-paradigm session takes ~840 MB in float64, so sessions are
    synthesized on access instead of being held in memory together.
    """

    def __init__(self, config: SynthConfig, timeline=None):
        config.validate()
        self.config = config
        self.timeline = timeline

    def __len__(self) -> int:
        return self.config.n_participants

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return generate_session(self.config, i, self.timeline)

    @property
    def participant_ids(self) -> list[str]:
        return [f"P{i + 1}" for i in range(len(self))]


def generate_cohort(config: SynthConfig, timeline=None) -> Cohort:
    return Cohort(config, timeline)
