"""Data generators: four-mode switching system and the noisy-speech task.

The switching system cycles through four fixed linear modes in a fixed
order (1 -> 2 -> 3 -> 4) with equal durations inside each cycle; any of
the transition/input/output roles can switch with the mode or stay
pinned to one mode, independently of the others. The denoising dataset
corrupts a clean signal with the switching system's output at a fixed
SNR; the model sees the scaled noise as input and the corrupted signal
as target, so the clean signal can be recovered by subtracting the
model's prediction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "ModeSystem",
    "SLDSSpec",
    "SwitchConfig",
    "FOUR_MODE_SPEC",
    "Dataset",
    "DatasetSplit",
    "sample_sinusoid_input",
    "two_sinusoids",
    "slds_simulate",
    "enumerate_switch_configs",
    "build_four_mode_dataset",
    "synth_clean_signal",
    "mix_at_snr",
    "build_denoise_dataset",
]


@dataclass(frozen=True)
class ModeSystem:
    """One fixed single-input single-output mode: diagonal A, column B, row C."""

    a_diag: tuple[float, ...]
    b: tuple[float, ...]
    c: tuple[float, ...]

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.diag(np.array(self.a_diag)),
            np.array(self.b).reshape(-1, 1),
            np.array(self.c).reshape(1, -1),
        )


# The four golden mode systems. Every mode has |a_i| < 1 so each is stable
# on its own; the magnitudes alternate between slow (0.8, 0.9) and fast
# (0.1, 0.2) decay with sign flips across modes.
FOUR_MODE_SYSTEMS = (
    ModeSystem(a_diag=(0.9, 0.8, 0.9, 0.8), b=(0.9, 0.8, 0.9, 0.8), c=(0.1, 0.2, 0.1, 0.2)),
    ModeSystem(a_diag=(-0.1, -0.2, -0.1, -0.2), b=(-0.9, -0.8, -0.9, -0.8), c=(-0.5, -0.7, -0.7, -0.5)),
    ModeSystem(a_diag=(-0.9, -0.8, -0.9, -0.8), b=(-0.1, -0.2, -0.1, -0.2), c=(-0.1, -0.2, -0.1, -0.2)),
    ModeSystem(a_diag=(0.1, 0.2, 0.1, 0.2), b=(0.1, 0.2, 0.1, 0.2), c=(0.9, 0.8, 0.9, 0.8)),
)


@dataclass(frozen=True)
class SLDSSpec:
    """Switching system: four modes cycling in order with equal durations."""

    modes: tuple[ModeSystem, ...] = FOUR_MODE_SYSTEMS
    cycle_length: int = 128

    def __post_init__(self):
        if len(self.modes) != 4:
            raise ValueError(f"expected 4 modes, got {len(self.modes)}")
        if self.cycle_length % 4 != 0:
            raise ValueError(f"cycle length must be divisible by 4, got {self.cycle_length}")

    @property
    def mode_duration(self) -> int:
        return self.cycle_length // 4

    @property
    def state_dim(self) -> int:
        return len(self.modes[0].a_diag)


FOUR_MODE_SPEC = SLDSSpec()


@dataclass(frozen=True)
class SwitchConfig:
    """Which roles follow the mode schedule and which stay fixed.

    ``fixed_modes`` gives the 1-based mode index used for any role that
    does not switch; it is ignored for switching roles.
    """

    switch_a: bool = True
    switch_b: bool = True
    switch_c: bool = True
    fixed_modes: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        for j in self.fixed_modes:
            if not 1 <= j <= 4:
                raise ValueError(f"fixed mode indices must be in 1..4, got {self.fixed_modes}")

    @property
    def code(self) -> str:
        return "".join("o" if s else "x" for s in (self.switch_a, self.switch_b, self.switch_c))

    @classmethod
    def from_code(cls, code: str, fixed_modes=(1, 1, 1)) -> "SwitchConfig":
        if len(code) != 3 or any(ch not in "ox" for ch in code):
            raise ValueError(f"switch code must be three o/x characters, got {code!r}")
        return cls(code[0] == "o", code[1] == "o", code[2] == "o", tuple(fixed_modes))

    def to_record(self) -> dict:
        return {
            "switch_a": self.switch_a, "switch_b": self.switch_b, "switch_c": self.switch_c,
            "fixed_modes": list(self.fixed_modes),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SwitchConfig":
        return cls(rec["switch_a"], rec["switch_b"], rec["switch_c"], tuple(rec["fixed_modes"]))


def enumerate_switch_configs(switch: SwitchConfig) -> list[SwitchConfig]:
    """All concrete mode assignments for the non-switching roles.

    A fully switching config is its own single assignment; every fixed
    role multiplies the count by 4 (so e.g. one switching role leaves 16
    fixed pairs and the fully fixed case has 64 combinations).
    """
    options = [
        range(1, 5) if not flag else (switch.fixed_modes[i],)
        for i, flag in enumerate((switch.switch_a, switch.switch_b, switch.switch_c))
    ]
    return [replace(switch, fixed_modes=combo) for combo in itertools.product(*options)]


def two_sinusoids(n: int, l1: float, phi1: float, l2: float, phi2: float) -> np.ndarray:
    """Sum of two unit sinusoids sin(2*pi*l*t/n + phi) on t = 0..n-1."""
    t = np.arange(n)
    return np.sin(2.0 * np.pi * l1 * t / n + phi1) + np.sin(2.0 * np.pi * l2 * t / n + phi2)


def sample_sinusoid_input(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random mixture of two sinusoids, length n.

    Each component draws a continuous frequency index l uniform on
    [0, n/2] (so frequencies up to Nyquist, including a constant at
    l = 0) and a phase uniform on [0, 2*pi]. Bounded in [-2, 2].
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    l1 = rng.uniform(0.0, n / 2.0)
    phi1 = rng.uniform(0.0, 2.0 * np.pi)
    l2 = rng.uniform(0.0, n / 2.0)
    phi2 = rng.uniform(0.0, 2.0 * np.pi)
    return two_sinusoids(n, l1, phi1, l2, phi2)


def _role_schedule(spec: SLDSSpec, n: int, switching: bool, fixed_mode: int,
                   values: list[np.ndarray]) -> np.ndarray:
    """Stack per-time role vectors: (n, state_dim) picking the active mode."""
    if not switching:
        return np.tile(values[fixed_mode - 1], (n, 1))
    t = np.arange(n)
    mode_idx = (4 * (t % spec.cycle_length)) // spec.cycle_length  # 0..3
    table = np.stack(values)  # (4, state_dim)
    return table[mode_idx]


def _slds_simulate_batch(spec: SLDSSpec, switch: SwitchConfig, u: np.ndarray,
                         x0: Optional[np.ndarray] = None,
                         return_state: bool = False):
    """Vectorized simulation of many independent sequences, u is (m, n)."""
    m, n = u.shape
    if n % 4 != 0:
        raise ValueError(f"sequence length must be divisible by 4, got {n}")
    a_sched = _role_schedule(spec, n, switch.switch_a, switch.fixed_modes[0],
                             [np.array(md.a_diag) for md in spec.modes])
    b_sched = _role_schedule(spec, n, switch.switch_b, switch.fixed_modes[1],
                             [np.array(md.b) for md in spec.modes])
    c_sched = _role_schedule(spec, n, switch.switch_c, switch.fixed_modes[2],
                             [np.array(md.c) for md in spec.modes])
    x = np.zeros((m, spec.state_dim)) if x0 is None else np.array(x0, dtype=np.float64)
    y = np.empty((m, n))
    y[:, 0] = x @ c_sched[0]
    for t in range(1, n):
        x = a_sched[t] * x + u[:, t - 1, None] * b_sched[t]
        y[:, t] = x @ c_sched[t]
    if return_state:
        return y, x
    return y


def slds_simulate(spec: SLDSSpec, switch: SwitchConfig, u, x0=None) -> np.ndarray:
    """Run the switching system over one input sequence.

    Inside mode m's window the recurrence uses mode m's matrices for each
    switching role (and the pinned mode's for fixed roles); the state
    carries continuously across mode boundaries. Sequences longer than
    one cycle repeat the mode schedule.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError(f"input must be 1-d, got shape {u.shape}")
    x0 = None if x0 is None else np.asarray(x0, dtype=np.float64).reshape(1, -1)
    return _slds_simulate_batch(spec, switch, u[None, :], x0)[0]


class DatasetSplit(NamedTuple):
    inputs: np.ndarray
    targets: np.ndarray
    clean: Optional[np.ndarray]


@dataclass
class Dataset:
    """Batched input/target sequence pairs with named index splits."""

    inputs: np.ndarray  # (samples, channels, T)
    targets: np.ndarray
    splits: dict[str, tuple[int, int]]
    seed: int
    provenance: dict
    clean: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape:
            raise ValueError("inputs and targets must have identical shapes")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def split_names(self) -> tuple[str, ...]:
        return tuple(self.splits)

    def split(self, name: str) -> DatasetSplit:
        lo, hi = self.splits[name]
        clean = None if self.clean is None else self.clean[lo:hi]
        return DatasetSplit(self.inputs[lo:hi], self.targets[lo:hi], clean)


def build_four_mode_dataset(switch: SwitchConfig, n_samples: int = 2000, n: int = 128,
                            seed: int = 0, train_fraction: float = 0.8,
                            spec: SLDSSpec = FOUR_MODE_SPEC) -> Dataset:
    """Input/output pairs of the switching system under random inputs.

    Each sample draws its own sinusoid mixture from a seed derived from
    (seed, sample index), so regeneration is bit-identical and
    order-independent. The first ``train_fraction`` of samples form the
    train split, the rest the test split.
    """
    inputs = np.empty((n_samples, n))
    for i in range(n_samples):
        rng = np.random.default_rng([0x4D01, seed, i])
        inputs[i] = sample_sinusoid_input(n, rng)
    outputs = _slds_simulate_batch(spec, switch, inputs)
    n_train = int(round(n_samples * train_fraction))
    return Dataset(
        inputs=inputs[:, None, :],
        targets=outputs[:, None, :],
        splits={"train": (0, n_train), "test": (n_train, n_samples)},
        seed=seed,
        provenance={
            "task": "four_mode", "n_samples": n_samples, "n": n,
            "train_fraction": train_fraction, "switch": switch.to_record(),
            "cycle_length": spec.cycle_length,
        },
    )


def synth_clean_signal(length: int = 48000, rng: np.random.Generator | None = None,
                       sample_rate: int = 48000) -> np.ndarray:
    """Deterministic speech-like signal with unit average power.

    Alternates voiced stretches (harmonic stacks on a drifting
    fundamental, raised-cosine onsets/offsets, syllable-rate amplitude
    movement) with softer unvoiced stretches (low-pass shaped noise).
    Spectral energy concentrates in the low kHz range, far below the
    8 kHz band edge used by the generation checks.
    """
    if length < 1:
        raise ValueError(f"need length >= 1, got {length}")
    rng = np.random.default_rng(0) if rng is None else rng
    out = np.zeros(length)
    pos = 0
    voiced = rng.uniform() < 0.8
    while pos < length:
        if voiced:
            dur = int(rng.uniform(0.08, 0.25) * sample_rate)
        else:
            dur = int(rng.uniform(0.04, 0.12) * sample_rate)
        dur = max(8, min(dur, length - pos))
        t = np.arange(dur) / sample_rate
        if voiced:
            f0 = rng.uniform(90.0, 220.0)
            drift = rng.uniform(-0.08, 0.08)
            inst_f0 = f0 * (1.0 + drift * t / max(t[-1], 1e-9))
            phase0 = np.cumsum(2.0 * np.pi * inst_f0 / sample_rate)
            seg = np.zeros(dur)
            n_harm = max(1, int(3800.0 / f0))
            for k in range(1, n_harm + 1):
                amp = rng.uniform(0.5, 1.0) / k
                seg += amp * np.sin(k * phase0 + rng.uniform(0.0, 2.0 * np.pi))
            seg *= rng.uniform(0.5, 1.0)
            # syllable-rate movement keeps the envelope from sounding static
            seg *= 1.0 + 0.4 * np.sin(2.0 * np.pi * rng.uniform(3.0, 8.0) * t
                                      + rng.uniform(0.0, 2.0 * np.pi))
        else:
            noise = rng.standard_normal(dur)
            spec = np.fft.rfft(noise)
            freqs = np.fft.rfftfreq(dur, d=1.0 / sample_rate)
            spec *= 1.0 / (1.0 + (freqs / 1500.0) ** 2)
            seg = np.fft.irfft(spec, n=dur)
            peak = np.abs(seg).max()
            if peak > 0:
                seg *= rng.uniform(0.1, 0.3) / peak
        ramp = max(2, dur // 8)
        window = np.ones(dur)
        window[:ramp] = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        window[-ramp:] = window[:ramp][::-1]
        out[pos:pos + dur] = seg * window
        pos += dur
        voiced = not voiced
    power = np.mean(out * out)
    if power <= 0:
        raise RuntimeError("generated signal has zero power")
    return out / math.sqrt(power)


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale ``noise`` so that 10*log10(P_clean / P_noise) equals snr_db.

    Returns (noisy, scaled_noise) with noisy = clean + scaled_noise; the
    stated ratio holds exactly by construction.
    """
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {noise.shape}")
    p_clean = float(np.mean(clean * clean))
    p_noise = float(np.mean(noise * noise))
    if p_clean <= 0.0:
        raise ValueError("clean signal has zero power")
    if p_noise <= 0.0:
        raise ValueError("noise signal has zero power")
    scale = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = noise * scale
    return clean + scaled, scaled


def _load_wav_pool(source: str | Path, needed: int, length: int) -> list[np.ndarray]:
    from .wavio import read_wav

    path = Path(source)
    if path.is_dir():
        files = sorted(path.glob("*.wav"))
        if not files:
            raise IOError(f"no .wav files found in {path}")
    elif path.is_file():
        files = [path]
    else:
        raise IOError(f"wav source {path} does not exist")
    pool = []
    for f in files:
        _, samples = read_wav(f)
        if samples.size < length:
            raise IOError(f"{f} holds {samples.size} samples, need {length}")
        pool.append(samples[:length])
    return pool


def build_denoise_dataset(n_train: int = 500, n_val: int = 100, n_test: int = 100,
                          seed: int = 0, length: int = 48000, cycle: int = 128,
                          snr_db: float = 5.0, clean_source: str = "synthetic",
                          carry_state: bool = False,
                          spec: SLDSSpec = FOUR_MODE_SPEC) -> Dataset:
    """Clean signals corrupted by switching-system noise at a fixed SNR.

    Noise for each sample is built as length/cycle concatenated cycles of
    the fully switching four-mode system, each cycle driven by a fresh
    sinusoid mixture; by default the system state resets at every cycle
    boundary so the noise pattern is exactly cyclo-stationary
    (``carry_state`` keeps the state running across boundaries instead).
    Model inputs are the scaled noise sequences, targets the corrupted
    signals; the clean reference is stored alongside for metrics.
    """
    if length % cycle != 0:
        raise ValueError(f"length {length} is not a multiple of the {cycle}-step cycle")
    n_cycles = length // cycle
    n_total = n_train + n_val + n_test
    switch = SwitchConfig(True, True, True)

    wav_pool = None
    if clean_source != "synthetic":
        wav_pool = _load_wav_pool(clean_source, n_total, length)

    inputs = np.empty((n_total, 1, length))
    targets = np.empty((n_total, 1, length))
    cleans = np.empty((n_total, 1, length))
    for i in range(n_total):
        rng = np.random.default_rng([0x4D02, seed, i])
        if wav_pool is None:
            clean = synth_clean_signal(length, rng)
        else:
            clean = wav_pool[i % len(wav_pool)].copy()
            power = float(np.mean(clean * clean))
            if power <= 0.0:
                raise IOError(f"wav clip {i % len(wav_pool)} has zero power")
            clean = clean / math.sqrt(power)
        drive = np.stack([sample_sinusoid_input(cycle, rng) for _ in range(n_cycles)])
        if carry_state:
            noise = np.empty((n_cycles, cycle))
            x = np.zeros((1, spec.state_dim))
            for ci in range(n_cycles):
                y, x = _slds_simulate_batch(spec, switch, drive[ci:ci + 1], x,
                                            return_state=True)
                noise[ci] = y[0]
        else:
            noise = _slds_simulate_batch(spec, switch, drive)
        noisy, scaled = mix_at_snr(clean, noise.reshape(-1), snr_db)
        inputs[i, 0] = scaled
        targets[i, 0] = noisy
        cleans[i, 0] = clean

    return Dataset(
        inputs=inputs, targets=targets,
        splits={
            "train": (0, n_train),
            "val": (n_train, n_train + n_val),
            "test": (n_train + n_val, n_total),
        },
        seed=seed,
        provenance={
            "task": "denoise", "n_train": n_train, "n_val": n_val, "n_test": n_test,
            "length": length, "cycle": cycle, "snr_db": snr_db,
            "clean_source": clean_source, "carry_state": carry_state,
        },
        clean=cleans,
    )


