"""Synthetic call-scenario corpus: speech-like signals, an echo path, a family
of graded echo cancellers, and a deterministic rule-based MOS oracle.

The oracle is the corpus's ground-truth definition. Echo annoyance is scored
from the perceived residual-echo level

    level = 5 * log10((P_res + eps) / (P_ref + P_res + eps))   [half-dB scale]

mapped linearly onto the opinion scale between the knots level >= -5 -> 1 and
level <= -40 -> 5. P_ref is the near-end speech power when the near end is
active, else a nominal speech power of 1e-2 (without a fixed reference the
ratio would be degenerate for far-end single talk, where the near end is
silent). The half-dB compression spreads a 0-60 dB suppression sweep across
the whole scale instead of saturating past ~35 dB. Other degradations are
scored from the near-end signal-to-distortion ratio with knots 0 dB -> 1 and
30 dB -> 5. Scenario label rules apply on top: near-end single talk pins the
echo score at 5, far-end single talk pins the other score at 5.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import signal as sps

from .audio import PIPELINE_RATE, AudioClip, write_wav
from .errors import LengthMismatchError
from .types import MosPair, Scenario

POWER_EPS = 1e-12
NOMINAL_SPEECH_POWER = 1e-2

ECHO_LEVEL_COMPRESSION = 0.5     # perceived level = compression * power-ratio dB
ECHO_LEVEL_TOP = -5.0            # perceived level at or above this -> MOS 1
ECHO_LEVEL_BOTTOM = -40.0        # at or below this -> MOS 5
SDR_BOTTOM = 0.0                 # SDR at or below this -> MOS 1
SDR_TOP = 30.0                   # at or above this -> MOS 5

DEFAULT_MIX = (0.456, 0.267, 0.277)
_SCENARIO_ORDER = (Scenario.NEAR_END_SINGLE_TALK, Scenario.FAR_END_SINGLE_TALK,
                   Scenario.DOUBLE_TALK)

# IIR approximation of a pink (1/f) spectrum.
_PINK_B = (0.049922035, -0.095993537, 0.050612699, -0.004408786)
_PINK_A = (1.0, -2.494956002, 2.017265875, -0.522189400)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    duration_s: float
    echo_delay_ms: float
    echo_gain_db: float
    echo_nonlinearity: float
    noise_floor_db: Optional[float]
    seed: int

    def __post_init__(self):
        if not 3.0 <= self.duration_s <= 14.5:
            raise ValueError("duration_s must be in [3, 14.5]")
        if not 10.0 <= self.echo_delay_ms <= 300.0:
            raise ValueError("echo_delay_ms must be in [10, 300]")
        if not -25.0 <= self.echo_gain_db <= -3.0:
            raise ValueError("echo_gain_db must be in [-25, -3]")
        if not 0.0 < self.echo_nonlinearity <= 1.0:
            raise ValueError("echo_nonlinearity must be in (0, 1]")
        if self.noise_floor_db is not None and not -70.0 <= self.noise_floor_db <= -30.0:
            raise ValueError("noise_floor_db must be in [-70, -30] (or None to disable)")


@dataclass(frozen=True)
class SyntheticAec:
    """Stand-in echo canceller: attenuates the true echo, damages the near end."""

    id: str
    echo_suppression_db: float
    nearend_distortion: float

    def __post_init__(self):
        if not 0.0 <= self.echo_suppression_db <= 60.0:
            raise ValueError("echo_suppression_db must be in [0, 60]")
        if not 0.0 <= self.nearend_distortion <= 1.0:
            raise ValueError("nearend_distortion must be in [0, 1]")


@dataclass(frozen=True)
class ManifestEntry:
    near: str
    far: str
    enhanced: str
    scenario: Scenario
    echo_mos: float
    other_mos: float
    aec_id: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "near": self.near, "far": self.far, "enhanced": self.enhanced,
            "scenario": self.scenario.value,
            "echo_mos": self.echo_mos, "other_mos": self.other_mos,
            "aec_id": self.aec_id, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(near=d["near"], far=d["far"], enhanced=d["enhanced"],
                   scenario=Scenario(d["scenario"]), echo_mos=float(d["echo_mos"]),
                   other_mos=float(d["other_mos"]), aec_id=d["aec_id"], seed=int(d["seed"]))


@dataclass
class DatasetManifest:
    entries: list
    mix: tuple = DEFAULT_MIX
    version: int = 1
    root: Optional[Path] = field(default=None, compare=False)

    def counts_by_scenario(self) -> dict:
        counts = {s.value: 0 for s in _SCENARIO_ORDER}
        for e in self.entries:
            counts[e.scenario.value] += 1
        return counts

    def resolve(self, rel: str) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / rel

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "mix": list(self.mix),
            "entries": [e.to_dict() for e in self.entries],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = [ManifestEntry.from_dict(d) for d in doc["entries"]]
    return DatasetManifest(entries=entries, mix=tuple(doc["mix"]),
                           version=int(doc["version"]), root=path.parent)


def gen_speech_like(duration_s: float, seed: int) -> AudioClip:
    """Deterministic speech-like signal.

    Pink-ish noise through two resonant peaks (crude formants), a 2-6 Hz
    syllabic amplitude modulation, and roughly 30% silence gaps; peak
    normalized to 0.5.
    """
    if not 1.0 <= duration_s <= 30.0:
        raise ValueError("duration_s must be in [1, 30]")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * PIPELINE_RATE))
    carrier = sps.lfilter(_PINK_B, _PINK_A, rng.standard_normal(n))
    for f0, bw in ((rng.uniform(300, 900), rng.uniform(60, 150)),
                   (rng.uniform(1100, 2500), rng.uniform(80, 200))):
        b, a = sps.iirpeak(f0, f0 / bw, fs=PIPELINE_RATE)
        carrier = sps.lfilter(b, a, carrier)
    t = np.arange(n) / PIPELINE_RATE
    rate = rng.uniform(2.0, 6.0)
    syllables = 0.55 - 0.45 * np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    gate = _speech_gate(n, rng)
    x = carrier * syllables * gate
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 0.5 / peak
    return AudioClip(x, PIPELINE_RATE)


def _speech_gate(n: int, rng: np.random.Generator) -> np.ndarray:
    """Alternating speech bursts and hard silence gaps with 5 ms edge ramps."""
    gate = np.zeros(n)
    ramp = int(0.005 * PIPELINE_RATE)
    edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    pos = 0
    talking = True
    while pos < n:
        if talking:
            seg = int(rng.uniform(0.25, 0.9) * PIPELINE_RATE)
            lo, hi = pos, min(pos + seg, n)
            gate[lo:hi] = 1.0
            if lo + ramp <= n:
                gate[lo:lo + ramp] = edge
            if hi - ramp >= 0 and hi < n:
                gate[hi - ramp:hi] = edge[::-1]
        else:
            seg = int(rng.uniform(0.1, 0.45) * PIPELINE_RATE)
        pos += seg
        talking = not talking
    return gate


def _delay(x: np.ndarray, n_samples: int) -> np.ndarray:
    if n_samples <= 0:
        return x.copy()
    out = np.zeros_like(x)
    out[n_samples:] = x[:-n_samples] if n_samples < x.size else 0.0
    return out


@dataclass(frozen=True)
class SimulatedCall:
    near_speech: AudioClip
    far_end: AudioClip
    mic: AudioClip
    echo: AudioClip


def _simulate(spec: ScenarioSpec) -> SimulatedCall:
    child_seeds = np.random.SeedSequence(spec.seed).generate_state(3)
    n = int(round(spec.duration_s * PIPELINE_RATE))
    if spec.scenario is Scenario.FAR_END_SINGLE_TALK:
        near = np.zeros(n)
    else:
        near = gen_speech_like(spec.duration_s, int(child_seeds[0])).samples
    if spec.scenario is Scenario.NEAR_END_SINGLE_TALK:
        far = np.zeros(n)
    else:
        far = gen_speech_like(spec.duration_s, int(child_seeds[1])).samples
    delay_samples = int(round(spec.echo_delay_ms * PIPELINE_RATE / 1000.0))
    echo = _delay(far, delay_samples) * 10.0 ** (spec.echo_gain_db / 20.0)
    thr = spec.echo_nonlinearity
    echo = np.clip(echo, -thr, thr)
    if spec.noise_floor_db is None:
        noise = 0.0
    else:
        noise_rng = np.random.default_rng(int(child_seeds[2]))
        noise = noise_rng.standard_normal(n) * 10.0 ** (spec.noise_floor_db / 20.0)
    mic = near + echo + noise
    rate = PIPELINE_RATE
    return SimulatedCall(AudioClip(near, rate), AudioClip(far, rate),
                         AudioClip(mic, rate), AudioClip(echo, rate))


def simulate_scenario(spec: ScenarioSpec):
    """Build one call: returns (near_speech, far_end, mic) clips."""
    sim = _simulate(spec)
    return sim.near_speech, sim.far_end, sim.mic


def _spectral_dropout(x: np.ndarray, fraction: float, rng: np.random.Generator):
    """Zero a random fraction of STFT cells; returns (signal, dropped, total).

    The mask thresholds one uniform draw, so for a fixed rng seed the dropped
    set grows monotonically with the fraction.
    """
    _, _, z = sps.stft(x, fs=PIPELINE_RATE, window="hann", nperseg=512, noverlap=256)
    mask = rng.random(z.shape) < fraction
    z[mask] = 0.0
    _, y = sps.istft(z, fs=PIPELINE_RATE, window="hann", nperseg=512, noverlap=256)
    if y.size < x.size:
        y = np.pad(y, (0, x.size - y.size))
    return y[: x.size], int(mask.sum()), int(mask.size)


def apply_synthetic_aec(mic: AudioClip, far_end: AudioClip, aec: SyntheticAec,
                        true_echo: AudioClip,
                        rng: Optional[np.random.Generator] = None) -> AudioClip:
    """Produce the enhanced signal for a simulated call.

    Uses oracle access to the true echo (legitimate inside the simulator):
    the echo is attenuated by 10^(-suppression/20) and the remaining near-end
    content suffers spectral dropout of `nearend_distortion` of its STFT
    cells. `far_end` is accepted for interface parity with a real canceller
    but plays no role in this idealized one.
    """
    if not len(mic) == len(far_end) == len(true_echo):
        raise LengthMismatchError("mic, far_end and true_echo must be equally long")
    enhanced, _ = _apply_with_residual(mic, aec, true_echo, rng)
    return enhanced


def _apply_with_residual(mic: AudioClip, aec: SyntheticAec, true_echo: AudioClip,
                         rng: Optional[np.random.Generator]):
    if aec.echo_suppression_db == 0.0 and aec.nearend_distortion == 0.0:
        # pass-through canceller: keep the mic signal bit-exact
        residual = AudioClip(true_echo.samples.copy(), mic.sample_rate)
        return AudioClip(mic.samples.copy(), mic.sample_rate), residual
    if rng is None:
        rng = np.random.default_rng(0)
    near_part = mic.samples - true_echo.samples
    if aec.nearend_distortion > 0.0:
        near_part, _, _ = _spectral_dropout(near_part, aec.nearend_distortion, rng)
    residual = true_echo.samples * 10.0 ** (-aec.echo_suppression_db / 20.0)
    rate = mic.sample_rate
    return AudioClip(near_part + residual, rate), AudioClip(residual, rate)


def _ramp(value: float, knee_low: float, knee_high: float) -> float:
    """Linear 1..5 ramp between two knots, clamped at both ends."""
    pos = (value - knee_low) / (knee_high - knee_low)
    return float(np.clip(1.0 + 4.0 * pos, 1.0, 5.0))


def oracle_mos(near_speech: AudioClip, true_residual_echo: AudioClip,
               enhanced: AudioClip, scenario: Scenario) -> MosPair:
    """Deterministic ground-truth MOS pair for a simulated enhanced signal."""
    if not len(near_speech) == len(true_residual_echo) == len(enhanced):
        raise LengthMismatchError("oracle inputs must be equally long")
    p_near = float(np.mean(near_speech.samples**2))
    p_res = float(np.mean(true_residual_echo.samples**2))

    if not scenario.far_active:
        echo_mos = 5.0
    else:
        p_ref = p_near if scenario.near_active else NOMINAL_SPEECH_POWER
        level = ECHO_LEVEL_COMPRESSION * 10.0 * (
            np.log10(p_res + POWER_EPS) - np.log10(p_ref + p_res + POWER_EPS))
        echo_mos = _ramp(-level, -ECHO_LEVEL_TOP, -ECHO_LEVEL_BOTTOM)

    if scenario is Scenario.FAR_END_SINGLE_TALK:
        other_mos = 5.0
    else:
        distortion = enhanced.samples - true_residual_echo.samples - near_speech.samples
        p_dist = float(np.mean(distortion**2))
        sdr = 10.0 * (np.log10(p_near + POWER_EPS) - np.log10(p_dist + POWER_EPS))
        other_mos = _ramp(sdr, SDR_BOTTOM, SDR_TOP)
    return MosPair(echo_mos, other_mos)


def graded_roster(n: int = 5) -> list:
    """Roster of n cancellers evenly graded from worst to best."""
    if n < 1:
        raise ValueError("roster needs at least one canceller")
    supp = np.linspace(0.0, 60.0, n) if n > 1 else np.array([30.0])
    dist = np.linspace(0.5, 0.0, n) if n > 1 else np.array([0.2])
    return [SyntheticAec(id=f"aec{i:02d}", echo_suppression_db=float(s),
                         nearend_distortion=float(d))
            for i, (s, d) in enumerate(zip(supp, dist))]


def largest_remainder_counts(n: int, mix) -> list:
    """Integer scenario counts for n clips by largest-remainder rounding."""
    quotas = [n * m for m in mix]
    floors = [int(np.floor(q)) for q in quotas]
    remainders = [q - f for q, f in zip(quotas, floors)]
    order = sorted(range(len(mix)), key=lambda i: (-remainders[i], i))
    counts = floors[:]
    for i in order[: n - sum(floors)]:
        counts[i] += 1
    return counts


def _max_workers() -> int:
    raw = os.environ.get("AECKIT_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        return 1
    return max(1, min(cap, os.cpu_count() or 1))


def _entry_seeds(seed: int, index: int) -> np.ndarray:
    return np.random.SeedSequence([seed, index]).generate_state(3)


def _build_entry(index: int, scenario: Scenario, aec: SyntheticAec, seed: int,
                 duration_range, label_jitter_std: float):
    keys = _entry_seeds(seed, index)
    param_rng = np.random.default_rng(int(keys[0]))
    spec = ScenarioSpec(
        scenario=scenario,
        duration_s=float(param_rng.uniform(*duration_range)),
        echo_delay_ms=float(param_rng.uniform(10.0, 300.0)),
        echo_gain_db=float(param_rng.uniform(-25.0, -3.0)),
        echo_nonlinearity=float(param_rng.uniform(0.1, 1.0)),
        noise_floor_db=float(param_rng.uniform(-70.0, -30.0)),
        seed=int(keys[1]),
    )
    sim = _simulate(spec)
    enhanced, residual = _apply_with_residual(
        sim.mic, aec, sim.echo, np.random.default_rng(int(keys[2])))
    labels = oracle_mos(sim.near_speech, residual, enhanced, scenario)
    if label_jitter_std > 0.0:
        jitter = param_rng.normal(0.0, label_jitter_std, size=2)
        labels = MosPair(float(np.clip(labels.echo_mos + jitter[0], 1.0, 5.0)),
                         float(np.clip(labels.other_mos + jitter[1], 1.0, 5.0)))
    return spec, sim, enhanced, labels


def build_dataset(n_clips: int, scenario_mix=DEFAULT_MIX, aec_roster=None,
                  out_dir=".", seed: int = 0, duration_range=(3.0, 14.5),
                  label_jitter_std: float = 0.0) -> DatasetManifest:
    """Generate WAV triples plus a JSON manifest; deterministic per seed.

    Cancellers are assigned round-robin by entry index. Every entry's content
    is reproducible from the per-entry seed recorded in the manifest.
    """
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    if abs(sum(scenario_mix) - 1.0) > 1e-9 or len(scenario_mix) != 3:
        raise ValueError("scenario_mix must be three fractions summing to 1")
    if aec_roster is None:
        aec_roster = graded_roster()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    counts = largest_remainder_counts(n_clips, scenario_mix)
    scenarios = [s for s, c in zip(_SCENARIO_ORDER, counts) for _ in range(c)]
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C]))
    shuffle_rng.shuffle(scenarios)

    def job(i):
        return _build_entry(i, scenarios[i], aec_roster[i % len(aec_roster)],
                            seed, duration_range, label_jitter_std)

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_clips)))
    else:
        results = [job(i) for i in range(n_clips)]

    entries = []
    for i, (spec, sim, enhanced, labels) in enumerate(results):
        names = {role: f"clip_{i:05d}_{role}.wav" for role in ("near", "far", "enhanced")}
        write_wav(sim.mic, out_dir / names["near"])
        write_wav(sim.far_end, out_dir / names["far"])
        write_wav(enhanced, out_dir / names["enhanced"])
        entries.append(ManifestEntry(
            near=names["near"], far=names["far"], enhanced=names["enhanced"],
            scenario=spec.scenario, echo_mos=labels.echo_mos,
            other_mos=labels.other_mos, aec_id=aec_roster[i % len(aec_roster)].id,
            seed=spec.seed))
    manifest = DatasetManifest(entries=entries, mix=tuple(scenario_mix), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
