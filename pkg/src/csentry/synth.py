"""Synthetic HPC trace generation.

Benign traces draw the three counters around configurable base rates with
multiplicative log-normal noise; RSA-like victims additionally modulate
cache loads with a slow mean-reverting random walk, and their miss rate
with a second, gentler walk, giving them the higher run-to-run variability
that makes attacks on them harder to spot: against a drifting miss ratio
only local contrast identifies an attack, not any fixed threshold.

Two optional decoy processes ride on the benign baseline, off by default
and enabled with calibrated rates by default_config(). Activity bursts
(scheduler migrations, page-fault storms) raise loads and instructions
together for a few intervals, with misses following loads proportionally,
so the miss ratio stays benign. Miss flurries (a neighbor thrashing the
shared cache) inflate only the miss channel for a couple of intervals, at
magnitudes overlapping an attack's. Both appear in benign and attacked
traces alike, so neither a magnitude threshold nor a lone ratio test can
separate the classes; an attack is recognizable only by its temporal
shape against the decoys.

Attack traces start from the benign baseline of the same seed and overlay
the attack's signature on the miss channel: FLUSH+RELOAD inflates isolated
single intervals (line-targeted reload spikes), distinguishable from the
wider flurries only by their one-interval width; PRIME+PROBE inflates
periodic multi-interval bursts (set-sweeping probes) and slows the victim's
instruction rate while a burst is in flight, so its mark is regular spacing
where flurries arrive at random. Bursts keep a strict period but start at
a per-trace random phase, since an attacker's probe loop is not
synchronized with the monitor's sampling clock.

Generation is pure per (config, seed): the benign baseline and the attack
overlay consume separate Philox streams, so a zero-intensity attack is
byte-identical to the benign trace of the same config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError
from .traces import Attack, HpcSample, Label, Scenario, Source, Trace, Victim

DEFAULT_INTERVAL_MS = 10.0
DEFAULT_N_SAMPLES = 375
DEFAULT_BASE_INSTRUCTIONS = 5e6
DEFAULT_BASE_LOADS = 5e4
DEFAULT_BASE_MISS_RATE = 0.02
DEFAULT_MISS_AMPLITUDE = 12.0
# A full reload spike dwarfs the baseline; a probe sweep only adds the
# touched sets, so its per-interval inflation is far milder.
PRIME_PROBE_MISS_AMPLITUDE = 3.0
DEFAULT_BURST_PERIOD = 8
DEFAULT_BURST_WIDTH = 2
DEFAULT_SPIKE_PROB = 0.15
DEFAULT_NOISE_CV = 0.35
RSA_IRREGULARITY = 0.5
DEFAULT_TRACES_PER_LABEL = 40
DEFAULT_DISTRACTOR_RATE = 0.04
DEFAULT_DISTRACTOR_MIN_LEN = 2
DEFAULT_DISTRACTOR_MAX_LEN = 4
DEFAULT_DISTRACTOR_LOAD_BOOST = 1.8
DEFAULT_DISTRACTOR_INSTR_BOOST = 1.4
DEFAULT_FLURRY_RATE = 0.05
DEFAULT_FLURRY_LEN = 2
DEFAULT_FLURRY_AMPLITUDE = 3.0
# An irregular victim's own miss ratio wanders at a fraction of its load
# irregularity.
RSA_MISS_RATE_IRREGULARITY = 0.3

# Fractional instruction-count reduction while a PRIME+PROBE burst runs.
BURST_SLOWDOWN = 0.10

# Mean-reversion factor of the victim-irregularity walk; at the default
# 10 ms interval this gives a ~0.5 s correlation time.
WALK_RHO = 0.98

# Log-scale spread of a flurry's miss inflation around its median.
FLURRY_SIGMA = 0.2

_STREAM_BENIGN = 0
_STREAM_ATTACK = 1


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape parameters of one synthetic trace.

    ``victim_irregularity`` is 0 for AES-like regular victims and positive
    for RSA-like irregular ones; ``attack_*`` fields are ignored by benign
    generation.
    """

    scenario: Scenario
    seed: int
    n_samples: int = DEFAULT_N_SAMPLES
    interval_ms: float = DEFAULT_INTERVAL_MS
    base_instructions: float = DEFAULT_BASE_INSTRUCTIONS
    base_loads: float = DEFAULT_BASE_LOADS
    base_miss_rate: float = DEFAULT_BASE_MISS_RATE
    victim_irregularity: float = 0.0
    miss_rate_irregularity: float = 0.0
    attack_burst_period: int = DEFAULT_BURST_PERIOD
    attack_burst_width: int = DEFAULT_BURST_WIDTH
    attack_spike_prob: float = DEFAULT_SPIKE_PROB
    attack_miss_amplitude: float = DEFAULT_MISS_AMPLITUDE
    noise_cv: float = DEFAULT_NOISE_CV
    distractor_rate: float = 0.0
    distractor_min_len: int = DEFAULT_DISTRACTOR_MIN_LEN
    distractor_max_len: int = DEFAULT_DISTRACTOR_MAX_LEN
    distractor_load_boost: float = DEFAULT_DISTRACTOR_LOAD_BOOST
    distractor_instr_boost: float = DEFAULT_DISTRACTOR_INSTR_BOOST
    flurry_rate: float = 0.0
    flurry_len: int = DEFAULT_FLURRY_LEN
    flurry_amplitude: float = DEFAULT_FLURRY_AMPLITUDE

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.interval_ms <= 0:
            raise ConfigError("interval_ms must be positive")
        if self.base_instructions <= 0 or self.base_loads <= 0:
            raise ConfigError("base rates must be positive")
        if not 0.0 < self.base_miss_rate < 1.0:
            raise ConfigError("base_miss_rate must be in (0, 1)")
        if self.victim_irregularity < 0:
            raise ConfigError("victim_irregularity must be non-negative")
        if self.miss_rate_irregularity < 0:
            raise ConfigError("miss_rate_irregularity must be non-negative")
        if self.attack_burst_period < 1 or self.attack_burst_width < 1:
            raise ConfigError("burst period and width must be positive")
        if self.attack_burst_width >= self.attack_burst_period:
            raise ConfigError(
                f"attack_burst_width {self.attack_burst_width} must be smaller "
                f"than attack_burst_period {self.attack_burst_period}"
            )
        if not 0.0 <= self.attack_spike_prob <= 1.0:
            raise ConfigError("attack_spike_prob must be in [0, 1]")
        if self.attack_miss_amplitude <= 1.0:
            raise ConfigError("attack_miss_amplitude must exceed 1")
        if self.noise_cv < 0:
            raise ConfigError("noise_cv must be non-negative")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError("distractor_rate must be in [0, 1]")
        if self.distractor_min_len < 1:
            raise ConfigError("distractor_min_len must be positive")
        if self.distractor_max_len < self.distractor_min_len:
            raise ConfigError(
                "distractor_max_len must be at least distractor_min_len"
            )
        for name in ("distractor_load_boost", "distractor_instr_boost"):
            if getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be at least 1")
        if not 0.0 <= self.flurry_rate <= 1.0:
            raise ConfigError("flurry_rate must be in [0, 1]")
        if self.flurry_len < 1:
            raise ConfigError("flurry_len must be positive")
        if self.flurry_amplitude < 1.0:
            raise ConfigError("flurry_amplitude must be at least 1")


def default_config(scenario: Scenario, seed: int, **overrides) -> GeneratorConfig:
    """Config with calibrated corpus defaults, specialized to the scenario.

    RSA victims get the irregular load profile; PRIME+PROBE gets its
    milder per-interval miss inflation. Both decoy processes are enabled
    at the rates the shipped corpora are calibrated for; construct
    GeneratorConfig directly for the bare noise-plus-attack process.
    """
    is_rsa = scenario.victim is Victim.RSA
    overrides.setdefault("victim_irregularity", RSA_IRREGULARITY if is_rsa else 0.0)
    overrides.setdefault(
        "miss_rate_irregularity", RSA_MISS_RATE_IRREGULARITY if is_rsa else 0.0
    )
    overrides.setdefault("distractor_rate", DEFAULT_DISTRACTOR_RATE)
    overrides.setdefault("flurry_rate", DEFAULT_FLURRY_RATE)
    if scenario.attack is Attack.PRIME_PROBE:
        overrides.setdefault("attack_miss_amplitude", PRIME_PROBE_MISS_AMPLITUDE)
    return GeneratorConfig(scenario=scenario, seed=seed, **overrides)


def _lognormal_factor(z: np.ndarray, cv: float) -> np.ndarray:
    """Unit-mean multiplicative noise with the given coefficient of variation."""
    if cv == 0.0:
        return np.ones_like(z)
    sigma = np.sqrt(np.log1p(cv * cv))
    return np.exp(sigma * z - 0.5 * sigma * sigma)


def _irregularity_walk(z0: float, steps: np.ndarray, irregularity: float) -> np.ndarray:
    """Unit-mean modulation from a stationary AR(1) walk (slow drift)."""
    n = len(steps)
    if irregularity == 0.0:
        return np.ones(n)
    w = np.empty(n)
    scale = np.sqrt(1.0 - WALK_RHO * WALK_RHO)
    prev = z0
    for i in range(n):
        prev = WALK_RHO * prev + scale * steps[i]
        w[i] = prev
    return np.exp(irregularity * w - 0.5 * irregularity * irregularity)


def _distractor_profile(
    gen: np.random.Generator, cfg: GeneratorConfig
) -> np.ndarray:
    """Active mask of activity bursts.

    A burst starts at any idle interval with probability distractor_rate
    and lasts a uniform number of intervals between the min and max
    lengths. Misses are not boosted directly: they track the raised loads
    through the unchanged miss rate.
    """
    n = cfg.n_samples
    starts = gen.random(n)
    lengths = gen.integers(
        cfg.distractor_min_len, cfg.distractor_max_len + 1, size=n
    )
    active = np.zeros(n, dtype=bool)
    remaining = 0
    for i in range(n):
        if remaining == 0 and starts[i] < cfg.distractor_rate:
            remaining = int(lengths[i])
        if remaining > 0:
            active[i] = True
            remaining -= 1
    return active


def _flurry_profile(gen: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    """Per-interval miss inflation factor of miss flurries.

    A flurry starts at any idle interval with probability flurry_rate,
    runs for flurry_len intervals, and multiplies misses by one log-normal
    factor with median flurry_amplitude for its whole duration. Loads and
    instructions are untouched, mimicking an attack's miss-only footprint
    at a different width and cadence.
    """
    n = cfg.n_samples
    starts = gen.random(n)
    mults_z = gen.standard_normal(n)
    factor = np.ones(n)
    remaining = 0
    mult = 1.0
    for i in range(n):
        if remaining == 0 and starts[i] < cfg.flurry_rate:
            remaining = cfg.flurry_len
            mult = cfg.flurry_amplitude * float(np.exp(FLURRY_SIGMA * mults_z[i]))
        if remaining > 0:
            factor[i] = mult
            remaining -= 1
    return factor


def _benign_channels(cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gen = rng.stream(cfg.seed, _STREAM_BENIGN)
    n = cfg.n_samples
    z_instr = gen.standard_normal(n)
    z_loads = gen.standard_normal(n)
    z_miss = gen.standard_normal(n)
    walk_z0 = gen.standard_normal()
    walk_steps = gen.standard_normal(n)
    active = _distractor_profile(gen, cfg)
    flurry = _flurry_profile(gen, cfg)
    rate_z0 = gen.standard_normal()
    rate_steps = gen.standard_normal(n)

    walk = _irregularity_walk(walk_z0, walk_steps, cfg.victim_irregularity)
    rate_walk = _irregularity_walk(rate_z0, rate_steps, cfg.miss_rate_irregularity)
    instructions = cfg.base_instructions * _lognormal_factor(z_instr, cfg.noise_cv)
    loads = cfg.base_loads * _lognormal_factor(z_loads, cfg.noise_cv) * walk
    instructions = np.where(
        active, instructions * cfg.distractor_instr_boost, instructions
    )
    loads = np.where(active, loads * cfg.distractor_load_boost, loads)
    misses = (
        loads * cfg.base_miss_rate * rate_walk
        * _lognormal_factor(z_miss, cfg.noise_cv) * flurry
    )
    # flurries cannot push misses past loads in any sane config, but the
    # invariant is unconditional
    misses = np.minimum(misses, loads)
    return instructions, loads, misses


def _to_trace(
    cfg: GeneratorConfig,
    label: Label,
    instructions: np.ndarray,
    loads: np.ndarray,
    misses: np.ndarray,
    trace_id: int | None,
) -> Trace:
    dt = cfg.interval_ms / 1000.0
    samples = tuple(
        HpcSample(
            t=i * dt,
            instructions=float(instructions[i]),
            llc_loads=float(loads[i]),
            llc_load_misses=float(misses[i]),
        )
        for i in range(cfg.n_samples)
    )
    return Trace(
        samples=samples,
        label=label,
        scenario=cfg.scenario,
        source=Source.SYNTHETIC,
        trace_id=trace_id,
    )


def gen_benign(cfg: GeneratorConfig, trace_id: int | None = None) -> Trace:
    """Benign steady-state trace for the config's victim profile."""
    instructions, loads, misses = _benign_channels(cfg)
    return _to_trace(cfg, Label.BENIGN, instructions, loads, misses, trace_id)


def burst_intervals(cfg: GeneratorConfig, phase: int = 0) -> np.ndarray:
    """Boolean mask of intervals covered by PRIME+PROBE bursts.

    Bursts of ``attack_burst_width`` intervals start at ``phase`` and then
    at every period after it.
    """
    if not 0 <= phase < cfg.attack_burst_period:
        raise ConfigError(
            f"burst phase {phase} must lie in [0, {cfg.attack_burst_period})"
        )
    mask = np.zeros(cfg.n_samples, dtype=bool)
    for start in range(phase, cfg.n_samples, cfg.attack_burst_period):
        mask[start : start + cfg.attack_burst_width] = True
    return mask


def gen_attack(cfg: GeneratorConfig, trace_id: int | None = None) -> Trace:
    """Attack trace: benign baseline plus the scenario's attack overlay."""
    instructions, loads, misses = _benign_channels(cfg)
    gen = rng.stream(cfg.seed, _STREAM_ATTACK)

    if cfg.scenario.attack is Attack.FLUSH_RELOAD:
        spikes = gen.random(cfg.n_samples) < cfg.attack_spike_prob
        misses = np.where(spikes, misses * cfg.attack_miss_amplitude, misses)
    else:
        phase = int(gen.integers(cfg.attack_burst_period))
        bursts = burst_intervals(cfg, phase)
        misses = np.where(bursts, misses * cfg.attack_miss_amplitude, misses)
        instructions = np.where(
            bursts, instructions * (1.0 - BURST_SLOWDOWN), instructions
        )

    # inflation beyond the load count means the attack itself issued the
    # extra loads; raise loads to match rather than clipping the signal
    loads = np.maximum(loads, misses)
    return _to_trace(cfg, Label.MALICIOUS, instructions, loads, misses, trace_id)


def gen_scenario_corpus(
    cfg: GeneratorConfig,
    n_benign_traces: int = DEFAULT_TRACES_PER_LABEL,
    n_attack_traces: int = DEFAULT_TRACES_PER_LABEL,
) -> list[Trace]:
    """Balanced corpus with per-trace seeds derived as seed + trace index."""
    if n_benign_traces < 1 or n_attack_traces < 1:
        raise ConfigError("trace counts must be at least 1")
    traces = []
    for idx in range(n_benign_traces + n_attack_traces):
        sub = dataclasses.replace(cfg, seed=cfg.seed + idx)
        if idx < n_benign_traces:
            traces.append(gen_benign(sub, trace_id=idx))
        else:
            traces.append(gen_attack(sub, trace_id=idx))
    return traces
