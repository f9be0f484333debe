"""Synthetic periodic waves driven by discrete Ornstein-Uhlenbeck processes.

A wave is a sum of four harmonics whose amplitudes, phases and clock rate
drift as mean-reverting processes, plus a slowly wandering offset and white
noise.  Anomaly segments reuse a wave's parameters and perturb one process
in their second half.

Randomness comes from PCG64 streams derived with ``SeedSequence`` spawn
keys, one stream per wave, and Gaussian variates are produced by the
inverse normal CDF of 53-bit uniforms, so output is reproducible across
platforms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .signal import TimeSeries, load_csv, save_csv

NORMAL_LENGTH = 2**16
SEGMENT_LENGTH = 2**12
ANOMALY_START = 2**11
SEGMENTS_PER_GROUP = 16
TRAIN_FRACTION = 7 / 8
KINDS = ("amplitude", "phase", "pulse", "white_noise")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def gaussian(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates via the inverse CDF of open-interval uniforms."""
    u = (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) * 2.0**-53
    return ndtri(u)


def uniform(rng: np.random.Generator, a: float, b: float) -> float:
    return a + (b - a) * float(rng.integers(0, 2**53, dtype=np.int64)) * 2.0**-53


@dataclass(frozen=True)
class OUParams:
    mu: float
    sigma: float
    theta: float
    r0: float

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def ou_step(r: float, params: OUParams, gaussian_draw: float) -> float:
    """One exponential-smoothing step of the discrete OU recursion."""
    th = params.theta
    return th * (params.mu + (params.sigma / th) * gaussian_draw) + (1 - th) * r


def ou_path(params: OUParams, draws: np.ndarray) -> np.ndarray:
    """Path R_0..R_{len(draws)} starting at ``params.r0``."""
    th = params.theta
    noisy = params.mu + (params.sigma / th) * np.asarray(draws, dtype=np.float64)
    tail, _ = lfilter([th], [1.0, -(1.0 - th)], noisy, zi=[(1.0 - th) * params.r0])
    return np.concatenate([[params.r0], tail])


@dataclass(frozen=True)
class WaveSpec:
    amp_means: tuple[float, ...]
    phase_means: tuple[float, ...]
    seed: int = 0
    f: float = 2.0**-8
    time: OUParams = OUParams(1.0, 2.0**-8, 2.0**-8, 0.0)
    amp_sigma: float = 2.0**-8
    amp_theta: float = 2.0**-8
    phase_sigma: float = 2.0**-10
    phase_theta: float = 2.0**-8
    noise: OUParams = OUParams(0.0, 2.0**-6, 2.0**-8, 0.0)
    white_sigma: float = 2.0**-4

    def __post_init__(self):
        if len(self.amp_means) != 4 or len(self.phase_means) != 4:
            raise ValueError("need four amplitude and four phase means")

    @classmethod
    def random(cls, seed: int, **overrides) -> "WaveSpec":
        """Draw log2 amplitude means from U(-1, 1) and phase means from U(0, 1)."""
        rng = make_rng(seed, 0)
        amps = tuple(2.0 ** uniform(rng, -1.0, 1.0) for _ in range(4))
        phases = tuple(uniform(rng, 0.0, 1.0) for _ in range(4))
        return cls(amp_means=amps, phase_means=phases, seed=seed, **overrides)

    def amp_process(self, k: int) -> OUParams:
        mu = self.amp_means[k - 1]
        return OUParams(mu, self.amp_sigma, self.amp_theta, mu)

    def phase_process(self, k: int) -> OUParams:
        mu = self.phase_means[k - 1]
        return OUParams(mu, self.phase_sigma, self.phase_theta, mu)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WaveSpec":
        d = dict(d)
        d["amp_means"] = tuple(d["amp_means"])
        d["phase_means"] = tuple(d["phase_means"])
        d["time"] = OUParams(**d["time"])
        d["noise"] = OUParams(**d["noise"])
        return cls(**d)


@dataclass
class AnomalySpec:
    kind: str
    k: int | None = None
    magnitude: float = 0.0
    start: int = ANOMALY_START
    duration: int = SEGMENT_LENGTH - ANOMALY_START

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown anomaly kind {self.kind!r}")
        if self.kind in ("amplitude", "phase") and self.k not in (1, 2, 3, 4):
            raise ValueError(f"{self.kind} anomaly needs a frequency component k in 1..4")
        if self.start < 0 or self.duration < 1:
            raise ValueError("anomaly start must be >= 0 and duration >= 1")

    @property
    def end(self) -> int:
        return self.start + self.duration


def draw_anomaly(kind: str, rng: np.random.Generator) -> AnomalySpec:
    """Sample an anomaly of the given kind from its magnitude law."""
    if kind == "amplitude":
        k = int(rng.integers(1, 5))
        return AnomalySpec(kind, k, 2.0 ** uniform(rng, 1.0, 2.0))
    if kind == "phase":
        k = int(rng.integers(1, 5))
        return AnomalySpec(kind, k, uniform(rng, 0.25, 0.75))
    if kind == "pulse":
        p = 2.0 ** uniform(rng, 2.0, 4.0)
        width = int(rng.integers(2**5, 2**6))
        start = int(rng.integers(ANOMALY_START, SEGMENT_LENGTH - width + 1))
        return AnomalySpec(kind, None, p, start, width)
    if kind == "white_noise":
        return AnomalySpec(kind, None, 2.0 ** uniform(rng, 2.0, 6.0))
    raise ValueError(f"unknown anomaly kind {kind!r}")


def initial_state(spec: WaveSpec) -> dict[str, float]:
    """Process values at t=0 and the starting clock."""
    state = {"clock": 0.0, "time": spec.time.r0, "noise": spec.noise.r0}
    for k in range(1, 5):
        state[f"amp{k}"] = spec.amp_process(k).r0
        state[f"ph{k}"] = spec.phase_process(k).r0
    return state


def simulate(spec: WaveSpec, length: int, rng: np.random.Generator,
             state: dict[str, float] | None = None) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Run every process for ``length`` samples from ``state``.

    Returns the per-sample process values and the state at index ``length``
    so a later call continues the same run.
    """
    state = initial_state(spec) if state is None else state
    params = {"time": spec.time, "noise": spec.noise}
    for k in range(1, 5):
        params[f"amp{k}"] = spec.amp_process(k)
        params[f"ph{k}"] = spec.phase_process(k)
    procs, nxt = {}, {}
    for name in ("time", "amp1", "amp2", "amp3", "amp4", "ph1", "ph2", "ph3", "ph4", "noise"):
        p = params[name]
        path = ou_path(OUParams(p.mu, p.sigma, p.theta, state[name]), gaussian(rng, length))
        procs[name], nxt[name] = path[:-1], float(path[-1])
    procs["white"] = spec.white_sigma * gaussian(rng, length)
    steps = np.cumsum(procs["time"])
    procs["clock"] = state["clock"] + np.concatenate([[0.0], steps[:-1]])
    nxt["clock"] = float(state["clock"] + steps[-1])
    return procs, nxt


def _compose(spec: WaveSpec, procs: dict[str, np.ndarray]) -> np.ndarray:
    clock = procs["clock"]
    x = np.zeros_like(clock)
    for k in range(1, 5):
        x += procs[f"amp{k}"] * np.cos(2 * np.pi * (spec.f * k * clock + procs[f"ph{k}"]))
    return x + procs["noise"] + procs["white"]


def _perturb(spec: WaveSpec, procs: dict[str, np.ndarray], anomaly: AnomalySpec) -> np.ndarray:
    procs = dict(procs)
    s = anomaly.start
    if anomaly.kind == "amplitude":
        procs[f"amp{anomaly.k}"] = procs[f"amp{anomaly.k}"].copy()
        procs[f"amp{anomaly.k}"][s:] += anomaly.magnitude
    elif anomaly.kind == "phase":
        # moves mean and state of the phase process together
        key = f"ph{anomaly.k}"
        procs[key] = procs[key].copy()
        procs[key][s:] = np.mod(procs[key][s:] + anomaly.magnitude, 1.0)
    elif anomaly.kind == "white_noise":
        procs["white"] = procs["white"].copy()
        procs["white"][s:] *= anomaly.magnitude
    x = _compose(spec, procs)
    if anomaly.kind == "pulse":
        x[s : anomaly.end] += anomaly.magnitude
    return x


def generate_wave(spec: WaveSpec, length: int, stream: int = 0,
                  state: dict[str, float] | None = None) -> TimeSeries:
    """Normal wave of ``length`` samples; ``stream`` selects an independent draw."""
    if length < 1:
        raise ValueError("length must be >= 1")
    procs, _ = simulate(spec, length, make_rng(spec.seed, 1, stream), state)
    return TimeSeries(_compose(spec, procs), feature_names=["x"])


def inject_anomaly(spec: WaveSpec, anomaly: AnomalySpec, stream: int = 0,
                   state: dict[str, float] | None = None, length: int = SEGMENT_LENGTH) -> TimeSeries:
    """Wave segment whose processes are perturbed from ``anomaly.start`` on.

    ``state`` continues an earlier run (see :func:`simulate`); without it
    the processes start from their initial values.
    """
    if anomaly.end > length:
        raise ValueError(f"anomaly ends at {anomaly.end}, beyond segment length {length}")
    procs, _ = simulate(spec, length, make_rng(spec.seed, 2, stream), state)
    return TimeSeries(_perturb(spec, procs, anomaly), feature_names=["x"])


@dataclass
class Group:
    index: int
    spec: WaveSpec
    normal: TimeSeries
    segments: list[TimeSeries]
    anomalies: list[AnomalySpec]

    @property
    def split(self) -> int:
        return int(len(self.normal) * TRAIN_FRACTION)

    @property
    def train(self) -> TimeSeries:
        return self.normal.slice(0, self.split)

    @property
    def validation(self) -> TimeSeries:
        return self.normal.slice(self.split, len(self.normal))


@dataclass
class Dataset:
    seed: int
    groups: list[Group] = field(default_factory=list)

    def manifest(self) -> list[dict]:
        rows = []
        for g in self.groups:
            for i, a in enumerate(g.anomalies):
                rows.append({
                    "group": g.index,
                    "segment": i,
                    "kind": a.kind,
                    "params": {"k": a.k, "magnitude": a.magnitude, "duration": a.duration},
                    "anomaly_start": a.start,
                })
        return rows


def build_group(index: int, seed: int, normal_length: int = NORMAL_LENGTH,
                segments: int = SEGMENTS_PER_GROUP) -> Group:
    """One normal wave followed by anomaly segments continuing the same run."""
    group_seed = int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0] >> 1)
    spec = WaveSpec.random(group_seed)
    rng = make_rng(group_seed, 3)
    kinds = [KINDS[int(rng.integers(0, 4))] for _ in range(segments)]
    anomalies = [draw_anomaly(kind, rng) for kind in kinds]

    procs, state = simulate(spec, normal_length, make_rng(group_seed, 1, 0))
    normal = TimeSeries(_compose(spec, procs), feature_names=["x"])
    series = []
    for i, a in enumerate(anomalies):
        procs, state = simulate(spec, SEGMENT_LENGTH, make_rng(group_seed, 2, i), state)
        series.append(TimeSeries(_perturb(spec, procs, a), feature_names=["x"]))
    return Group(index=index, spec=spec, normal=normal, segments=series, anomalies=anomalies)


def build_dataset(group_count: int, seed: int, **kwargs) -> Dataset:
    if group_count < 1:
        raise ValueError("group_count must be >= 1")
    return Dataset(seed, [build_group(g, seed, **kwargs) for g in range(group_count)])


def write_dataset(ds: Dataset, out: str | Path) -> Path:
    """Write per-group CSV files and ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    groups = []
    for g in ds.groups:
        save_csv(g.normal, out / f"group{g.index:02d}_normal.csv")
        for i, seg in enumerate(g.segments):
            save_csv(seg, out / f"group{g.index:02d}_seg{i:02d}.csv")
        groups.append({"group": g.index, "spec": g.spec.to_dict(), "split": g.split,
                       "anomalies": [asdict(a) for a in g.anomalies]})
    doc = {"format": "phaseanomaly-waves/1", "seed": ds.seed, "groups": groups, "segments": ds.manifest()}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    doc = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    ds = Dataset(doc["seed"])
    for g in doc["groups"]:
        idx = g["group"]
        anomalies = [AnomalySpec(**a) for a in g["anomalies"]]
        ds.groups.append(Group(
            index=idx,
            spec=WaveSpec.from_dict(g["spec"]),
            normal=load_csv(directory / f"group{idx:02d}_normal.csv"),
            segments=[load_csv(directory / f"group{idx:02d}_seg{i:02d}.csv") for i in range(len(anomalies))],
            anomalies=anomalies,
        ))
    return ds


def degenerate_spec(amp_means, phase_means) -> WaveSpec:
    """Noise-free configuration: every process constant at its mean."""
    still = dict(amp_sigma=0.0, amp_theta=1.0, phase_sigma=0.0, phase_theta=1.0,
                 time=OUParams(1.0, 0.0, 1.0, 1.0), noise=OUParams(0.0, 0.0, 1.0, 0.0), white_sigma=0.0)
    return WaveSpec(tuple(amp_means), tuple(phase_means), **still)

