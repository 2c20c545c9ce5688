"""Process-variation Monte Carlo: truncated-Gaussian parameter sampling with
order-independent per-sample seeding, batched sensing runs, and summary
statistics with histograms.

Varied parameter families (each Gaussian, truncated at exactly +/-3 sigma by
re-drawing):

* ``v_c_imt`` - the PTM transition voltage (3% of the mean).
* ``l_ptm``   - the PTM length (3%); scales R_INS and R_MET together.
* ``v_th``    - per-device threshold (3.5% of the mean, scaled per device by
  1/sqrt(n_fin)).

The per-sample generator is seeded from ``(master_seed, index)`` alone, so
results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, replace

import numpy as np

from .analysis import SenseMetrics, run_sense
from .errors import AllSamplesFailed, SimulationError
from .topologies import (EXPECTED_OUTCOME, MC_SENSITIVE, TopologyKind,
                         TopologyParams, as_kind)

FAMILIES = ("v_c_imt", "l_ptm", "v_th")


@dataclass(frozen=True)
class McConfig:
    """Sampling plan.  ``vary`` selects the active parameter families (all
    three by default; pass a single family for one-at-a-time studies).
    ``device_fins`` lists the transistors whose thresholds vary and their fin
    counts; when empty it is filled from the topology's sensitive devices."""

    n_samples: int = 1000
    master_seed: int = 0
    vary: tuple[str, ...] = FAMILIES
    v_c_imt_mean: float = 0.336
    v_c_imt_rel_sigma: float = 0.03
    l_ptm_rel_sigma: float = 0.03
    v_th_mean: float = 0.2
    v_th_rel_sigma: float = 0.035
    device_fins: tuple[tuple[str, int], ...] = ()
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for f in self.vary:
            if f not in FAMILIES:
                raise ValueError(f"unknown parameter family {f!r}")
        if min(self.v_c_imt_rel_sigma, self.l_ptm_rel_sigma,
               self.v_th_rel_sigma) < 0:
            raise ValueError("sigmas must be >= 0")


@dataclass(frozen=True)
class ParameterDraw:
    """One sample's drawn values (absolute, already truncated)."""

    index: int
    v_c_imt: float | None
    l_factor: float | None
    v_th: tuple[tuple[str, float], ...]      # device name -> absolute V_th

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        if self.v_c_imt is not None:
            out["v_c_imt"] = self.v_c_imt
        if self.l_factor is not None:
            out["l_factor"] = self.l_factor
        for name, v in self.v_th:
            out[f"v_th_{name}"] = v
        return out


def _truncated_normal(rng: np.random.Generator, mean: float,
                      sigma: float) -> float:
    """Gaussian truncated at +/-3 sigma by rejection (re-draw)."""
    if sigma == 0.0:
        return mean
    while True:
        x = rng.normal(mean, sigma)
        if abs(x - mean) <= 3.0 * sigma:
            return float(x)


def sample_parameters(config: McConfig, index: int) -> ParameterDraw:
    """Pure function of (master_seed, index): a per-sample generator seeded by
    SeedSequence(master_seed, spawn_key=(index,)) draws each active family in
    a fixed order."""
    if index >= config.n_samples:
        raise ValueError("index out of range")
    seq = np.random.SeedSequence(entropy=config.master_seed,
                                 spawn_key=(index,))
    rng = np.random.default_rng(seq)

    v_c_imt = None
    if "v_c_imt" in config.vary:
        v_c_imt = _truncated_normal(rng, config.v_c_imt_mean,
                                    config.v_c_imt_rel_sigma * config.v_c_imt_mean)
    l_factor = None
    if "l_ptm" in config.vary:
        l_factor = _truncated_normal(rng, 1.0, config.l_ptm_rel_sigma)
    v_th: list[tuple[str, float]] = []
    if "v_th" in config.vary:
        sigma_base = config.v_th_rel_sigma * config.v_th_mean
        for name, n_fin in config.device_fins:
            sigma = sigma_base / np.sqrt(n_fin)
            v_th.append((name, _truncated_normal(rng, config.v_th_mean,
                                                 sigma)))
    return ParameterDraw(index, v_c_imt, l_factor, tuple(v_th))


def apply_draw(params: TopologyParams, draw: ParameterDraw) -> TopologyParams:
    """Topology parameters with the drawn values substituted."""
    ptm = params.ptm
    if draw.v_c_imt is not None:
        ptm = ptm.with_(v_c_imt=draw.v_c_imt)
    if draw.l_factor is not None:
        ptm = ptm.with_length_factor(draw.l_factor)
    dvth = dict(params.device_dvth)
    base = params.fet.v_th
    for name, v in draw.v_th:
        dvth[name] = dvth.get(name, 0.0) + (v - base)
    return replace(params, ptm=ptm, device_dvth=dvth,
                   sizing=dict(params.sizing))


@dataclass
class McSample:
    """One Monte Carlo run: the draw, the LRS metrics, the HRS verification
    outcome, and an error tag when the sample failed."""

    index: int
    draw: ParameterDraw
    metrics: SenseMetrics | None
    outcome_hrs: str | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def config_for(kind, params: TopologyParams, config: McConfig) -> McConfig:
    """Fill ``device_fins`` from the topology's variation-sensitive devices
    when the config leaves it empty."""
    kind = as_kind(kind)
    if config.device_fins:
        return config
    devices = tuple((name, params.sizing.get(name, 2))
                    for name in MC_SENSITIVE[kind])
    return replace(config, device_fins=devices)


def _evaluate_sample(kind: TopologyKind, config: McConfig,
                     params: TopologyParams, index: int) -> McSample:
    draw = sample_parameters(config, index)
    p = apply_draw(params, draw)
    try:
        _, metrics = run_sense(kind, "lrs", p)
        _, metrics_hrs = run_sense(kind, "hrs", p)
    except SimulationError as exc:
        return McSample(index, draw, None, None,
                        error=f"solver: {type(exc).__name__}: {exc}")
    error = None
    if metrics.logic_outcome != EXPECTED_OUTCOME[(kind, "lrs")]:
        error = f"lrs outcome {metrics.logic_outcome}"
    elif metrics_hrs.logic_outcome != EXPECTED_OUTCOME[(kind, "hrs")]:
        error = f"hrs outcome {metrics_hrs.logic_outcome}"
    elif metrics.delay is None:
        error = "no output crossing while sensing lrs"
    return McSample(index, draw, metrics, metrics_hrs.logic_outcome, error)


_WORK = {}


def _init_worker(kind_value: str, config: McConfig, params: TopologyParams):
    _WORK["args"] = (TopologyKind(kind_value), config, params)


def _run_index(index: int) -> McSample:
    kind, config, params = _WORK["args"]
    return _evaluate_sample(kind, config, params, index)


def run_mc(kind, config: McConfig | None = None,
           params: TopologyParams | None = None) -> list[McSample]:
    """Run the batch; samples whose outcome is wrong, indeterminate or whose
    solver fails are recorded with an error tag, never dropped.  Output is
    identical for any worker count under the same master seed."""
    kind = as_kind(kind)
    params = params if params is not None else TopologyParams.defaults(kind)
    if not params.sizing:
        params = replace(params, sizing=dict(
            TopologyParams.defaults(kind).sizing))
    config = config_for(kind, params, config or McConfig())

    indices = range(config.n_samples)
    if config.workers <= 1:
        return [_evaluate_sample(kind, config, params, i) for i in indices]
    with concurrent.futures.ProcessPoolExecutor(
            max_workers=config.workers, initializer=_init_worker,
            initargs=(kind.value, config, params)) as pool:
        samples = list(pool.map(_run_index, indices, chunksize=16))
    return sorted(samples, key=lambda s: s.index)


@dataclass
class MetricStats:
    mean: float
    std: float
    worst: float
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass
class McSummary:
    """Distribution statistics over the successful samples; failures are
    counted separately (never silently dropped)."""

    n_samples: int
    n_failed: int
    metrics: dict[str, MetricStats]

    @property
    def n_ok(self) -> int:
        return self.n_samples - self.n_failed


def _stats(values: np.ndarray) -> MetricStats:
    worst = float(np.max(values))
    # summation rounding can push the mean past the extremes by an ulp
    mean = float(min(max(np.mean(values), np.min(values)), worst))
    std = float(np.std(values))
    counts, edges = np.histogram(values, bins="fd" if len(values) > 1 else 1)
    return MetricStats(mean, std, worst, tuple(float(e) for e in edges),
                       tuple(int(c) for c in counts))


def summarize(samples: list[McSample]) -> McSummary:
    """Mean/std/worst-case and a Freedman-Diaconis histogram per metric
    (delay, sensing power, PDP) over the successful samples."""
    ok = [s for s in samples if s.ok]
    if not ok:
        raise AllSamplesFailed(f"all {len(samples)} samples failed")
    delay = np.array([s.metrics.delay for s in ok])
    power = np.array([s.metrics.sensing_power for s in ok])
    pdp = np.array([s.metrics.pdp for s in ok])
    return McSummary(
        n_samples=len(samples),
        n_failed=len(samples) - len(ok),
        metrics={
            "delay_s": _stats(delay),
            "sensing_power_w": _stats(power),
            "pdp_ws": _stats(pdp),
        },
    )
