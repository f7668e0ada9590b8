"""Randomized attack campaign over many seeded runs.

Every run draws fresh attack parameters for every link from a stream keyed
only by (master seed, attack kind, run, sender), so results do not depend on
how runs are spread over worker processes. Aggregation sorts by key before
reducing.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..attacks import DEFAULT_FREQ_RANGE, DEFAULT_TAU_RANGE, link_rng, randomize_attack_params
from ..dynamics import ActuationLimits, PlatoonParams
from ..gains import tune_gains
from .config import AttackEntry, LeaderProfile, ScenarioConfig
from .sim import SimulationAbort, run_scenario

CAMPAIGN_KINDS = ("constant", "sinusoid", "filtered_noise")
DESK_RUNS = 100
FULL_RUNS = 1000


def highway_base(n: int = 11, duration: float = 100.0, dt: float = 0.05) -> ScenarioConfig:
    """Highway-scale platoon cruising at 25 m/s, emergency stop when ``duration`` ends."""
    limits = ActuationLimits.from_g(0.8, 0.5, 27.78)
    params = PlatoonParams(d=6.0, v_des=25.0, n=n)
    return ScenarioConfig(
        platoon=params,
        limits=limits,
        gains=tune_gains(params.d, params.v_des, limits),
        dt=dt,
        duration=duration,
        leader=LeaderProfile(emergency_brake_at=duration, brake_until_stop=True),
    )


def run_seed(master_seed: int, kind_index: int, run: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(kind_index, run))
    return int(ss.generate_state(1, np.uint64)[0])


def campaign_config(base: ScenarioConfig, kind: str, run: int, master_seed: int,
                    freq_range=DEFAULT_FREQ_RANGE, tau_range=DEFAULT_TAU_RANGE) -> ScenarioConfig:
    """Scenario of one campaign run: a random replacement attack on every outbound link."""
    if kind not in CAMPAIGN_KINDS:
        raise ValueError(f"campaign kinds are {CAMPAIGN_KINDS}, got {kind!r}")
    kind_index = CAMPAIGN_KINDS.index(kind)
    attacks = []
    for sender in base.ids[:-1]:
        rng = link_rng(master_seed, kind_index, run, sender)
        spec = randomize_attack_params(kind, base.limits, rng, freq_range, tau_range)
        attacks.append(AttackEntry(sender, spec))
    return replace(base, attacks=tuple(attacks), seed=run_seed(master_seed, kind_index, run))


@dataclass(frozen=True)
class RunRecord:
    kind: str
    run: int
    seed: int
    collision: bool
    collision_time: float | None
    min_gap_attack: float
    min_gap_brake: float
    end_time: float
    error: str = ""


def _run_task(task) -> RunRecord:
    base, kind, run, master_seed, freq_range, tau_range = task
    cfg = campaign_config(base, kind, run, master_seed, freq_range, tau_range)
    try:
        _, m = run_scenario(cfg, record_trace=False)
    except (SimulationAbort, ValueError) as exc:
        return RunRecord(kind, run, cfg.seed, False, None, math.nan, math.nan, math.nan,
                         f"{type(exc).__name__}: {exc}")
    return RunRecord(kind, run, cfg.seed, m.collision, m.collision_time, m.min_gap_attack,
                     m.min_gap_brake, m.end_time)


@dataclass(frozen=True)
class KindSummary:
    kind: str
    runs: int
    errors: int
    collisions: int
    collision_rate: float
    attack_gap_min: float
    attack_gap_mean: float
    attack_gap_p5: float
    attack_gap_p50: float
    brake_gap_min: float
    brake_gap_mean: float
    brake_gap_p5: float
    brake_gap_p50: float


AGGREGATE_COLUMNS = tuple(KindSummary.__dataclass_fields__)
RUN_COLUMNS = tuple(RunRecord.__dataclass_fields__)


@dataclass
class CampaignResult:
    master_seed: int
    records: list[RunRecord] = field(default_factory=list)
    summary: list[KindSummary] = field(default_factory=list)

    @property
    def collision_rate(self) -> float:
        ok = [r for r in self.records if not r.error]
        return sum(r.collision for r in ok) / len(ok) if ok else math.nan


def _gap_stats(values: list[float]) -> tuple[float, float, float, float]:
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return (math.nan,) * 4
    arr = np.asarray(vals)
    return (float(arr.min()), math.fsum(vals) / len(vals), float(np.percentile(arr, 5)),
            float(np.percentile(arr, 50)))


def summarize(records: list[RunRecord], kinds) -> list[KindSummary]:
    out = []
    for kind in kinds:
        rows = sorted((r for r in records if r.kind == kind), key=lambda r: r.run)
        ok = [r for r in rows if not r.error]
        collisions = sum(r.collision for r in ok)
        out.append(KindSummary(
            kind, len(rows), len(rows) - len(ok), collisions,
            collisions / len(ok) if ok else math.nan,
            *_gap_stats([r.min_gap_attack for r in ok]),
            *_gap_stats([r.min_gap_brake for r in ok]),
        ))
    return out


def run_campaign(base: ScenarioConfig, n_runs: int = DESK_RUNS, attack_kinds=CAMPAIGN_KINDS,
                 master_seed: int = 0, workers: int = 1, freq_range=DEFAULT_FREQ_RANGE,
                 tau_range=DEFAULT_TAU_RANGE) -> CampaignResult:
    """Run ``n_runs`` randomized runs per attack kind and aggregate them.

    Per-run failures are recorded in the ``error`` column instead of stopping
    the campaign.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    kinds = tuple(attack_kinds)
    for kind in kinds:
        if kind not in CAMPAIGN_KINDS:
            raise ValueError(f"campaign kinds are {CAMPAIGN_KINDS}, got {kind!r}")
    tasks = [(base, kind, run, master_seed, tuple(freq_range), tuple(tau_range))
             for kind in kinds for run in range(n_runs)]
    if workers == 1:
        records = [_run_task(task) for task in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=chunk))
    order = {k: i for i, k in enumerate(kinds)}
    records.sort(key=lambda r: (order[r.kind], r.run))
    return CampaignResult(master_seed, records, summarize(records, kinds))


def format_summary(result: CampaignResult) -> str:
    """Aligned plain-text version of the aggregate table."""
    header = list(AGGREGATE_COLUMNS)
    rows = [[_cell(getattr(s, c)) for c in header] for s in result.summary]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _cell(x) -> str:
    if isinstance(x, float):
        return f"{x:.4g}"
    return str(x)
