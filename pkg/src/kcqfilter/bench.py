"""Monte Carlo benchmark harness for the growth-model experiments.

Seeding: every random stream is ``np.random.SeedSequence(master_seed,
spawn_key=(run_index, crc32(stream_name)))``. The truth simulation uses the
stream ``"truth"`` and each filter its own id (``"kcqf"``, ``"pf-rr"``, ...),
so adding or removing a filter never changes another filter's draws. All KCQF
variants of one run share a single ensemble.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import baselines as bl
from .kcqf import KcqfConfig, init_ensemble, kcqf_run
from .klnoise import (
    build_correlation,
    conditional_samples,
    density_sup_distance,
    gaussian_pdf,
    gaussianity_distance,
    kl_decompose,
    kl_sample_path,
)
from .ssm import (
    GaussianInit,
    JointGaussian,
    KLUniform,
    NoiseSpec,
    SystemModel,
    WhiteGaussian,
    growth_model,
    noise_step_covariance,
    propagate,
    simulate_truth,
)

log = logging.getLogger(__name__)

__all__ = [
    "FILTER_IDS",
    "FIGURE_IDS",
    "SWEEP_GRID",
    "FilterSpec",
    "ScenarioConfig",
    "FilterResult",
    "RunReport",
    "SweepResult",
    "PRESETS",
    "preset_scenarios",
    "load_scenario",
    "stream_rng",
    "compute_erms",
    "run_scenario",
    "sample_sweep",
    "emit_csv",
    "read_csv",
    "emit_plotdata",
    "fig5a_data",
    "fig5b_data",
]

FILTER_IDS = ("kcqf", "ekf", "ukf", "ckf", "pf-rr", "pf-sr")
FIGURE_IDS = ("fig1", "fig2", "fig3", "fig4", "fig5a", "fig5b", "fig6")
SWEEP_GRID = (50, 100, 200, 500, 1000, 2000, 5000)
MODELS = {"growth": growth_model}


@dataclass(frozen=True)
class FilterSpec:
    id: str
    d: tuple[int, ...] = ()
    window_len: Optional[int] = None
    ut: bl.UTParams = bl.UTParams()

    def __post_init__(self):
        if self.id not in FILTER_IDS:
            raise ValueError(f"unknown filter {self.id!r}; valid: {', '.join(FILTER_IDS)}")
        if self.id == "kcqf":
            if not self.d:
                raise ValueError("kcqf needs at least one d")
            object.__setattr__(self, "d", tuple(int(v) for v in self.d))

    def labels(self) -> list[tuple[str, Optional[int]]]:
        if self.id == "kcqf":
            return [("kcqf", d) for d in self.d]
        return [(self.id, None)]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: str
    init: GaussianInit
    proc: NoiseSpec
    meas: NoiseSpec
    horizon: int
    mc_runs: int
    sample_count: int
    filters: tuple[FilterSpec, ...]
    seed: int = 0
    particle_count: Optional[int] = None
    # Gaussian stand-in for process noise the baselines cannot represent
    baseline_proc: Optional[WhiteGaussian] = None
    out_csv: Optional[str] = None
    plot_dir: Optional[str] = None

    def __post_init__(self):
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; valid: {', '.join(MODELS)}")

    @property
    def n_particles(self) -> int:
        return self.sample_count if self.particle_count is None else self.particle_count

    def baseline_noise(self) -> WhiteGaussian:
        if self.baseline_proc is not None:
            return self.baseline_proc
        if isinstance(self.proc, WhiteGaussian):
            return self.proc
        return WhiteGaussian(noise_step_covariance(self.proc, 1))

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def echo(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "model": self.model,
            "horizon": self.horizon,
            "mc_runs": self.mc_runs,
            "sample_count": self.sample_count,
            "particle_count": self.n_particles,
            "seed": self.seed,
            "filters": [f"{f.id}{list(f.d) if f.d else ''}" for f in self.filters],
        }


def _example_a() -> ScenarioConfig:
    return ScenarioConfig(
        name="example-a",
        model="growth",
        init=GaussianInit([0.0], [[2.0]]),
        proc=WhiteGaussian([[10.0]]),
        meas=WhiteGaussian([[1.0]]),
        horizon=52,
        mc_runs=50,
        sample_count=50,
        filters=(
            FilterSpec("kcqf", d=(1, 2, 3, 4)),
            FilterSpec("pf-rr"),
            FilterSpec("pf-sr"),
            FilterSpec("ukf"),
            FilterSpec("ekf"),
            FilterSpec("ckf"),
        ),
    )


def _example_b() -> ScenarioConfig:
    K = 52
    basis = kl_decompose(build_correlation(K, 15.0), 6, mean=0.0)
    return ScenarioConfig(
        name="example-b",
        model="growth",
        init=GaussianInit([0.0], [[2.0]]),
        proc=KLUniform(basis),
        meas=WhiteGaussian([[1.0]]),
        horizon=K,
        mc_runs=50,
        sample_count=50,
        filters=(
            FilterSpec("kcqf", d=(1, 2, 3, 4, 5, 6, 7)),
            FilterSpec("pf-rr"),
            FilterSpec("pf-sr"),
            FilterSpec("ekf"),
            FilterSpec("ukf"),
            FilterSpec("ckf"),
        ),
        baseline_proc=WhiteGaussian([[10.0]]),
    )


PRESETS = {"example-a": _example_a, "example-b": _example_b}


def preset_scenarios(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}") from None


def _noise_from_table(t: dict, K: int) -> NoiseSpec:
    kind = t.get("kind", "white")
    if kind == "white":
        return WhiteGaussian(np.asarray(t["cov"], float), t.get("mean"))
    if kind == "joint":
        return JointGaussian(np.asarray(t["mean"], float), np.asarray(t["cov"], float))
    if kind == "kl":
        R = build_correlation(K, float(t.get("length_scale", 15.0)))
        return KLUniform(kl_decompose(R, int(t.get("order", 6)), mean=float(t.get("mean", 0.0))))
    raise ValueError(f"unknown noise kind {kind!r}")


def load_scenario(path) -> ScenarioConfig:
    """Read a TOML scenario file.

    Top-level ``preset`` (optional) supplies defaults; the sections
    ``[scenario]``, ``[initial]``, ``[process_noise]``,
    ``[measurement_noise]``, ``[baseline_process_noise]``, ``[[filters]]`` and
    ``[output]`` override them. See README for the full schema.
    """
    import tomli

    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    base = preset_scenarios(doc["preset"]) if "preset" in doc else None
    sc = doc.get("scenario", {})
    K = int(sc.get("horizon", base.horizon if base else 0))
    kw: dict[str, Any] = {}
    if base is None:
        for key in ("initial", "process_noise", "measurement_noise", "filters"):
            if key not in doc:
                raise ValueError(f"scenario without preset needs [{key}]")
    if "initial" in doc:
        kw["init"] = GaussianInit(doc["initial"]["mean"], doc["initial"]["cov"])
    if "process_noise" in doc:
        kw["proc"] = _noise_from_table(doc["process_noise"], K)
    if "measurement_noise" in doc:
        kw["meas"] = _noise_from_table(doc["measurement_noise"], K)
    if "baseline_process_noise" in doc:
        kw["baseline_proc"] = _noise_from_table(doc["baseline_process_noise"], K)
    if "filters" in doc:
        specs = []
        for f in doc["filters"]:
            ut = bl.UTParams(**f["ut"]) if "ut" in f else bl.UTParams()
            specs.append(FilterSpec(f["id"], tuple(f.get("d", ())), f.get("window_len"), ut))
        kw["filters"] = tuple(specs)
    out = doc.get("output", {})
    fields = dict(
        name=sc.get("name", base.name if base else Path(path).stem),
        model=sc.get("model", base.model if base else "growth"),
        horizon=K,
        mc_runs=int(sc.get("mc_runs", base.mc_runs if base else 1)),
        sample_count=int(sc.get("sample_count", base.sample_count if base else 50)),
        seed=int(sc.get("seed", base.seed if base else 0)),
        particle_count=sc.get("particle_count", base.particle_count if base else None),
        out_csv=out.get("csv"),
        plot_dir=out.get("plot_dir"),
    )
    if base is None:
        return ScenarioConfig(**fields, **kw)
    return replace(base, **fields, **kw)


# ---------------------------------------------------------------------------
# Runs and metrics


def stream_rng(master_seed: int, run_index: int, stream: str) -> np.random.Generator:
    tag = zlib.crc32(stream.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(run_index, tag)))


def compute_erms(truths, estimates) -> tuple[np.ndarray, float]:
    """Monte Carlo RMSE per step and its time average.

    ``truths`` and ``estimates`` have shape ``(M, K)`` or ``(M, K, n_x)``.
    Vector states are aggregated with the Euclidean norm over components.
    """
    x = np.asarray(truths, dtype=float)
    xh = np.asarray(estimates, dtype=float)
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch: truths {x.shape} vs estimates {xh.shape}")
    if x.ndim == 2:
        x, xh = x[..., None], xh[..., None]
    if x.ndim != 3:
        raise ValueError("expected (M, K) or (M, K, n_x) arrays")
    err2 = np.sum((x - xh) ** 2, axis=2)
    erms = np.sqrt(np.mean(err2, axis=0))
    return erms, float(np.mean(erms))


def compute_erms_components(truths, estimates) -> np.ndarray:
    """Per-component RMSE, shape ``(K, n_x)``."""
    x = np.asarray(truths, dtype=float)
    xh = np.asarray(estimates, dtype=float)
    if x.shape != xh.shape or x.ndim != 3:
        raise ValueError("expected matching (M, K, n_x) arrays")
    return np.sqrt(np.mean((x - xh) ** 2, axis=0))


@dataclass
class FilterResult:
    filter: str
    d: Optional[int]
    erms: np.ndarray
    erms_bar: float
    cpu_seconds: float
    degenerate_steps: int
    error: Optional[str] = None

    @property
    def label(self) -> str:
        return self.filter if self.d is None else f"{self.filter}-{self.d}"


@dataclass
class RunReport:
    results: list[FilterResult] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    def get(self, filter_id: str, d: Optional[int] = None) -> FilterResult:
        for r in self.results:
            if r.filter == filter_id and r.d == d:
                return r
        raise KeyError((filter_id, d))

    def erms_bar(self) -> dict[str, float]:
        return {r.label: r.erms_bar for r in self.results}


def _run_kcqf(cfg: ScenarioConfig, spec: FilterSpec, model: SystemModel, truth, rng):
    t0 = time.perf_counter()
    ens = init_ensemble(model, cfg.init, cfg.proc, cfg.sample_count, cfg.horizon, rng)
    build = time.perf_counter() - t0
    out = {}
    for d in spec.d:
        t0 = time.perf_counter()
        kc = KcqfConfig(d=d, window_len=spec.window_len, sample_count=cfg.sample_count)
        ests = kcqf_run(model, cfg.init, cfg.proc, cfg.meas, truth, kc, ensemble=ens)
        secs = build + time.perf_counter() - t0
        out[d] = (np.array([e.mean for e in ests]), secs, sum(e.degenerate for e in ests))
    return out


def _run_baseline(cfg: ScenarioConfig, spec: FilterSpec, model: SystemModel, truth, rng):
    y = truth.measurements
    q = cfg.baseline_noise()
    R = noise_step_covariance(cfg.meas, 1)
    t0 = time.perf_counter()
    degenerate = 0
    if spec.id in ("pf-rr", "pf-sr"):
        resampler = bl.resample_residual if spec.id == "pf-rr" else bl.resample_stratified
        est, degenerate = bl.run_particle_filter(model, cfg.init, q, cfg.meas, y, cfg.n_particles, resampler, rng)
    else:
        prior = bl.GaussianBelief(cfg.init.mean, cfg.init.cov)
        if spec.id == "ekf":
            est = bl.run_gaussian_filter(bl.ekf_step, model, prior, y, q.cov, R)
        elif spec.id == "ukf":
            est = bl.run_gaussian_filter(bl.ukf_step, model, prior, y, q.cov, R, ut_params=spec.ut)
        else:
            est = bl.run_gaussian_filter(bl.ckf_step, model, prior, y, q.cov, R)
    return {None: (est, time.perf_counter() - t0, degenerate)}


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Run every configured filter on ``mc_runs`` shared truth trajectories."""
    model = MODELS[cfg.model]()
    K = cfg.horizon
    labels = [(spec, lab) for spec in cfg.filters for lab in spec.labels()]
    est = {lab: np.full((cfg.mc_runs, K, model.state_dim), np.nan) for _, lab in labels}
    secs = {lab: 0.0 for _, lab in labels}
    degen = {lab: 0 for _, lab in labels}
    errors: dict = {}
    truths = np.empty((cfg.mc_runs, K, model.state_dim))

    for m in range(cfg.mc_runs):
        truth = simulate_truth(model, cfg.init, cfg.proc, cfg.meas, K, stream_rng(cfg.seed, m, "truth"))
        truths[m] = truth.states[1:]
        for spec in cfg.filters:
            if spec.id in errors:
                continue
            runner = _run_kcqf if spec.id == "kcqf" else _run_baseline
            try:
                out = runner(cfg, spec, model, truth, stream_rng(cfg.seed, m, spec.id))
            except Exception as exc:  # one failing filter must not sink the report
                log.warning("filter %s failed in run %d: %s", spec.id, m, exc)
                errors[spec.id] = f"run {m}: {exc}"
                continue
            for d, (xhat, s, nd) in out.items():
                lab = (spec.id, d)
                est[lab][m] = xhat
                secs[lab] += s
                degen[lab] += nd

    report = RunReport(config=cfg.echo())
    for spec, lab in labels:
        err = errors.get(spec.id)
        if err is None:
            erms, bar = compute_erms(truths, est[lab])
        else:
            erms, bar = np.full(K, np.nan), math.nan
        report.results.append(
            FilterResult(lab[0], lab[1], erms, bar, secs[lab] / cfg.mc_runs, degen[lab], err)
        )
    return report


@dataclass
class SweepResult:
    grid: tuple[int, ...]
    values: dict[str, list[float]]  # label -> Ebar per grid point


def sample_sweep(cfg: ScenarioConfig, ds: Sequence[int], grid: Sequence[int] = SWEEP_GRID) -> SweepResult:
    """KCQF time-averaged RMSE as a function of the sample count."""
    values: dict[str, list[float]] = {f"kcqf-{d}": [] for d in ds}
    for n in grid:
        run_cfg = replace(cfg, sample_count=int(n), filters=(FilterSpec("kcqf", d=tuple(ds)),))
        rep = run_scenario(run_cfg)
        for d in ds:
            values[f"kcqf-{d}"].append(rep.get("kcqf", d).erms_bar)
    return SweepResult(tuple(int(n) for n in grid), values)


# ---------------------------------------------------------------------------
# Output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not np.isfinite(x):
        return "nan"
    return f"{float(x):.6g}"


def _summary_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}_summary{path.suffix or '.csv'}")


def emit_csv(report: RunReport, path, timing: bool = True) -> tuple[Path, Path]:
    """Write per-step rows to ``path`` and per-filter rows to ``<stem>_summary``.

    ``timing=False`` leaves the cpu column blank so the output is a pure
    function of the configuration and seed.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "filter", "d", "e_rms"])
        for r in report.results:
            for k, e in enumerate(r.erms, start=1):
                w.writerow([k, r.filter, _fmt(r.d), _fmt(e)])
    summary = _summary_path(path)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filter", "d", "e_rms_bar", "cpu_seconds", "degenerate_steps"])
        for r in report.results:
            w.writerow([r.filter, _fmt(r.d), _fmt(r.erms_bar), _fmt(r.cpu_seconds) if timing else "", r.degenerate_steps])
    return path, summary


def read_csv(path) -> RunReport:
    """Parse files written by :func:`emit_csv` back into a report."""
    path = Path(path)
    steps: dict[tuple[str, Optional[int]], list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["filter"], int(row["d"]) if row["d"] else None)
            steps.setdefault(key, []).append(float(row["e_rms"]))
    report = RunReport()
    with open(_summary_path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["filter"], int(row["d"]) if row["d"] else None)
            report.results.append(
                FilterResult(
                    key[0],
                    key[1],
                    np.array(steps.get(key, [])),
                    float(row["e_rms_bar"]),
                    float(row["cpu_seconds"]) if row["cpu_seconds"] else math.nan,
                    int(row["degenerate_steps"]),
                )
            )
    return report


def _write_columns(path: Path, header: list[str], columns: list[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])
    return path


def fig5a_data(basis, n_samples: int = 1_000_000, step: int = 26, bins: int = 100, seed: int = 0):
    """Histogram of ``w_step`` and the moment-matched Gaussian on its bin centers."""
    w = kl_sample_path(basis, np.random.default_rng(seed), n_samples)[:, step - 1]
    dist, hist, gauss = gaussianity_distance(w, bins)
    return dist, hist, gauss


def fig5b_data(
    init: GaussianInit,
    proc: NoiseSpec,
    n_samples: int = 1_000_000,
    x0: float = -0.5,
    x1: float = -0.2,
    width: float = 0.05,
    bins: int = 20,
    seed: int = 0,
):
    """Histograms of ``x_2 | x_1`` and ``x_2 | x_1, x_0`` on a shared grid.

    Returns ``(distance, hist_x1, hist_x1_x0)``.
    """
    from .ssm import sample_noise_path

    rng = np.random.default_rng(seed)
    model = growth_model()
    K = proc.horizon if isinstance(proc, (KLUniform, JointGaussian)) else 2
    starts = init.sample(rng, n_samples)
    noise = sample_noise_path(proc, K, rng, n_samples)[:, :2]
    states = propagate(model, starts, noise)[..., 0]
    given_x1 = conditional_samples(states, {1: x1}, width, 2)
    given_both = conditional_samples(states, {1: x1, 0: x0}, width, 2)
    return density_sup_distance(given_x1, given_both, bins)


def emit_plotdata(data, figure_id: str, out_dir) -> list[Path]:
    """Write plot-ready columnar CSV for one figure.

    ``data`` is a :class:`RunReport` for fig1-3, a :class:`SweepResult` for
    fig4/fig6, and the tuple returned by :func:`fig5a_data` /
    :func:`fig5b_data` for fig5a/fig5b.
    """
    if figure_id not in FIGURE_IDS:
        raise ValueError(f"unknown figure {figure_id!r}; valid: {', '.join(FIGURE_IDS)}")
    out = Path(out_dir) / f"{figure_id}.csv"
    if figure_id in ("fig1", "fig2"):
        rows = [r for r in data.results if (r.filter == "kcqf") or figure_id == "fig2"]
        K = len(rows[0].erms) if rows else 0
        return [_write_columns(out, ["k"] + [r.label for r in rows], [range(1, K + 1)] + [r.erms for r in rows])]
    if figure_id == "fig3":
        rows = data.results
        return [
            _write_columns(
                out,
                ["filter", "e_rms_bar", "cpu_seconds"],
                [[r.label for r in rows], [r.erms_bar for r in rows], [r.cpu_seconds for r in rows]],
            )
        ]
    if figure_id in ("fig4", "fig6"):
        labels = list(data.values)
        return [_write_columns(out, ["n_s"] + labels, [data.grid] + [data.values[l] for l in labels])]
    if figure_id == "fig5a":
        _, hist, gauss = data
        return [_write_columns(out, ["w", "empirical", "gaussian"], [hist.centers, hist.density, gauss])]
    _, h1, h2 = data
    return [_write_columns(out, ["x2", "given_x1", "given_x1_x0"], [h1.centers, h1.density, h2.density])]
