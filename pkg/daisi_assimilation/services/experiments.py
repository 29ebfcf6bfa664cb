"""
Сервис экспериментов: абляция на смеси, фильтрация Лоренца-63, поиск
гиперпараметров, проверки против фильтра Калмана и обучение дрейфа
"""
import logging
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..api.errors import AcceptanceError, ConfigError
from ..api.schemas import (
    VARIANT_PRESETS,
    ExperimentConfig,
    FilterKind,
    L63Section,
    Variant,
)
from ..config.constants import L63_X0
from ..core.drift import GaussianDrift, GmmDrift, NetDrift
from ..core.filters import DaisiConfig, bpf_run, daisi_analysis, daisi_run, kalman_filter
from ..core.guidance import GuidanceKind, GuidanceMethod
from ..core.interpolant import NormStats
from ..core.metrics import mmd_rbf
from ..core.systems import (
    L63Propagator,
    LinearGaussianPropagator,
    attractor_samples,
    build_gmm_testbed,
    l63_trajectory,
    observe,
)
from ..core.training import Dataset, TrainConfig, generate_l63_dataset, train_drift
from ..models.ensemble import METRIC_COLUMNS, Ensemble, FilterTrace, MetricReport
from ..models.observation import ObservationModel, OperatorKind
from ..utils.rng import Stage, derive_int_seed, derive_rng
from . import storage

logger = logging.getLogger(__name__)

# Длина опорной траектории для статистик начальных условий без файла модели
REFERENCE_STEPS = 10_000


# ========== РЕЗУЛЬТАТЫ ==========

@dataclass
class AblationResult:
    heatmap: pd.DataFrame  # t_min,eps,mmd,seed
    diagnostics: pd.DataFrame  # t_min,eps,seed,mmd_oracle,mmd_forecast,mmd_prior_posterior
    best: Tuple[float, float]


@dataclass
class L63Result:
    metrics: pd.DataFrame  # repeat,step,rmse,...
    summary: pd.DataFrame  # repeat + агрегаты окна
    report: MetricReport  # среднее по повторам
    traces: List[FilterTrace] = field(default_factory=list)


@dataclass
class SweepResult:
    table: pd.DataFrame  # t_min,eps,repeat,seed,crps
    best: Tuple[float, float]


@dataclass
class CheckResult:
    table: pd.DataFrame  # check,step,value,reference,tolerance,passed

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())


def _guidance(cfg: ExperimentConfig, pool: Optional[np.ndarray]) -> GuidanceMethod:
    g = cfg.daisi.guidance
    return GuidanceMethod(
        kind=g.kind,
        zeta=g.zeta,
        mc_pool=pool if g.kind == GuidanceKind.MC else None,
        cg_tol=g.cg_tol,
        cg_max_iter=g.cg_max_iter,
    )


def _argmin_cell(table: pd.DataFrame, value: str) -> Tuple[float, float]:
    means = table.groupby(["t_min", "eps"], sort=True)[value].mean()
    t_min, eps = means.idxmin()
    return float(t_min), float(eps)


# ========== АБЛЯЦИЯ НА СМЕСИ ==========

def _ablation_cell(cfg: ExperimentConfig, repeat: int, cell: int, t_min: float, eps: float,
                   testbed) -> Dict[str, float]:
    daisi_cfg = DaisiConfig(
        t_min=t_min,
        eps=eps,
        steps=cfg.daisi.steps,
        guidance=_guidance(cfg, testbed.pool),
        seed=derive_int_seed(cfg.seed, Stage.CELL, repeat, cell),
    )
    analysis = daisi_analysis(testbed.forecast, testbed.y, testbed.obs, GmmDrift(testbed.prior),
                              daisi_cfg, threads=1)
    row = {
        "t_min": t_min,
        "eps": eps,
        "seed": repeat,
        "mmd_oracle": mmd_rbf(analysis.members, testbed.oracle),
        "mmd_forecast": mmd_rbf(analysis.members, testbed.forecast.members),
        "mmd_prior_posterior": mmd_rbf(analysis.members, testbed.prior_posterior),
    }
    logger.info(f"Ячейка t_min={t_min}, eps={eps}, повтор {repeat}: MMD={row['mmd_oracle']:.5f}")
    return row


def run_gmm_ablation(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> AblationResult:
    """
    Сетка (t_min, eps) на тестовом стенде смеси

    Для каждого повтора строится свой стенд; для каждой ячейки выполняется
    шаг анализа DAISI и считается MMD до истинного распределения фильтрации.
    """
    section = cfg.ablation
    grid = list(product(section.t_min, section.eps))
    testbeds = [
        build_gmm_testbed(derive_int_seed(cfg.seed, Stage.CELL, r), section.n, y=section.y,
                          sigma_obs=section.sigma_obs)
        for r in range(cfg.repeats)
    ]
    rows = Parallel(n_jobs=cfg.threads, prefer="threads")(
        delayed(_ablation_cell)(cfg, r, c, t_min, eps, testbeds[r])
        for r in range(cfg.repeats)
        for c, (t_min, eps) in enumerate(grid)
    )
    diagnostics = pd.DataFrame(rows, columns=["t_min", "eps", "seed", "mmd_oracle", "mmd_forecast",
                                              "mmd_prior_posterior"])
    heatmap = diagnostics.rename(columns={"mmd_oracle": "mmd"})[["t_min", "eps", "mmd", "seed"]]
    best = _argmin_cell(heatmap, "mmd")
    logger.info(f"Лучшая ячейка абляции: t_min={best[0]}, eps={best[1]}")
    if run_dir is not None:
        storage.write_csv(heatmap, Path(run_dir) / "heatmap.csv")
        storage.write_csv(diagnostics, Path(run_dir) / "diagnostics.csv")
    return AblationResult(heatmap, diagnostics, best)


# ========== ЛОРЕНЦ-63 ==========

def l63_observation_model(section: L63Section) -> ObservationModel:
    mask = None if section.operator == OperatorKind.IDENTITY else tuple(section.mask)
    return ObservationModel(section.operator, section.sigma_obs, state_dim=3, mask=mask)


def resolve_variant(cfg: ExperimentConfig) -> Tuple[float, float, bool]:
    """(t_min, eps, invert) выбранного набора; custom берет значения из секции daisi"""
    variant = cfg.l63.variant if cfg.l63 is not None else Variant.CUSTOM
    if variant == Variant.CUSTOM:
        return cfg.daisi.t_min, cfg.daisi.eps, cfg.daisi.invert
    return VARIANT_PRESETS[variant]


@dataclass
class L63Scenario:
    """Истина, наблюдения и начальный ансамбль одного повтора"""
    truths: np.ndarray
    observations: np.ndarray
    init: Ensemble


def l63_scenario(section: L63Section, obs: ObservationModel, seed: int, n_members: int,
                 x0: np.ndarray, spin_up: int, assimilate: int) -> L63Scenario:
    trajectory = l63_trajectory(x0, spin_up + assimilate + 1)
    truths = trajectory[spin_up + 1:]
    observations = observe(truths, obs, derive_rng(seed, Stage.OBSERVE))
    noise = derive_rng(seed, Stage.INIT).standard_normal((n_members, 3))
    init = Ensemble(trajectory[spin_up] + section.sigma_init * noise)
    return L63Scenario(truths, observations, init)


def _load_drift(section: L63Section) -> Optional[NetDrift]:
    if section.model_path is None:
        return None
    return storage.load_model(section.model_path)


def _reference_stats() -> NormStats:
    dataset = Dataset.from_samples(l63_trajectory(L63_X0, REFERENCE_STEPS))
    return dataset.stats


def _l63_pool(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if cfg.daisi.guidance.kind != GuidanceKind.MC:
        return None
    return attractor_samples(cfg.daisi.guidance.pool_size)


def run_l63_filter(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> L63Result:
    """
    Фильтрация Лоренца-63 выбранным фильтром на repeats независимых траекториях

    Начальные условия истины берутся из N(mu, sigma^2 I) статистик обучения,
    траектория прогоняется spin_up шагов, затем ассимилируются assimilate
    наблюдений; метрики усредняются по последним window шагам.
    """
    section = cfg.l63
    if section is None:
        raise ConfigError("Эксперимент l63_filter требует секцию l63")
    obs = l63_observation_model(section)
    model = _load_drift(section)
    stats = model.stats if model is not None else _reference_stats()
    dynamics = L63Propagator()
    daisi_cfg = None
    if section.filter == FilterKind.DAISI:
        t_min, eps, invert = resolve_variant(cfg)
        daisi_cfg = DaisiConfig(t_min=t_min, eps=eps, steps=cfg.daisi.steps,
                                guidance=_guidance(cfg, _l63_pool(cfg)), invert=invert)
        logger.info(f"DAISI на Лоренце-63: t_min={t_min}, eps={eps}, инверсия={invert}")

    frames, summaries, traces, truths = [], [], [], []
    for r in range(cfg.repeats):
        seed = derive_int_seed(cfg.seed, Stage.CELL, r)
        x0 = stats.mu + stats.sigma * derive_rng(seed, Stage.TRUTH).standard_normal(3)
        n_members = cfg.daisi.members if daisi_cfg is not None else section.particles
        scenario = l63_scenario(section, obs, seed, n_members, x0, section.spin_up, section.assimilate)
        if daisi_cfg is not None:
            trace = daisi_run(scenario.init, scenario.observations, dynamics, obs, model,
                              replace(daisi_cfg, seed=seed),
                              truths=scenario.truths, threads=cfg.threads,
                              keep_ensembles=section.keep_ensembles)
        else:
            trace = bpf_run(scenario.init, scenario.observations, dynamics, obs,
                            scheme=section.resampling, seed=seed, truths=scenario.truths,
                            keep_ensembles=section.keep_ensembles)
        report = trace.report(section.window)
        logger.info(f"Повтор {r}: RMSE={report.rmse:.3f}, CRPS={report.crps:.3f}, SSR={report.ssr:.3f}")
        frame = trace.metrics_frame()
        frame.insert(0, "repeat", r)
        frames.append(frame)
        summaries.append({"repeat": r, **report.to_row()})
        traces.append(trace)
        truth = storage.trajectory_frame(scenario.truths, start_step=section.spin_up + 1)
        truth.insert(0, "repeat", r)
        truths.append(truth)
        if run_dir is not None and section.keep_ensembles:
            for step, members in enumerate(trace.ensembles):
                storage.save_ensemble(Ensemble(members, step=step),
                                      Path(run_dir) / "ensembles" / f"r{r:03d}_s{step:05d}.bin")

    metrics = pd.concat(frames, ignore_index=True)
    summary = pd.DataFrame(summaries)
    means = summary[METRIC_COLUMNS].mean(axis=0)
    report = MetricReport(window=section.window, ssr_flagged=bool(summary["ssr"].isna().any()),
                          **{name: float(means[name]) for name in METRIC_COLUMNS})
    logger.info(f"Итог по {cfg.repeats} повторам: RMSE={report.rmse:.3f}, SSR={report.ssr:.3f}")
    if run_dir is not None:
        storage.write_csv(metrics, Path(run_dir) / "metrics.csv")
        storage.write_csv(summary, Path(run_dir) / "summary.csv")
        storage.write_csv(pd.concat(truths, ignore_index=True), Path(run_dir) / "trajectory.csv")
    return L63Result(metrics, summary, report, traces)


# ========== ПОИСК ГИПЕРПАРАМЕТРОВ ==========

def _sweep_cell(cfg: ExperimentConfig, model: NetDrift, obs: ObservationModel, pool,
                scenario: L63Scenario, repeat: int, t_min: float, eps: float) -> Dict[str, float]:
    seed = derive_int_seed(cfg.seed, Stage.CELL, repeat)
    daisi_cfg = DaisiConfig(t_min=t_min, eps=eps, steps=cfg.daisi.steps,
                            guidance=_guidance(cfg, pool), seed=seed)
    trace = daisi_run(scenario.init, scenario.observations, L63Propagator(), obs, model, daisi_cfg,
                      truths=scenario.truths, threads=1)
    crps = trace.report(cfg.sweep.window).crps
    logger.info(f"Поиск: t_min={t_min}, eps={eps}, повтор {repeat}: CRPS={crps:.4f}")
    return {"t_min": t_min, "eps": eps, "repeat": repeat, "seed": seed, "crps": crps}


def run_sweep(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> SweepResult:
    """
    Поиск (t_min, eps) по сетке с минимизацией CRPS

    Траектория настройки стартует из (0, 1, 1.05) и не совпадает с оценочными;
    все ячейки одного повтора используют общие наблюдения и начальный ансамбль.
    """
    section, sweep = cfg.l63, cfg.sweep
    if section is None or section.model_path is None:
        raise ConfigError("Поиск гиперпараметров требует секцию l63 с model_path")
    if sweep.window > sweep.assimilate:
        raise ConfigError("sweep.window не может превышать sweep.assimilate")
    obs = l63_observation_model(section)
    model = storage.load_model(section.model_path)
    pool = _l63_pool(cfg)
    scenarios = [
        l63_scenario(section, obs, derive_int_seed(cfg.seed, Stage.CELL, r), cfg.daisi.members,
                     np.asarray(L63_X0), sweep.spin_up, sweep.assimilate)
        for r in range(cfg.repeats)
    ]
    rows = Parallel(n_jobs=cfg.threads, prefer="threads")(
        delayed(_sweep_cell)(cfg, model, obs, pool, scenarios[r], r, t_min, eps)
        for t_min, eps in product(sweep.t_min, sweep.eps)
        for r in range(cfg.repeats)
    )
    table = pd.DataFrame(rows, columns=["t_min", "eps", "repeat", "seed", "crps"])
    best = _argmin_cell(table, "crps")
    logger.info(f"Лучшие гиперпараметры: t_min={best[0]}, eps={best[1]}")
    if run_dir is not None:
        storage.write_csv(table, Path(run_dir) / "sweep.csv")
    return SweepResult(table, best)


# ========== ПРОВЕРКИ ПРОТИВ ФИЛЬТРА КАЛМАНА ==========

def _tracking_rows(name: str, means: np.ndarray, kalman_means: np.ndarray, kalman_vars: np.ndarray,
                   n, n_sigma: float) -> List[dict]:
    """Сравнение средних по шагам; n - размер выборки (скаляр или по шагам, например ESS)"""
    sizes = np.broadcast_to(np.asarray(n, dtype=float), means.shape)
    rows = []
    for step in range(means.shape[0]):
        se = float(np.sqrt(kalman_vars[step] / sizes[step]))
        tol = n_sigma * se
        value = float(means[step])
        rows.append({"check": name, "step": step, "value": value,
                     "reference": float(kalman_means[step]), "tolerance": tol,
                     "passed": abs(value - kalman_means[step]) <= tol})
    return rows


def run_linear_gaussian_check(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> CheckResult:
    """
    Проверки на линейно-гауссовой системе

    - mmps_posterior: сэмплер с наведением MMPS на гауссовом априорном
      распределении воспроизводит аналитическое апостериорное распределение
    - daisi_kalman / bpf_kalman: средние ансамблей DAISI и BPF следуют
      среднему фильтра Калмана на скалярной авторегрессии

    Raises:
        AcceptanceError: хотя бы одна проверка не пройдена (после записи check.csv)
    """
    c = cfg.check
    obs = ObservationModel(OperatorKind.IDENTITY, float(np.sqrt(c.r)), state_dim=1)
    rows: List[dict] = []

    # Апостериорное распределение гауссианы при линейном наблюдении
    prior_mean, prior_std, y = c.m0, float(np.sqrt(c.p0)), np.array([1.5])
    post_var = 1.0 / (1.0 / c.p0 + 1.0 / c.r)
    post_mean = post_var * (prior_mean / c.p0 + y[0] / c.r)
    mmps = GuidanceMethod(GuidanceKind.MMPS, zeta=1.0)
    sampler_cfg = DaisiConfig(t_min=c.t_min, steps=c.sde_steps, guidance=mmps, invert=False,
                              seed=derive_int_seed(cfg.seed, Stage.CELL, 0))
    placeholder = Ensemble(np.zeros((c.samples, 1)))
    samples = daisi_analysis(placeholder, y, obs, GaussianDrift(prior_mean, prior_std), sampler_cfg,
                             threads=cfg.threads).members[:, 0]
    mean_tol = c.n_sigma * np.sqrt(post_var / c.samples)
    rows.append({"check": "mmps_posterior_mean", "step": 0, "value": float(samples.mean()),
                 "reference": post_mean, "tolerance": mean_tol,
                 "passed": abs(samples.mean() - post_mean) <= mean_tol})
    sample_var = float(samples.var(ddof=1))
    rows.append({"check": "mmps_posterior_var", "step": 0, "value": sample_var,
                 "reference": post_var, "tolerance": c.var_rtol * post_var,
                 "passed": abs(sample_var - post_var) <= c.var_rtol * post_var})

    # Скалярная авторегрессия
    rng = derive_rng(cfg.seed, Stage.TRUTH)
    x = c.m0 + np.sqrt(c.p0) * rng.standard_normal()
    truths = []
    for _ in range(c.steps):
        x = c.a * x + np.sqrt(c.q) * rng.standard_normal()
        truths.append(x)
    truths = np.array(truths)[:, None]
    observations = observe(truths, obs, derive_rng(cfg.seed, Stage.OBSERVE))
    kalman = kalman_filter([[c.a]], [[c.q]], [[1.0]], [[c.r]], [c.m0], [[c.p0]], observations)
    k_means, k_vars = kalman.means[:, 0], kalman.covs[:, 0, 0]
    dynamics = LinearGaussianPropagator(c.a, c.q)

    init_rng = derive_rng(cfg.seed, Stage.INIT)
    daisi_init = Ensemble(c.m0 + np.sqrt(c.p0) * init_rng.standard_normal((c.members, 1)))
    daisi_cfg = DaisiConfig(t_min=c.t_min, steps=c.sde_steps, guidance=mmps,
                            seed=derive_int_seed(cfg.seed, Stage.CELL, 1))
    daisi_trace = daisi_run(daisi_init, observations, dynamics, obs, GaussianDrift.fit, daisi_cfg,
                            threads=cfg.threads)
    daisi_means = np.array([rec.mean[0] for rec in daisi_trace.records])
    rows += _tracking_rows("daisi_kalman", daisi_means, k_means, k_vars, c.members, c.n_sigma)

    bpf_init = c.m0 + np.sqrt(c.p0) * init_rng.standard_normal((c.particles, 1))
    bpf_trace = bpf_run(bpf_init, observations, dynamics, obs, seed=derive_int_seed(cfg.seed, Stage.CELL, 2))
    bpf_means = np.array([rec.mean[0] for rec in bpf_trace.records])
    ess = np.array([rec.ess for rec in bpf_trace.records])
    rows += _tracking_rows("bpf_kalman", bpf_means, k_means, k_vars, ess, c.n_sigma)

    result = CheckResult(pd.DataFrame(rows, columns=["check", "step", "value", "reference",
                                                     "tolerance", "passed"]))
    if run_dir is not None:
        storage.write_csv(result.table, Path(run_dir) / "check.csv")
    failed = sorted(set(result.table.loc[~result.table["passed"], "check"]))
    if failed:
        raise AcceptanceError("Проверки не пройдены: " + ", ".join(failed), failed=len(failed))
    logger.info(f"Все проверки пройдены ({len(result.table)} сравнений)")
    return result


# ========== ОБУЧЕНИЕ ==========

def run_train(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> NetDrift:
    """Сгенерировать траекторию, обучить дрейф и сохранить файл модели и историю"""
    t = cfg.train
    dataset = generate_l63_dataset(t.n_steps, split=t.split)
    train_cfg = TrainConfig(lr=t.lr, batch_size=t.batch_size, epochs=t.epochs, beta1=t.beta1,
                            beta2=t.beta2, adam_eps=t.adam_eps, split=t.split, seed=cfg.seed)
    model = train_drift(dataset, t.hidden, train_cfg)
    storage.save_model(model, t.model_path)
    if run_dir is not None:
        storage.save_model(model, Path(run_dir) / "model.bin")
        storage.write_csv(storage.history_frame(model), Path(run_dir) / "history.csv")
    return model


__all__ = [
    "AblationResult",
    "L63Result",
    "SweepResult",
    "CheckResult",
    "run_gmm_ablation",
    "run_l63_filter",
    "run_sweep",
    "run_linear_gaussian_check",
    "run_train",
    "l63_observation_model",
    "resolve_variant",
    "l63_scenario",
]
