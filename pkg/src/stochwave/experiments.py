"""Config-driven experiment runner: presets, validation, CSV and manifest output.

An experiment bundles a problem definition (drift, diffusion, initial data,
scheme) with one or more studies: convergence-rate ladders, stability series,
or the analytic linear check.  Results are written as CSV tables whose header
comments carry the manifest hash, so a rerun with the same resolved config
reproduces files byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import Diffusion
from .drift import MODIFIED_CN, SCHEMES, PolynomialDrift
from .ensemble import EnsembleStats, run_ensemble, subset_fraction
from .fem import FeSpace
from .fields import (
    Constant,
    CosineProduct,
    LinearWaveSolution,
    TentBump,
    field_from_config,
    field_to_config,
)
from .mesh import build_interval_mesh, build_unit_square_tri_mesh
from .metrics import (
    ErrorTable,
    analytic_error_table,
    convergence_table,
    quadrature_degree_for,
)
from .stepper import SchemeConfig

__all__ = [
    "RateStudy",
    "StabilityStudy",
    "AnalyticStudy",
    "ExperimentConfig",
    "ExperimentResult",
    "PRESETS",
    "preset_config",
    "config_from_dict",
    "config_to_dict",
    "validate_config",
    "run_experiment",
]

# Experiment runs use a Newton tolerance near the attainable floor so the
# recorded per-step energy residuals measure the scheme, not the solver.
_EXPERIMENT_NEWTON_ABS_TOL = 1e-13


@dataclass
class RateStudy:
    mode: str  # "spatial" | "temporal"
    levels: list[int]
    taus: list[float]
    T: float
    reference_extra_levels: int = 1
    label: str = "rates"


@dataclass
class StabilityStudy:
    level: int
    tau: float
    T: float
    kappa: float | None = None
    deterministic_companion: bool = True
    label: str = "stability"


@dataclass
class AnalyticStudy:
    levels: list[int]
    tau: float
    T: float
    label: str = "analytic_rates"


@dataclass
class ExperimentConfig:
    name: str
    dimension: int
    drift: PolynomialDrift
    diffusion: Diffusion
    h1: object
    h2: object
    studies: list
    degree: int = 1
    scheme: str = MODIFIED_CN
    n_samples: int = 200
    master_seed: int = 20240901
    threads: int = 1
    newton_abs_tol: float = _EXPERIMENT_NEWTON_ABS_TOL


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _study_to_dict(study) -> dict:
    if isinstance(study, RateStudy):
        return {"kind": "rates", **dataclasses.asdict(study)}
    if isinstance(study, StabilityStudy):
        return {"kind": "stability", **dataclasses.asdict(study)}
    if isinstance(study, AnalyticStudy):
        return {"kind": "analytic", **dataclasses.asdict(study)}
    raise TypeError(f"unknown study type {type(study)}")


def _study_from_dict(d: dict):
    kinds = {"rates": RateStudy, "stability": StabilityStudy, "analytic": AnalyticStudy}
    kind = d.get("kind")
    if kind not in kinds:
        raise ValueError(f"studies[].kind must be one of {sorted(kinds)}, got {kind!r}")
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    return kinds[kind](**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "name": cfg.name,
        "dimension": cfg.dimension,
        "degree": cfg.degree,
        "scheme": cfg.scheme,
        "drift": {
            "coeffs": list(cfg.drift.coeffs),
            "alpha": cfg.drift.alpha,
            "lambda": cfg.drift.lam,
        },
        "diffusion": {
            "kind": cfg.diffusion.kind,
            "c": cfg.diffusion.c,
            "epsilon": cfg.diffusion.epsilon,
        },
        "h1": field_to_config(cfg.h1),
        "h2": field_to_config(cfg.h2),
        "n_samples": cfg.n_samples,
        "master_seed": cfg.master_seed,
        # threads is an execution detail: results are independent of it,
        # so it stays out of the canonical config and the manifest hash
        "newton_abs_tol": cfg.newton_abs_tol,
        "studies": [_study_to_dict(s) for s in cfg.studies],
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    drift_d = d.get("drift", {})
    diff_d = d.get("diffusion", {})
    diff_kwargs = {k: diff_d[k] for k in ("c", "epsilon") if k in diff_d}
    return ExperimentConfig(
        name=d.get("name", "custom"),
        dimension=int(d.get("dimension", 1)),
        degree=int(d.get("degree", 1)),
        scheme=d.get("scheme", MODIFIED_CN),
        drift=PolynomialDrift(
            drift_d.get("coeffs", [0.0]),
            alpha=drift_d.get("alpha", 0.0),
            lam=drift_d.get("lambda", drift_d.get("lam", 0.0)),
        ),
        diffusion=Diffusion(diff_d.get("kind", "zero"), **diff_kwargs),
        h1=field_from_config(d.get("h1", {"kind": "zero"})),
        h2=field_from_config(d.get("h2", {"kind": "zero"})),
        n_samples=int(d.get("n_samples", 200)),
        master_seed=int(d.get("master_seed", 20240901)),
        threads=int(d.get("threads", 1)),
        newton_abs_tol=float(d.get("newton_abs_tol", _EXPERIMENT_NEWTON_ABS_TOL)),
        studies=[_study_from_dict(s) for s in d.get("studies", [])],
    )


def manifest_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_steps(T: float, tau: float) -> bool:
    n = round(T / tau)
    return n >= 1 and math.isclose(n * tau, T, rel_tol=1e-9, abs_tol=0.0)


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """All violations with field paths; empty list means the config is runnable."""
    errors: list[str] = []
    if cfg.dimension not in (1, 2):
        errors.append(f"dimension: must be 1 or 2, got {cfg.dimension}")
    if cfg.degree not in (1, 2):
        errors.append(f"degree: must be 1 or 2, got {cfg.degree}")
    if cfg.scheme not in SCHEMES:
        errors.append(f"scheme: must be one of {SCHEMES}, got {cfg.scheme!r}")
    if cfg.n_samples < 1:
        errors.append(f"n_samples: must be >= 1, got {cfg.n_samples}")
    else:
        for v in cfg.drift.validate(cfg.dimension, cfg.scheme):
            errors.append(f"drift: {v}")
    if not cfg.studies:
        errors.append("studies: at least one study is required")
    for i, s in enumerate(cfg.studies):
        p = f"studies[{i}]"
        if isinstance(s, RateStudy):
            if s.mode not in ("spatial", "temporal"):
                errors.append(f"{p}.mode: must be spatial or temporal, got {s.mode!r}")
                continue
            taus = s.taus
            if s.mode == "spatial":
                if len(taus) != 1:
                    errors.append(f"{p}.taus: spatial mode expects a single tau")
                if any(b != 2 * a for a, b in zip(s.levels[:-1], s.levels[1:])):
                    errors.append(f"{p}.levels: ladder entries must double: {s.levels}")
            else:
                if len(s.levels) != 1:
                    errors.append(f"{p}.levels: temporal mode expects a single level")
                if any(
                    not math.isclose(a, 2 * b, rel_tol=1e-12)
                    for a, b in zip(taus[:-1], taus[1:])
                ):
                    errors.append(f"{p}.taus: ladder entries must halve: {taus}")
            for t in taus:
                if not _check_steps(s.T, t):
                    errors.append(f"{p}: T={s.T} is not an integer multiple of tau={t}")
            if s.reference_extra_levels < 1:
                errors.append(f"{p}.reference_extra_levels: must be >= 1")
        elif isinstance(s, StabilityStudy):
            if not _check_steps(s.T, s.tau):
                errors.append(f"{p}: T={s.T} is not an integer multiple of tau={s.tau}")
            if s.kappa is not None and s.kappa < 0:
                errors.append(f"{p}.kappa: must be >= 0")
        elif isinstance(s, AnalyticStudy):
            if not cfg.drift.is_zero or not cfg.diffusion.is_zero:
                errors.append(f"{p}: analytic study requires zero drift and diffusion")
            if not _check_steps(s.T, s.tau):
                errors.append(f"{p}: T={s.T} is not an integer multiple of tau={s.tau}")
    return errors


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_CUBIC = PolynomialDrift([-1.0, 0.0, -1.0], alpha=1.0, lam=0.5)
_DEG7 = PolynomialDrift([-1.0] + [0.0] * 5 + [-1.0], alpha=1.0, lam=0.25)
_DEG11 = PolynomialDrift([-1.0] + [0.0] * 9 + [-1.0], alpha=1.0, lam=1.0 / 6.0)
_ZERO_DRIFT = PolynomialDrift([0.0], alpha=0.0, lam=0.0)


def _rate_preset(name, drift, diffusion, paper):
    return ExperimentConfig(
        name=name,
        dimension=1,
        drift=drift,
        diffusion=diffusion,
        h1=CosineProduct(kx=1),
        h2=Constant(0.0),
        n_samples=5000 if paper else 200,
        studies=[
            RateStudy(
                mode="spatial",
                levels=[4, 8, 16, 32, 64],
                taus=[1e-3],
                T=0.01,
                reference_extra_levels=1,
                label="spatial_rates",
            ),
            RateStudy(
                mode="temporal",
                levels=[128],
                taus=[0.1 / 2**k for k in range(6)],
                T=0.4,
                reference_extra_levels=2,
                label="temporal_rates",
            ),
        ],
    )


def _test2_preset(paper):
    spatial_levels = [16, 32, 64, 128, 256] if paper else [16, 32, 64, 128]
    temporal_level = 512 if paper else 128
    temporal_taus = [0.1 / 2**k for k in range(3, 8 if paper else 7)]
    return ExperimentConfig(
        name="test2",
        dimension=1,
        drift=_CUBIC,
        diffusion=Diffusion.linear(1.0),
        h1=Constant(0.0),
        h2=TentBump(center=0.5, slope=4.0),
        n_samples=5000 if paper else 200,
        studies=[
            RateStudy(
                mode="spatial",
                levels=spatial_levels,
                taus=[5e-3],
                T=0.05,
                reference_extra_levels=1,
                label="spatial_rates",
            ),
            RateStudy(
                mode="temporal",
                levels=[temporal_level],
                taus=temporal_taus,
                T=1.0,
                reference_extra_levels=2,
                label="temporal_rates",
            ),
        ],
    )


def _test3_preset(name, drift, diffusion, paper):
    return ExperimentConfig(
        name=name,
        dimension=2,
        drift=drift,
        diffusion=diffusion,
        h1=CosineProduct(kx=1, ky=2),
        h2=Constant(0.0),
        n_samples=5000 if paper else 200,
        studies=[
            StabilityStudy(
                level=16 if paper else 8,
                tau=0.01,
                T=1.0,
                kappa=None,
                deterministic_companion=True,
            )
        ],
    )


def _lin_det_preset(paper):
    return ExperimentConfig(
        name="lin-det-check",
        dimension=1,
        drift=_ZERO_DRIFT,
        diffusion=Diffusion.zero(),
        h1=CosineProduct(kx=1),
        h2=Constant(0.0),
        n_samples=1,
        studies=[AnalyticStudy(levels=[8, 16, 32, 64], tau=1e-4, T=0.5)],
    )


PRESETS = {
    "test1a": lambda paper: _rate_preset("test1a", _CUBIC, Diffusion.linear(1.0), paper),
    "test1b": lambda paper: _rate_preset("test1b", _DEG11, Diffusion.linear(1.0), paper),
    "test1c": lambda paper: _rate_preset(
        "test1c", _CUBIC, Diffusion.smoothed_abs(0.01), paper
    ),
    "test2": _test2_preset,
    "test3a": lambda paper: _test3_preset("test3a", _CUBIC, Diffusion.linear(1.0), paper),
    "test3b": lambda paper: _test3_preset("test3b", _DEG7, Diffusion.linear(1.0), paper),
    "test3c": lambda paper: _test3_preset(
        "test3c", _CUBIC, Diffusion.smoothed_abs(1.0), paper
    ),
    "lin-det-check": _lin_det_preset,
}


def preset_config(name: str, paper_scale: bool = False) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name](paper_scale)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class StudyResult:
    label: str
    table: ErrorTable | None = None
    stats: EnsembleStats | None = None
    det_stats: EnsembleStats | None = None
    kappa: float | None = None
    subset_curve: np.ndarray | None = None
    files: list[str] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path
    manifest_path: Path
    studies: list[StudyResult]
    max_energy_violation: float
    n_failures: int


def _build_space(cfg: ExperimentConfig, level: int) -> FeSpace:
    mesh = (
        build_interval_mesh(level)
        if cfg.dimension == 1
        else build_unit_square_tri_mesh(level)
    )
    return FeSpace(mesh, cfg.degree, quadrature_degree_for(cfg.degree, cfg.drift))


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def _fmt_order(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


def _csv_header(lines: list[str], mhash: str, cfg: ExperimentConfig) -> list[str]:
    return [
        f"# manifest_hash: {mhash}",
        f"# experiment: {cfg.name}",
        f"# seed: {cfg.master_seed}",
        f"# samples: {cfg.n_samples}",
        *lines,
    ]


def write_rate_csv(
    path: Path, table: ErrorTable, mhash: str, cfg: ExperimentConfig
) -> None:
    lines = _csv_header(
        [f"# mode: {table.mode}", f"# reference: {table.reference}"], mhash, cfg
    )
    lines.append("param,l2,l2_order,h1,h1_order,dtl2,dtl2_order")
    for i in range(len(table.params)):
        lines.append(
            ",".join(
                [
                    _fmt(table.params[i]),
                    _fmt(table.l2[i]),
                    _fmt_order(table.l2_orders[i]),
                    _fmt(table.h1[i]),
                    _fmt_order(table.h1_orders[i]),
                    _fmt(table.dtl2[i]),
                    _fmt_order(table.dtl2_orders[i]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def write_stability_csv(
    path: Path,
    stats: EnsembleStats,
    subset_curve: np.ndarray,
    kappa: float,
    mhash: str,
    cfg: ExperimentConfig,
) -> None:
    lines = _csv_header([f"# kappa: {_fmt(kappa)}"], mhash, cfg)
    lines.append(
        "t,mean_l2sq,min_l2sq,max_l2sq,mean_h1sq,min_h1sq,max_h1sq,"
        "mean_dtl2sq,min_dtl2sq,max_dtl2sq,mean_H,mean_H2,mean_H4,subset_fraction"
    )
    for n in range(stats.times.size):
        row = [
            _fmt(stats.times[n]),
            _fmt(stats.mean_l2sq[n]),
            _fmt(stats.min_l2sq[n]),
            _fmt(stats.max_l2sq[n]),
            _fmt(stats.mean_h1sq[n]),
            _fmt(stats.min_h1sq[n]),
            _fmt(stats.max_h1sq[n]),
            _fmt(stats.mean_dtl2sq[n]),
            _fmt(stats.min_dtl2sq[n]),
            _fmt(stats.max_dtl2sq[n]),
            _fmt(stats.mean_H[n]),
            _fmt(stats.mean_H2[n]),
            _fmt(stats.mean_H4[n]),
            _fmt(subset_curve[n]),
        ]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _run_rate_study(cfg: ExperimentConfig, study: RateStudy) -> ErrorTable:
    return convergence_table(
        mode=study.mode,
        dimension=cfg.dimension,
        levels=study.levels,
        taus=study.taus,
        T=study.T,
        drift=cfg.drift,
        diffusion=cfg.diffusion,
        h1=cfg.h1,
        h2=cfg.h2,
        n_samples=cfg.n_samples,
        master_seed=cfg.master_seed,
        degree=cfg.degree,
        scheme=cfg.scheme,
        reference_extra_levels=study.reference_extra_levels,
        threads=cfg.threads,
        newton_abs_tol=cfg.newton_abs_tol,
    )


def _run_stability_study(
    cfg: ExperimentConfig, study: StabilityStudy
) -> tuple[EnsembleStats, EnsembleStats | None, float, np.ndarray]:
    space = _build_space(cfg, study.level)
    scheme_cfg = SchemeConfig(
        tau=study.tau,
        n_steps=round(study.T / study.tau),
        scheme=cfg.scheme,
        newton_abs_tol=cfg.newton_abs_tol,
    )
    stats = run_ensemble(
        space,
        scheme_cfg,
        cfg.drift,
        cfg.diffusion,
        cfg.h1,
        cfg.h2,
        cfg.n_samples,
        cfg.master_seed,
        threads=cfg.threads,
        retain_series=True,
    )
    h1_full = stats.sample_l2sq + stats.sample_h1sq
    if study.kappa is not None:
        kappa = study.kappa
    else:
        # default diagnostic threshold: 90th percentile of per-sample maxima
        kappa = float(np.percentile(h1_full.max(axis=1), 90.0))
    curve = subset_fraction(h1_full, kappa)
    det_stats = None
    if study.deterministic_companion:
        det_stats = run_ensemble(
            space,
            scheme_cfg,
            cfg.drift,
            Diffusion.zero(),
            cfg.h1,
            cfg.h2,
            1,
            cfg.master_seed,
            threads=1,
            retain_series=True,
        )
    return stats, det_stats, kappa, curve


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentResult:
    """Execute every study and write CSVs plus the manifest."""
    problems = validate_config(cfg)
    if problems:
        raise ValueError("invalid config:\n" + "\n".join(problems))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mhash = manifest_hash(cfg)

    results: list[StudyResult] = []
    violation = -np.inf
    failures = 0
    for study in cfg.studies:
        if isinstance(study, RateStudy):
            table = _run_rate_study(cfg, study)
            path = out / f"{cfg.name}_{study.label}.csv"
            write_rate_csv(path, table, mhash, cfg)
            results.append(StudyResult(study.label, table=table, files=[path.name]))
            violation = max(violation, table.max_energy_violation)
            failures += table.n_failures
        elif isinstance(study, StabilityStudy):
            stats, det_stats, kappa, curve = _run_stability_study(cfg, study)
            path = out / f"{cfg.name}_{study.label}.csv"
            write_stability_csv(path, stats, curve, kappa, mhash, cfg)
            files = [path.name]
            if det_stats is not None:
                det_curve = subset_fraction(
                    det_stats.sample_l2sq + det_stats.sample_h1sq, kappa
                )
                det_path = out / f"{cfg.name}_{study.label}_deterministic.csv"
                write_stability_csv(det_path, det_stats, det_curve, kappa, mhash, cfg)
                files.append(det_path.name)
            results.append(
                StudyResult(
                    study.label,
                    stats=stats,
                    det_stats=det_stats,
                    kappa=kappa,
                    subset_curve=curve,
                    files=files,
                )
            )
            violation = max(violation, stats.max_energy_violation)
            failures += stats.n_failures
        elif isinstance(study, AnalyticStudy):
            exact = LinearWaveSolution(k=cfg.h1.kx if isinstance(cfg.h1, CosineProduct) else 1)
            table = analytic_error_table(
                levels=study.levels,
                tau=study.tau,
                T=study.T,
                exact=exact,
                drift=cfg.drift,
                diffusion=cfg.diffusion,
                h1=cfg.h1,
                h2=cfg.h2,
                degree=cfg.degree,
                scheme=cfg.scheme,
                master_seed=cfg.master_seed,
            )
            path = out / f"{cfg.name}_{study.label}.csv"
            write_rate_csv(path, table, mhash, cfg)
            results.append(StudyResult(study.label, table=table, files=[path.name]))
            violation = max(violation, table.max_energy_violation)

    manifest = {
        "config": config_to_dict(cfg),
        "manifest_hash": mhash,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "stochwave": _package_version(),
        },
        "outputs": [f for r in results for f in r.files],
        "newton_failures": failures,
    }
    manifest_path = out / f"{cfg.name}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(
        config=cfg,
        out_dir=out,
        manifest_path=manifest_path,
        studies=results,
        max_energy_violation=float(violation),
        n_failures=failures,
    )


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("stochwave")
    except Exception:
        return "unknown"
