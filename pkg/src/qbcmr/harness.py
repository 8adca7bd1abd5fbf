"""Experiment configuration, persistence and the headline studies.

Configs are YAML mappings.  Every study needs ``study``; the remaining keys
and their defaults are listed in ``ExperimentConfig``.  Unknown keys, at any
nesting level, are rejected by name.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec, design_matrix
from qbcmr.exceptions import ConfigError
from qbcmr.inference import construct_functional_from_phitilde, coverage_study
from qbcmr.models import DESIGN_DEFAULTS, DESIGN_PARAMS, Dataset, DgpDesign, make_design, simulate_dgp
from qbcmr.pipeline import WEIGHTING, ChainSettings, fit_quasi_bayes, resolve_K
from qbcmr.posterior import posterior_mean
from qbcmr.prior import GaussianSeriesPrior, sample_prior
from qbcmr.replication import run_replications

log = logging.getLogger(__name__)

STUDIES = ("fit", "simulate", "rate-study", "coverage", "prior-draw")


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class DesignConfig:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FunctionalConfig:
    phi_tilde: tuple = (1.0,)
    gamma: float = 0.1


@dataclass(frozen=True)
class PriorDrawConfig:
    alphas: tuple = (0.5, 1.0, 2.0, 3.0)
    draws: int = 1
    grid: int = 201
    J: int = 256


@dataclass(frozen=True)
class ExperimentConfig:
    study: str
    design: DesignConfig | None = None
    alpha: float = 1.0
    K: int | str = "auto"
    weighting: str = "identity"
    n: int | None = None
    n_grid: tuple | None = None
    replications: int = 1
    chain: ChainSettings = field(default_factory=ChainSettings)
    functional: FunctionalConfig = field(default_factory=FunctionalConfig)
    prior_draw: PriorDrawConfig = field(default_factory=PriorDrawConfig)
    seed: int = 0
    output: str = "results"
    workers: int = 1
    data: str | None = None


_SECTIONS = {"chain": ChainSettings, "functional": FunctionalConfig, "prior_draw": PriorDrawConfig}
_TUPLES = {"n_grid", "phi_tilde", "alphas"}


def _check_keys(raw: dict, allowed, where: str):
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}")


def _section(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = [f.name for f in fields(cls)]
    _check_keys(raw, names, where)
    vals = {k: tuple(v) if k in _TUPLES else v for k, v in raw.items()}
    try:
        return cls(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _design_section(raw) -> DesignConfig:
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict):
        raise ConfigError("design must be a name or a mapping")
    if "name" not in raw:
        raise ConfigError("missing required key 'design.name'")
    _check_keys(raw, ("name",) + DESIGN_PARAMS, "design")
    if raw["name"] not in DESIGN_DEFAULTS:
        raise ConfigError(f"unknown design {raw['name']!r} in design.name; available: {sorted(DESIGN_DEFAULTS)}")
    return DesignConfig(raw["name"], {k: v for k, v in raw.items() if k != "name"})


def config_from_dict(raw) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    names = [f.name for f in fields(ExperimentConfig)]
    _check_keys(raw, names, "config")
    if "study" not in raw:
        raise ConfigError("missing required key 'study'")
    study = raw["study"]
    if study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}; expected one of {STUDIES}")
    vals = dict(raw)
    for key, cls in _SECTIONS.items():
        if key in vals:
            vals[key] = _section(cls, vals[key], key)
    if "design" in vals:
        vals["design"] = _design_section(vals["design"])
    if vals.get("n_grid") is not None:
        vals["n_grid"] = tuple(int(v) for v in vals["n_grid"])
    cfg = ExperimentConfig(**vals)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    needs_design = cfg.study in ("fit", "simulate", "rate-study", "coverage")
    if needs_design and cfg.design is None:
        raise ConfigError(f"missing required key 'design' for study {cfg.study!r}")
    if cfg.study in ("fit", "simulate", "coverage") and cfg.n is None and cfg.data is None:
        raise ConfigError(f"missing required key 'n' for study {cfg.study!r}")
    if cfg.n is not None and (int(cfg.n) != cfg.n or cfg.n < 2):
        raise ConfigError("n must be an integer >= 2")
    if cfg.study == "rate-study":
        if cfg.n_grid is None:
            raise ConfigError("missing required key 'n_grid' for study 'rate-study'")
        grid = cfg.n_grid
        if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must hold at least 3 strictly increasing sizes")
    if cfg.weighting not in WEIGHTING:
        raise ConfigError(f"unknown weighting {cfg.weighting!r}; expected one of {WEIGHTING}")
    if not (cfg.K == "auto" or (isinstance(cfg.K, int) and cfg.K >= 1)):
        raise ConfigError("K must be 'auto' or a positive integer")
    if not cfg.alpha > 0:
        raise ConfigError("alpha must be positive")
    if cfg.replications < 1 or cfg.workers < 1:
        raise ConfigError("replications and workers must be positive")
    if not 0.0 < cfg.functional.gamma < 1.0:
        raise ConfigError("functional.gamma must lie in (0, 1)")
    if cfg.prior_draw.grid < 2:
        raise ConfigError("prior_draw.grid must be at least 2")
    if cfg.design is not None:
        try:
            build_design(cfg)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid design parameters: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if f.name == "design" and v is not None:
            v = {"name": v.name, **v.params}
        elif f.name in _SECTIONS:
            v = {k: list(x) if isinstance(x, tuple) else x for k, x in asdict(v).items()}
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def build_design(cfg: ExperimentConfig) -> DgpDesign:
    return make_design(cfg.design.name, alpha=cfg.alpha, **cfg.design.params)


# ---------------------------------------------------------------------------
# persistence


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def to_json(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{to_json(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_results(records, path) -> Path:
    """JSON lines for ``.jsonl`` paths, otherwise CSV with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if path.suffix == ".jsonl":
        path.write_text("".join(to_json(r) + "\n" for r in records))
        return path
    buf = io.StringIO()
    header = list(records[0]) if records else []
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in records:
        writer.writerow([_cell(r[k]) for k in header])
    path.write_text(buf.getvalue())
    return path


def write_matrix(header, rows: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in np.atleast_2d(rows):
        writer.writerow([format_float(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def write_dataset(data: Dataset, path) -> Path:
    header = [f"X{i + 1}" for i in range(data.d)] + ["Y"] + [f"W{i + 1}" for i in range(data.d_w)]
    return write_matrix(header, np.column_stack([data.X, data.Y, data.W]), path)


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        header = next(csv.reader(fh))
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = [i for i, h in enumerate(header) if h.startswith("X")]
    ws = [i for i, h in enumerate(header) if h.startswith("W")]
    if "Y" not in header or not xs or not ws:
        raise ConfigError(f"{path} needs columns X1.., Y, W1..")
    return Dataset(arr[:, xs], arr[:, header.index("Y")], arr[:, ws])


# ---------------------------------------------------------------------------
# studies


def run_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    design = build_design(cfg)
    data = simulate_dgp(design, int(cfg.n), np.random.default_rng(cfg.seed))
    path = write_dataset(data, out / "data.csv")
    return {"study": "simulate", "n": data.n, "path": str(path)}


def run_fit(cfg: ExperimentConfig, out: Path) -> dict:
    design = build_design(cfg)
    rng = np.random.default_rng(cfg.seed)
    data = read_dataset(cfg.data) if cfg.data else simulate_dgp(design, int(cfg.n), rng)
    K = resolve_K(cfg.K, data.n, cfg.alpha, design.ill_posedness, data.d)
    fit = fit_quasi_bayes(data, design.model, cfg.alpha, K, cfg.weighting, cfg.chain, rng=rng, seed=cfg.seed)
    chain = fit.chain
    mean = posterior_mean(chain)
    write_matrix([f"theta{i + 1}" for i in range(fit.J)], chain.draws, out / "draws.csv")
    record = {"study": "fit", "n": data.n, "K": K, "J": fit.J, "weighting": cfg.weighting, **chain.diagnostics()}
    if not cfg.data:
        record["l2_error"] = l2_error(mean, design.h0)
    write_results([record], out / "diagnostics.jsonl")
    write_matrix(["theta"], mean.coeffs.reshape(-1, 1), out / "posterior_mean.csv")
    if chain.low_ess:
        log.warning("minimum effective sample size %.1f is below 50", chain.ess_min)
    return record


def l2_error(h: FunctionCoefficients, h0: FunctionCoefficients) -> float:
    """L2 distance on the shared cosine basis (exact under a uniform X-density)."""
    size = max(h.basis.size, h0.basis.size)
    return float(np.linalg.norm(h.padded(size).coeffs - h0.padded(size).coeffs))


def make_functional(cfg: ExperimentConfig, design: DgpDesign):
    pt = FunctionCoefficients(SieveBasisSpec("cosine", 1, len(cfg.functional.phi_tilde)), cfg.functional.phi_tilde)
    weight = "optimal" if cfg.weighting in ("optimal", "cu") else "identity"
    return construct_functional_from_phitilde(design, pt, weight)


def run_coverage_study(cfg: ExperimentConfig, out: Path, workers: int | None = None) -> dict:
    design = build_design(cfg)
    L = make_functional(cfg, design)
    res = coverage_study(
        design,
        L,
        cfg.functional.gamma,
        int(cfg.n),
        cfg.replications,
        cfg.seed,
        alpha=cfg.alpha,
        K=cfg.K,
        weighting=cfg.weighting,
        chain=cfg.chain,
        workers=workers or cfg.workers,
    )
    nominal = 1.0 - cfg.functional.gamma
    summary = {
        "type": "summary",
        "design": design.name,
        "weighting": cfg.weighting,
        "n": int(cfg.n),
        "gamma": cfg.functional.gamma,
        "replications": res.replications,
        "hits": int(sum(r["hit"] for r in res.records)),
        "coverage": res.coverage,
        "se": res.se,
        "nominal": nominal,
        "coverage_gap": abs(res.coverage - nominal),
        "truth": res.truth,
        "mean_radius": float(np.mean([r["radius"] for r in res.records])),
        "mean_accept_rate": float(np.mean([r["accept_rate"] for r in res.records])),
        "low_ess_count": int(sum(r["low_ess"] for r in res.records)),
    }
    recs = [{"type": "replication", **r} for r in res.records]
    write_results(recs + [summary], out / "coverage.jsonl")
    write_results([summary], out / "coverage_summary.csv")
    return summary


@dataclass(frozen=True)
class RateStudyResult:
    n_grid: tuple
    mean_errors: np.ndarray
    se: np.ndarray
    slope: float
    theoretical: float
    records: list = field(repr=False)

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.mean_errors) < 0))


def _rate_replication(index: int, seed: int, job: dict) -> dict:
    design = job["design"]
    n = job["n_of"][index]
    rng = np.random.default_rng(seed)
    data = simulate_dgp(design, n, rng)
    K = resolve_K(job["K"], n, job["alpha"], design.ill_posedness)
    fit = fit_quasi_bayes(data, design.model, job["alpha"], K, job["weighting"], job["chain"], rng=rng, seed=seed)
    err = l2_error(posterior_mean(fit.chain), design.h0)
    return {
        "replication": index,
        "seed": seed,
        "n": n,
        "K": K,
        "J": fit.J,
        "l2_error": err,
        "accept_rate": fit.chain.accept_rate,
        "ess_min": fit.chain.ess_min,
    }


def theoretical_exponent(design: DgpDesign, alpha: float, d: int = 1) -> float:
    """-alpha / (2 (alpha + zeta) + d) for mild designs, NaN otherwise."""
    ip = design.ill_posedness
    if ip.kind != "mild":
        return math.nan
    return -alpha / (2.0 * (alpha + ip.zeta) + d)


def run_rate_study(cfg: ExperimentConfig, out: Path | None = None, workers: int | None = None) -> RateStudyResult:
    design = build_design(cfg)
    grid = tuple(cfg.n_grid)
    R = cfg.replications
    n_of = [n for n in grid for _ in range(R)]
    job = dict(design=design, n_of=n_of, alpha=cfg.alpha, K=cfg.K, weighting=cfg.weighting, chain=cfg.chain)
    records = run_replications(_rate_replication, job, len(n_of), cfg.seed, workers or cfg.workers)
    errs = np.array([r["l2_error"] for r in records]).reshape(len(grid), R)
    mean = errs.mean(axis=1)
    se = errs.std(axis=1, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(len(grid))
    slope = float(np.polyfit(np.log(grid), np.log(mean), 1)[0])
    res = RateStudyResult(grid, mean, se, slope, theoretical_exponent(design, cfg.alpha), records)
    if out is not None:
        table = [
            {"n": n, "K": records[i * R]["K"], "mean_l2_error": m, "se": s}
            for i, (n, m, s) in enumerate(zip(grid, mean, se))
        ]
        summary = {
            "type": "summary",
            "design": design.name,
            "slope": slope,
            "theoretical_slope": res.theoretical,
            "decreasing": res.decreasing,
            "replications": R,
        }
        write_results(table, out / "rate_summary.csv")
        write_results([{"type": "replication", **r} for r in records] + [summary], out / "rate_study.jsonl")
    return res


def prior_paths(alphas, draws: int, grid: int, J: int, seed: int) -> tuple[np.ndarray, list, np.ndarray]:
    """Sample paths of the unscaled series prior on a uniform grid."""
    x = np.linspace(0.0, 1.0, grid)
    basis = SieveBasisSpec("cosine", 1, J)
    B = design_matrix(basis, x)
    rng = np.random.default_rng(seed)
    cols, names = [], []
    for a in alphas:
        prior = GaussianSeriesPrior(basis, float(a))
        for k in range(draws):
            cols.append(B @ sample_prior(prior, rng).coeffs)
            names.append(f"path_alpha{float(a):g}_{k}")
    return x, names, np.column_stack(cols)


def run_prior_draw(cfg: ExperimentConfig, out: Path) -> dict:
    pd = cfg.prior_draw
    x, names, paths = prior_paths(pd.alphas, pd.draws, pd.grid, pd.J, cfg.seed)
    path = write_matrix(["x"] + names, np.column_stack([x, paths]), out / "prior_draws.csv")
    return {"study": "prior-draw", "paths": len(names), "path": str(path)}


def run_study(cfg: ExperimentConfig, out: str | os.PathLike | None = None, workers: int | None = None) -> dict:
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.study == "simulate":
        return run_simulate(cfg, out)
    if cfg.study == "fit":
        return run_fit(cfg, out)
    if cfg.study == "coverage":
        return run_coverage_study(cfg, out, workers)
    if cfg.study == "rate-study":
        res = run_rate_study(cfg, out, workers)
        return {"study": "rate-study", "slope": res.slope, "theoretical_slope": res.theoretical}
    return run_prior_draw(cfg, out)
