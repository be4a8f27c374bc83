"""Config-driven runs: validation, execution, plot data and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import traceback
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import experiments as ex
from .core import COVERAGE_HALFWIDTH, KERNEL_NORMALIZATION, PhysicalParams

log = logging.getLogger("kshydro")

EXPERIMENT_NAMES = tuple(ex.EXPERIMENTS)


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhysicalBlock(_Strict):
    m: float = Field(1.0, gt=0)
    K: float = Field(1.0, ge=0)
    sigma: float = Field(1.0, gt=0)


class ScaledBlock(_Strict):
    epsilons: list[float] = [0.2, 0.1, 0.05, 0.025]

    @field_validator("epsilons")
    @classmethod
    def _in_unit_interval(cls, v):
        if not v or any(not 0 < e <= 1 for e in v):
            raise ValueError("epsilons must be a nonempty list of values in (0, 1]")
        return v


class GridBlock(_Strict):
    n_theta: int = Field(64, ge=8)
    n_w: int = Field(64, ge=8)
    n_nu: int = Field(8, ge=1)
    t_end: float = Field(0.5, gt=0)
    cfl: float = Field(0.25, gt=0, le=1)
    reference_refine: int = Field(64, ge=1)
    transport: Literal["upwind", "upwind3"] = "upwind3"
    resolutions: list[int] = [64, 128, 256, 512]
    n_particles: int = Field(100_000, ge=1)
    dt: float = Field(0.01, gt=0)
    t_relax: float = Field(10.0, gt=0)


class Tolerances(_Strict):
    eps_slope: tuple[float, float] = (0.7, 1.3)
    particle_l1: float = 0.03
    force_match: float = 1e-12
    advection_slope: tuple[float, float] = (0.8, 1.2)
    mass_drift: float = 1e-13
    stationary: float = 1e-13
    gci_sup: float = 1e-3
    gci_slope: tuple[float, float] = (1.7, 2.3)
    gci_constraint: float = 1e-10
    gci_pairing: float = 1e-4
    hardy_oracle_rel: float = 1e-6
    hardy_asymptotic_rel: float = 0.05
    hardy_slack: float = 1.05
    relax_l1: float = 1e-6
    relax_mass: float = 1e-12


class RunConfig(_Strict):
    experiment: Literal[EXPERIMENT_NAMES]  # type: ignore[valid-type]
    physical: PhysicalBlock = PhysicalBlock()
    scaled: ScaledBlock = ScaledBlock()
    grids: GridBlock = GridBlock()
    seed: int = 2026
    output_dir: str | None = None
    tolerances: Tolerances = Tolerances()

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or Path("runs") / self.experiment)


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Parse and validate a YAML run descriptor; command-line overrides win."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# manifest


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    config: dict
    version: str
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    timings: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    renamed_series: dict = field(default_factory=dict)
    threads: int | None = None
    conventions: dict = field(default_factory=lambda: {
        "kernel_normalization": KERNEL_NORMALIZATION,
        "velocity_unit": "w0 = sqrt(sigma / m)",
        "coverage_halfwidth": COVERAGE_HALFWIDTH,
        "binary_layout": "little-endian float64, axes (nu, theta, w), C order",
    })

    @property
    def all_passed(self) -> bool:
        return self.status == "ok" and all(c["passed"] for c in self.checks)

    def write(self, directory: Path) -> Path:
        """Atomic write: temp file in the same directory, then rename."""
        target = directory / "manifest.json"
        tmp = directory / ".manifest.json.tmp"
        tmp.write_text(json.dumps(asdict(self), indent=2, default=str))
        os.replace(tmp, target)
        return target


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(directory: Path) -> list:
    out = []
    for p in sorted(directory.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", ".manifest.json.tmp"):
            out.append({"path": str(p.relative_to(directory)), "bytes": p.stat().st_size,
                        "sha256": sha256(p)})
    return out


# --------------------------------------------------------------------------
# plot data


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def emit_plotdata(series, directory, renamed: dict | None = None) -> list[Path]:
    """One CSV per series plus a JSON plot descriptor next to it.

    A name already used in this call gets the suffix -2 (then -3, ...); the
    mapping is stored in ``renamed``.
    """
    if not series:
        raise ValueError("no series to emit")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    used, written = set(), []
    for s in series:
        name, k = s.name, 1
        while name in used:
            k += 1
            name = f"{s.name}-{k}"
        if name != s.name and renamed is not None:
            renamed.setdefault(s.name, []).append(name)
        used.add(name)
        cols = list(s.columns)
        rows = zip(*(s.columns[c] for c in cols))
        csv_path = directory / f"{name}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        desc = {"data": csv_path.name, "title": s.title or name, "x": s.x or cols[0],
                "y": s.y or (cols[1] if len(cols) > 1 else cols[0]),
                "columns": cols, "log_x": s.logx, "log_y": s.logy}
        desc_path = directory / f"{name}.plot.json"
        desc_path.write_text(json.dumps(desc, indent=2))
        written += [csv_path, desc_path]
    return written


# --------------------------------------------------------------------------
# execution


def experiment_kwargs(cfg: RunConfig) -> dict:
    g, t, p = cfg.grids, cfg.tolerances, cfg.physical
    phys = PhysicalParams(p.m, p.K, p.sigma)
    if cfg.experiment == "eps_sweep":
        return dict(epsilons=tuple(cfg.scaled.epsilons), n_theta=g.n_theta, n_w=g.n_w, n_nu=g.n_nu,
                    t_end=g.t_end, physical=phys, cfl=g.cfl, reference_refine=g.reference_refine,
                    transport=g.transport, slope_range=t.eps_slope)
    if cfg.experiment == "particle_vs_kinetic":
        return dict(N=g.n_particles, dt=g.dt, t_relax=g.t_relax, physical=phys, n_w=g.n_w,
                    seed=cfg.seed, l1_tol=t.particle_l1, force_tol=t.force_match)
    if cfg.experiment == "hydro_validate":
        return dict(K=p.K, resolutions=tuple(g.resolutions), slope_range=t.advection_slope,
                    drift_tol=t.mass_drift, stationary_tol=t.stationary, seed=cfg.seed)
    if cfg.experiment == "gci_validate":
        return dict(resolutions=tuple(g.resolutions), sup_tol=t.gci_sup, slope_range=t.gci_slope,
                    constraint_tol=t.gci_constraint, pairing_tol=t.gci_pairing, seed=cfg.seed)
    if cfg.experiment == "hardy_validate":
        return dict(seed=cfg.seed, oracle_rel=t.hardy_oracle_rel, asym_rel=t.hardy_asymptotic_rel,
                    slack=t.hardy_slack)
    if cfg.experiment == "equilibrium_relax":
        return dict(epsilon=min(cfg.scaled.epsilons), K=p.K, l1_tol=t.relax_l1, mass_tol=t.relax_mass)
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")


def run(cfg: RunConfig, threads: int | None = None) -> RunManifest:
    """Execute one experiment; the manifest is written even when a stage fails."""
    out_dir = cfg.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config=cfg.model_dump(mode="json"), version=code_version(), threads=threads)
    stage = "setup"
    try:
        stage = "compute"
        t0 = time.perf_counter()
        kwargs = experiment_kwargs(cfg)
        if cfg.experiment == "eps_sweep":
            kwargs["progress"] = log.info
        outcome = ex.EXPERIMENTS[cfg.experiment](**kwargs)
        manifest.timings[stage] = time.perf_counter() - t0
        manifest.checks = [c.as_dict() for c in outcome.checks]
        for c in outcome.checks:
            log.info("%s %s: %.6g (threshold %s)", "PASS" if c.passed else "FAIL", c.name,
                     c.value, c.threshold)

        stage = "export"
        t0 = time.perf_counter()
        emit_plotdata(outcome.series, out_dir / "plotdata", manifest.renamed_series)
        (out_dir / "results.json").write_text(json.dumps(outcome.tables, indent=2, default=str))
        for name, writer in outcome.artifacts.items():
            writer(out_dir / name)
        manifest.timings[stage] = time.perf_counter() - t0
        manifest.status = "ok"
    except Exception as exc:  # recorded, never swallowed silently
        manifest.status = "error"
        manifest.failed_stage = stage
        manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        log.error("stage %s failed: %s", stage, manifest.error)
    finally:
        manifest.files = inventory(out_dir)
        manifest.write(out_dir)
    return manifest
