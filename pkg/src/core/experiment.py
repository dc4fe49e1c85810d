"""
Kísérleti keretrendszer: Monge-Ampère ellenőrzés, rátaillesztés, λ sweep és
a CLI igék mögötti pipeline-ok
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.stats

from src.core.errors import AcceptanceError, ConfigError
from src.core.fields import (
    Field,
    Grid2,
    curl_curl,
    deficit,
    fd_gradient,
    holder_seminorm,
    sup_norm,
)
from src.core.nash_kuiper import (
    HolderWitness,
    build_schedule,
    full_flexibility,
    holder_witness,
    practical_schedule,
)
from src.core.problems import Problem, build_problem, f_to_A
from src.core.stage import StageParams, StageReport, exponents, run_stage
from src.utils.config_manager import ExperimentConfig
from src.utils.exporters import (
    merge_csv,
    read_structured,
    write_field_csv,
    write_json,
    write_rows_csv,
    write_structured,
    write_text,
)
from src.utils.logger import get_logger, log_banner

logger = get_logger()

__all__ = [
    "BATTERY_VERSION",
    "ExperimentResult",
    "RateFit",
    "battery_constant",
    "build_grid",
    "f_to_A",
    "fit_rate",
    "run_experiment",
    "run_sweep",
    "weak_battery",
    "verify_ma",
    "weak_ma_residuals",
]

# A próbafüggvények rögzítettek; bármilyen változás új verziót kap
BATTERY_VERSION = 1

# (középpont x, középpont y, sugár), ω méretéhez viszonyítva
_BATTERY = (
    (0.5, 0.5, 0.4),
    (0.3, 0.3, 0.2),
    (0.7, 0.3, 0.2),
    (0.3, 0.7, 0.2),
    (0.7, 0.7, 0.2),
)

# ‖A − metrika‖₀ mellé adott véges differencia tűrés a konzisztencia feltételben
FD_TOLERANCE = 1e-4


def _bump(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(1−t²)⁴ és első két deriváltja, |t| ≥ 1 esetén nulla"""
    s = np.where(np.abs(t) < 1.0, 1.0 - t * t, 0.0)
    return s ** 4, -8.0 * t * s ** 3, -8.0 * s ** 3 + 48.0 * t * t * s ** 2


def weak_battery(grid: Grid2) -> List[Dict[str, np.ndarray]]:
    """
    A rögzített, ω belsejében kompakt tartójú tenzorszorzat próbafüggvények

    Returns:
        Listában {'psi', 'psi11', 'psi22', 'psi12'} tömbök
    """
    x1, x2 = grid.coordinates()
    width = grid.x_max - grid.x_min
    height = grid.y_max - grid.y_min
    battery = []
    for fx, fy, fr in _BATTERY:
        rx, ry = fr * width, fr * height
        bx, dbx, ddbx = _bump((x1 - (grid.x_min + fx * width)) / rx)
        by, dby, ddby = _bump((x2 - (grid.y_min + fy * height)) / ry)
        battery.append({
            "psi": bx * by,
            "psi11": ddbx * by / rx ** 2,
            "psi22": bx * ddby / ry ** 2,
            "psi12": dbx * dby / (rx * ry),
        })
    return battery


def battery_constant(grid: Grid2) -> float:
    """max_ψ ∫|cof∇²ψ|: a gyenge és a VK reziduum közti konstans"""
    cell = grid.h ** 2
    return max(
        cell * float(np.sum(np.sqrt(t["psi11"] ** 2 + t["psi22"] ** 2 + 2.0 * t["psi12"] ** 2)))
        for t in weak_battery(grid)
    )


def weak_ma_residuals(v: Field, f: Field) -> List[float]:
    """
    |∫(𝔇et∇²v − f)ψ| minden próbafüggvényre

    Két deriváltat ψ-re viszünk át:
        ∫𝔇et∇²v·ψ = −∫(B₁₁ψ₂₂ − 2B₁₂ψ₁₂ + B₂₂ψ₁₁),  B = ½(∇v)ᵀ∇v
    így csak ∇v kell.
    """
    data = v.data if v.value_shape else v.data[..., np.newaxis]
    g = fd_gradient(Field(v.grid, data)).data
    B = 0.5 * np.einsum("...ki,...kj->...ij", g, g)
    cell = v.grid.h ** 2
    residuals = []
    for t in weak_battery(v.grid):
        contraction = B[..., 0, 0] * t["psi22"] - 2.0 * B[..., 0, 1] * t["psi12"] + B[..., 1, 1] * t["psi11"]
        residuals.append(abs(cell * float(np.sum(-contraction - f.data * t["psi"]))))
    return residuals


def verify_ma(v: Field, w: Field, A: Field, f: Optional[Field] = None) -> Tuple[float, float]:
    """
    (VK reziduum, gyenge Monge-Ampère reziduum)

    Args:
        v, w, A: mezők
        f: jobb oldal (None: −curl curl A)

    Returns:
        (‖A − (½(∇v)ᵀ∇v + sym∇w)‖₀, max_ψ |∫(𝔇et∇²v − f)ψ|)
    """
    if f is None:
        f = curl_curl(A) * -1.0
    else:
        f = f.restrict(v.grid)
    vk = sup_norm(deficit(v, w, A.restrict(v.grid)))
    weak = max(weak_ma_residuals(v, f))
    logger.info(f"Ellenőrzés: VK reziduum {vk:.4g}, gyenge MA reziduum {weak:.4g} (battery v{BATTERY_VERSION})")
    return vk, weak


@dataclass
class RateFit:
    """log y = slope·log x + intercept, Student-t konfidencia intervallummal"""
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    r_value: float
    n: int

    def within(self, expected: float, tolerance: float) -> bool:
        return abs(self.slope - expected) <= tolerance


def fit_rate(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> RateFit:
    """
    Log-log lineáris illesztés

    Args:
        x, y: pozitív értékek, legalább 2 pont
        confidence: az intervallum szintje

    Returns:
        RateFit (2 pontnál az intervallum nan)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError(f"Legalább két azonos hosszú minta kell: {x.size}, {y.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("A log-log illesztés pozitív értékeket vár")

    result = scipy.stats.linregress(np.log(x), np.log(y))
    n = int(x.size)
    if n > 2:
        half = float(scipy.stats.t.ppf(0.5 + 0.5 * confidence, n - 2)) * float(result.stderr)
    else:
        half = float("nan")
    return RateFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        stderr=float(result.stderr),
        ci_low=float(result.slope) - half,
        ci_high=float(result.slope) + half,
        r_value=float(result.rvalue),
        n=n
    )


def build_grid(cfg: ExperimentConfig) -> Grid2:
    x_min, x_max, y_min, y_max = cfg.domain
    return Grid2.build(x_min, x_max, y_min, y_max, margin=cfg.margin, nodes=cfg.nodes)


def _stage_params(cfg: ExperimentConfig, lam: float) -> StageParams:
    s = cfg.stage
    return StageParams(
        l=float(s['l']),
        lam=float(lam),
        M=float(s['M']),
        gamma=float(s['gamma']),
        beta=float(s['beta']),
        r0=None if s.get('r0') is None else float(s['r0']),
        guard_retries=int(s.get('guard_retries', 8))
    )


def run_sweep(
    problem: Problem,
    params: Sequence[StageParams],
    k: int,
    threads: int = 1,
    job_dir: Optional[Path] = None
) -> List[StageReport]:
    """
    Független stage futások (λ szerint), párhuzamosan is

    Minden feladat a saját fájljába ír; az eredmény a bemenet sorrendjében jön vissza.
    """
    def job(indexed: Tuple[int, StageParams]) -> StageReport:
        index, p = indexed
        logger.info(f"[{index + 1}/{len(params)}] sweep pont: λ={p.lam:g}, λl={p.lam * p.l:.4g}")
        _, _, report = run_stage(problem.v, problem.w, problem.A, p, k)
        if job_dir is not None:
            write_rows_csv([report.to_csv_row()], job_dir / f"stage_{index:03d}.csv")
            write_text(report.to_text(), job_dir / f"stage_{index:03d}.txt")
        return report

    jobs = list(enumerate(params))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, jobs))
    return [job(item) for item in jobs]


@dataclass
class ExperimentResult:
    """Egy CLI ige eredménye"""
    verb: str
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)


def _require(result: ExperimentResult, condition: bool, message: str):
    if not condition:
        result.failures.append(message)
        logger.error(f"❌ {message}")


def _save_fields(cfg: ExperimentConfig, fields: Dict[str, Field], out: Path, stem: str, result: ExperimentResult):
    if "grid" in cfg.formats:
        result.artifacts.append(str(write_structured(fields, out / f"{stem}.grid")))
    if "csv" in cfg.formats:
        result.artifacts.append(str(write_field_csv(fields, out / f"{stem}.csv")))


def _problem(cfg: ExperimentConfig) -> Problem:
    return build_problem(cfg.problem, build_grid(cfg), cfg.k, seed=cfg.seed, **cfg.problem_params)


def _stage(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult("stage")
    problem = _problem(cfg)
    params = _stage_params(cfg, cfg.stage['lambdas'][0])
    v, w, report = run_stage(problem.v, problem.w, problem.A, params, cfg.k)

    result.artifacts.append(str(write_text(report.to_text(), out / "stage_report.txt")))
    result.artifacts.append(str(write_rows_csv([report.to_csv_row()], out / "stage.csv")))
    _save_fields(cfg, {"v": v, "w": w, "deficit": deficit(v, w, problem.A.restrict(v.grid))}, out, "fields", result)
    result.summary = {"stage": report.to_csv_row(), "shapes": report.shapes}
    if cfg.enforce:
        _require(result, report.final_deficit < report.input_deficit, "A stage nem csökkentette a deficitet")
    return result


def _sweep(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult("sweep")
    lambdas = sorted(float(lam) for lam in cfg.stage['lambdas'])
    if len(lambdas) == 0:
        raise ConfigError("Üres sweep rács")
    problem = _problem(cfg)
    table = exponents(cfg.k)
    params = [_stage_params(cfg, lam) for lam in lambdas]

    job_dir = out / "jobs"
    reports = run_sweep(problem, params, cfg.k, threads=cfg.threads, job_dir=job_dir)
    parts = [job_dir / f"stage_{i:03d}.csv" for i in range(len(reports))]
    result.artifacts.append(str(merge_csv(parts, out / "sweep.csv")))

    lam_l = [r.lam * r.l for r in reports]
    summary: Dict[str, Any] = {"k": cfg.k, "S": table.S, "J": table.J, "points": len(reports)}
    if len(reports) >= 2:
        deficit_fit = fit_rate(lam_l, [r.floor_removed_deficit for r in reports])
        hessian_fit = fit_rate(lam_l, [r.hess_v for r in reports])
        summary["deficit_rate"] = asdict(deficit_fit)
        summary["hessian_rate"] = asdict(hessian_fit)
        logger.info(
            f"Ráták: deficit {deficit_fit.slope:.3f} (elvárt {-table.S}), "
            f"Hesse {hessian_fit.slope:.3f} (elvárt {table.J})"
        )
        if cfg.enforce:
            _require(result, deficit_fit.within(-table.S, cfg.rate_tolerance),
                     f"Deficit ráta {deficit_fit.slope:.3f} ∉ {-table.S} ± {cfg.rate_tolerance}")
            _require(result, hessian_fit.within(table.J, cfg.rate_tolerance),
                     f"Hesse ráta {hessian_fit.slope:.3f} ∉ {table.J} ± {cfg.rate_tolerance}")
    summary["final_deficit"] = reports[-1].final_deficit
    summary["input_deficit"] = reports[-1].input_deficit
    if cfg.enforce:
        _require(result, reports[-1].final_deficit < reports[-1].input_deficit,
                 f"λ = {reports[-1].lam:g}: ‖𝒟̃‖₀ = {reports[-1].final_deficit:.4g} ≥ {reports[-1].input_deficit:.4g}")
    result.summary = summary
    if "json" in cfg.formats:
        result.artifacts.append(str(write_json(summary, out / "rates.json")))
    return result


def _nk_schedule(cfg: ExperimentConfig):
    """Ütemezés gyár: az első lépés utáni mezőkből épít"""
    nk = cfg.nk
    table = exponents(cfg.k)
    beta = float(cfg.stage['beta'])
    limit = min(beta / 2, float(table.threshold))
    target_alpha = min(a for a in cfg.alpha if a < limit) if any(a < limit for a in cfg.alpha) else 0.5 * limit

    def factory(v: Field, w: Field, A: Field):
        if nk['mode'] == 'exact':
            a_norm = sup_norm(A) + holder_seminorm(A, beta)
            return build_schedule(
                table.S, table.J, beta,
                deficit0=min(1.0, sup_norm(deficit(v, w, A))),
                grad_v0=sup_norm(fd_gradient(v)),
                a_norm=a_norm,
                alpha=target_alpha,
                iterations=int(nk['iterations']),
                C=float(nk['constant_C'])
            )
        l0 = nk.get('l0') or 0.25 * v.grid.margin
        return practical_schedule(
            l0=float(l0),
            ratio=float(nk['l_ratio']),
            lambda_l=float(nk['lambda_l']),
            iterations=int(nk['iterations']),
            lambda_ratio=None if nk.get('lambda_ratio') is None else float(nk['lambda_ratio'])
        )

    return factory, target_alpha


def _witness(cfg: ExperimentConfig, report) -> Optional[HolderWitness]:
    """Hölder tanú a legkisebb és legnagyobb követett kitevőre"""
    if report.nk is None or len(set(cfg.alpha)) < 2:
        return None
    return holder_witness(report.nk, below=min(cfg.alpha), above=max(cfg.alpha))


def _flex(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult("flex")
    problem = _problem(cfg)
    factory, target_alpha = _nk_schedule(cfg)
    epsilon = float(cfg.flex['epsilon'])
    target = cfg.flex.get('target')

    v, w, report = full_flexibility(
        problem.v, problem.w, problem.A, epsilon,
        alpha=target_alpha,
        track=cfg.alpha,
        k=cfg.k,
        schedule=factory,
        beta=float(cfg.stage['beta']),
        gamma=float(cfg.stage['gamma']),
        r0=None if cfg.stage.get('r0') is None else float(cfg.stage['r0']),
        rho=float(cfg.flex['rho']),
        frequency_growth=float(cfg.flex['frequency_growth']),
        target=None if target is None else float(target),
        nk_target=float(cfg.nk.get('target') or 0.0),
        monotone=True
    )

    A_out = problem.A.restrict(v.grid)
    f_out = problem.f.restrict(v.grid) if problem.f is not None else curl_curl(problem.A).restrict(v.grid) * -1.0
    vk, weak = verify_ma(v, w, A_out, f_out)
    summary = report.to_json_summary()
    summary["verification"] = {
        "vk_residual": vk,
        "weak_ma_residual": weak,
        "battery_version": BATTERY_VERSION,
        "battery_constant": battery_constant(v.grid),
    }
    witness = _witness(cfg, report)
    if witness is not None:
        summary["holder_witness"] = witness.to_json_summary()
    result.summary = summary

    fields = {"v": v, "w": w, "A": A_out, "f": f_out, "deficit": deficit(v, w, A_out)}
    _save_fields(cfg, fields, out, "fields", result)
    if report.nk is not None and report.nk.completed:
        result.artifacts.append(str(write_rows_csv(report.nk.to_csv_rows(), out / "nk.csv")))
    if "json" in cfg.formats:
        result.artifacts.append(str(write_json(summary, out / "summary.json")))

    if cfg.enforce:
        _require(result, report.v_displacement <= epsilon, f"‖ṽ−v‖₀ = {report.v_displacement:.4g} > ε")
        _require(result, report.w_displacement <= epsilon, f"‖w̃−w‖₀ = {report.w_displacement:.4g} > ε")
        if cfg.deficit_reduction is not None:
            _require(result, report.final_deficit <= cfg.deficit_reduction * report.initial_deficit,
                     f"‖𝒟̃‖₀ = {report.final_deficit:.4g} > {cfg.deficit_reduction:g}·{report.initial_deficit:.4g}")
        _require(result, report.is_monotone(), f"A deficit sorozat nem monoton: {report.deficit_track()}")
        if problem.f is not None:
            _require(result, weak <= 3.0 * vk + FD_TOLERANCE,
                     f"Gyenge MA reziduum {weak:.4g} > 3·{vk:.4g} + {FD_TOLERANCE}")
        if witness is not None and witness.observed:
            _require(result, witness.separated,
                     f"Hölder növekedés nem válik szét: [∇v]_{witness.below:g} ×{witness.growth_below:.3g}, "
                     f"[∇v]_{witness.above:g} ×{witness.growth_above:.3g}")
        elif witness is not None:
            logger.warning("Hölder tanú nem figyelhető meg: nem futott elfogadott NK iteráció")
    return result


def _verify(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult("verify")
    source = cfg.verify.get('fields_dir')
    if source:
        fields = read_structured(Path(source) / "fields.grid")
        missing = {"v", "w", "A"} - set(fields)
        if missing:
            raise ConfigError(f"Hiányzó mezők a dumpban: {sorted(missing)}")
        v, w, A, f = fields["v"], fields["w"], fields["A"], fields.get("f")
    else:
        problem = _problem(cfg)
        v, w, A, f = problem.v, problem.w, problem.A, problem.f

    vk, weak = verify_ma(v, w, A, f)
    constant = battery_constant(v.grid)
    result.summary = {
        "vk_residual": vk,
        "weak_ma_residual": weak,
        "battery_version": BATTERY_VERSION,
        "battery_constant": constant,
    }
    if "json" in cfg.formats:
        result.artifacts.append(str(write_json(result.summary, out / "verify.json")))
    if cfg.enforce:
        _require(result, weak <= constant * (vk + FD_TOLERANCE) + FD_TOLERANCE,
                 f"Gyenge reziduum {weak:.4g} > C·(VK + tűrés), C = {constant:.4g}")
    return result


def _export(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult("export")
    problem = _problem(cfg)
    fields = {"v": problem.v, "w": problem.w, "A": problem.A,
              "deficit": deficit(problem.v, problem.w, problem.A)}
    if problem.f is not None:
        fields["f"] = problem.f
    _save_fields(cfg, fields, out, "fields", result)
    result.summary = {"problem": problem.name, "description": problem.description}
    return result


PIPELINES = {
    "stage": _stage,
    "sweep": _sweep,
    "flex": _flex,
    "verify": _verify,
    "export": _export,
}


def run_experiment(cfg: ExperimentConfig, verb: str, out: Optional[Path] = None) -> ExperimentResult:
    """
    Egy ige végrehajtása és az eredmények kiírása

    Args:
        cfg: validált konfiguráció
        verb: stage | sweep | flex | verify | export
        out: kimeneti mappa (alapértelmezés: cfg.output_dir)

    Returns:
        ExperimentResult

    Raises:
        AcceptanceError: ha egy bekapcsolt ellenőrzés sérül
    """
    if verb not in PIPELINES:
        raise ConfigError(f"Ismeretlen ige: {verb} (elérhető: {sorted(PIPELINES)})")
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    log_banner(f"Kísérlet: {verb}, feladat={cfg.problem}, k={cfg.k}, seed={cfg.seed}")

    result = PIPELINES[verb](cfg, out)

    if result.failures:
        raise AcceptanceError("; ".join(result.failures))
    logger.info(f"✅ {verb} kész, {len(result.artifacts)} fájl: {out}")
    return result
