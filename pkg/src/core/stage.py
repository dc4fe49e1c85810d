"""
Egy teljes stage: simítás, N = lcm(2,k) lépés emelkedő frekvencia létrán,
konform felbontás minden páros lépéspár előtt, végül összerakás
"""
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.core.conformal import decompose, estimate_r0
from src.core.errors import BookkeepingError, GuardError, MarginError, PreconditionError
from src.core.fields import (
    Field,
    c1_norm,
    check_same_grid,
    deficit,
    fd_gradient,
    hessian_sup,
    holder_seminorm,
    identity_field,
    metric,
    sup_norm,
)
from src.core.mollify import mollify
from src.core.step import StepSpec, apply_step, check_nyquist
from src.utils.logger import get_logger, log_metrics

logger = get_logger()

# A kimenetről levágott gyűrűk (a konform azonosság csak ezeken belül pontos)
OUTPUT_RINGS = 2


@dataclass(frozen=True)
class ExponentTable:
    """N = lcm(2,k) = 2S = kJ"""
    k: int
    N: int
    S: int
    J: int

    @property
    def threshold(self) -> Fraction:
        """S/(S+2J) = 1/(1+4/k)"""
        return Fraction(self.S, self.S + 2 * self.J)


def exponents(k: int) -> ExponentTable:
    """Kitevő táblázat a k kodimenzióhoz"""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"A kodimenzió pozitív egész kell legyen: {k}")
    k = int(k)
    n = math.lcm(2, k)
    return ExponentTable(k=k, N=n, S=n // 2, J=n // k)


def index_split(i: int, k: int) -> Tuple[int, int, int, int]:
    """
    i = k·j + γ = 2s + δ, γ ∈ {1..k}, δ ∈ {1,2}

    Returns:
        (j, γ, s, δ)
    """
    table = exponents(k)
    if not 1 <= i <= table.N:
        raise ValueError(f"Lépésindex tartományon kívül: {i} ∉ [1, {table.N}]")
    j = (i - 1) // k
    s = (i - 1) // 2
    return j, i - k * j, s, i - 2 * s


def frequency_ladder(k: int, lam: float, l: float) -> List[float]:
    """
    [λ₀, λ₁, …, λ_N], λ₀ = 1/l, λᵢ·l = (λl)^{1+j+s/2}

    A λ₁ = λ speciális érték egybeesik az általános képlettel.
    """
    if not lam * l > 1:
        raise PreconditionError(f"λ·l > 1 szükséges, kapott: {lam * l:.4g}")
    table = exponents(k)
    ladder = [1.0 / l]
    for i in range(1, table.N + 1):
        j, _, s, _ = index_split(i, k)
        ladder.append((lam * l) ** (1 + j + 0.5 * s) / l)
    return ladder


def internal_gamma(gamma: float, k: int) -> float:
    """A belső kitevő, amellyel a becslések a külső γ-t adják: 4γ/(k²+5k+2)"""
    return 4.0 * gamma / (k * k + 5 * k + 2)


@lru_cache(maxsize=16)
def _default_r0(gamma: float) -> float:
    return estimate_r0(gamma)


@dataclass(frozen=True)
class StageParams:
    """
    Stage paraméterek

    Attributes:
        l: simítási skála
        lam: alapfrekvencia, λ > 1/l
        M: regularitási keret, M ≥ 1
        gamma: interpolációs kitevő, (0,1)
        beta: A Hölder kitevője, (0,1]
        r0: a konform stabilitási sugár (None: becslés a belső γ-ra)
        guard_retries: C̃ₛ duplázások maximális száma
    """
    l: float
    lam: float
    M: float = 1.0
    gamma: float = 0.1
    beta: float = 1.0
    r0: Optional[float] = None
    guard_retries: int = 8

    def validate(self, margin: float, h: float, k: int):
        if not self.l > 0:
            raise PreconditionError(f"l pozitív kell legyen: {self.l}")
        if not self.lam * self.l > 1:
            raise PreconditionError(f"λ·l > 1 szükséges, kapott: {self.lam * self.l:.4g}")
        if not self.M >= 1:
            raise PreconditionError(f"M ≥ 1 szükséges, kapott: {self.M}")
        if not 0 < self.gamma < 1:
            raise PreconditionError(f"γ (0,1)-ben kell legyen: {self.gamma}")
        if not 0 < self.beta <= 1:
            raise PreconditionError(f"β (0,1]-ben kell legyen: {self.beta}")
        if self.r0 is not None and not self.r0 > 0:
            raise PreconditionError(f"r₀ pozitív kell legyen: {self.r0}")
        if self.guard_retries < 0:
            raise PreconditionError(f"guard_retries nem lehet negatív: {self.guard_retries}")
        if margin < 2.0 * self.l * (1 - 1e-9):
            raise MarginError(f"A margó ({margin:.4g}) kisebb, mint 2l = {2 * self.l:.4g}")
        top = frequency_ladder(k, self.lam, self.l)[-1]
        check_nyquist(top, h, what="A létra legfelső frekvenciája")


@dataclass
class StageReport:
    """
    Egy stage mért mennyiségei

    A `shapes` szótár a becslések jobb oldalainak alakjai (konstans nélkül),
    a `diagnostics` lépésenkénti arányokat tartalmaz.
    """
    k: int
    l: float
    lam: float
    M: float
    gamma: float
    gamma_internal: float
    beta: float
    r0: float
    frequencies: List[float] = field(default_factory=list)
    input_deficit: float = 0.0
    step_v_c1: List[float] = field(default_factory=list)
    step_w_c1: List[float] = field(default_factory=list)
    deficit_norms: List[float] = field(default_factory=list)
    c_tilde: List[float] = field(default_factory=list)
    guard_retries: List[int] = field(default_factory=list)
    decomposition_residuals: List[float] = field(default_factory=list)
    final_deficit: float = 0.0
    floor: float = 0.0
    floor_removed_deficit: float = 0.0
    bookkeeping_error: float = 0.0
    v_increment_c1: float = 0.0
    w_increment_c1: float = 0.0
    hess_v: float = 0.0
    hess_w: float = 0.0
    shapes: Dict[str, float] = field(default_factory=dict)
    diagnostics: List[Dict[str, float]] = field(default_factory=list)

    CSV_FIELDS = (
        "k", "l", "lam", "lambda_l", "M", "gamma", "beta", "r0",
        "input_deficit", "final_deficit", "floor", "floor_removed_deficit",
        "bookkeeping_error", "v_increment_c1", "w_increment_c1", "hess_v", "hess_w",
    )

    def to_records(self) -> List[Tuple[str, Any]]:
        """Lapos (kulcs, érték) párok, listák indexelt kulcsokkal"""
        records = []
        for key, value in asdict(self).items():
            if isinstance(value, list):
                for index, item in enumerate(value):
                    if isinstance(item, dict):
                        for name, number in item.items():
                            records.append((f"{key}[{index}].{name}", number))
                    else:
                        records.append((f"{key}[{index}]", item))
            elif isinstance(value, dict):
                for name, number in value.items():
                    records.append((f"{key}.{name}", number))
            else:
                records.append((key, value))
        return records

    def to_text(self) -> str:
        """Soronként egy metrika: `kulcs = érték`"""
        lines = []
        for key, value in self.to_records():
            if isinstance(value, float):
                lines.append(f"{key} = {value:.10g}")
            else:
                lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def to_csv_row(self) -> Dict[str, Any]:
        row = {name: getattr(self, name) for name in self.CSV_FIELDS if name != "lambda_l"}
        row["lambda_l"] = self.lam * self.l
        return row


def _unit(index: int, size: int) -> np.ndarray:
    e = np.zeros(size)
    e[index - 1] = 1.0
    return e


def run_stage(
    v: Field,
    w: Field,
    A: Field,
    params: StageParams,
    k: Optional[int] = None
) -> Tuple[Field, Field, StageReport]:
    """
    Egy stage végrehajtása

    Args:
        v: ℝᵏ-értékű mező (legalább 2l margóval)
        w: ℝ²-értékű mező
        A: szimmetrikus 2×2 cél mező
        params: StageParams
        k: kodimenzió (alapértelmezés: v komponenseinek száma)

    Returns:
        (ṽ, w̃, StageReport), a kimeneti rács margója l + 2h-val kisebb

    Raises:
        PreconditionError, MarginError, NyquistError: érvénytelen paraméterek
        GuardError: ha aₛ² ≥ C̃ₛ/2 az újrapróbálások után sem teljesül
        BookkeepingError: ha a teleszkópikus deficit azonosság sérül
    """
    check_same_grid(v, w, A)
    if len(v.value_shape) != 1:
        raise ValueError(f"v vektor mező kell, kapott alak: {v.value_shape}")
    if k is None:
        k = v.value_shape[0]
    if v.value_shape != (k,):
        raise ValueError(f"v alakja {v.value_shape}, de k = {k}")

    grid = v.grid
    params.validate(grid.margin, grid.h, k)
    table = exponents(k)
    gamma_int = internal_gamma(params.gamma, k)
    r0 = params.r0 if params.r0 is not None else _default_r0(round(gamma_int, 12))
    ladder = frequency_ladder(k, params.lam, params.l)
    lam_l = params.lam * params.l
    l, M = params.l, params.M

    # Tétel szintű deficit a bemeneti rácson
    D_in = deficit(v, w, A)
    d_norm = sup_norm(D_in)
    grad_v = sup_norm(fd_gradient(v))
    measured = max(hessian_sup(v), hessian_sup(w), 1.0)
    if M < measured * (1 - 1e-9):
        raise PreconditionError(f"M = {M:.4g} < max(‖v‖₂, ‖w‖₂, 1) = {measured:.4g}")

    # Simítás l skálán; a stage belsejében 𝒟 = metrika − A₀
    v_cur = mollify(v, l)
    w_cur = mollify(w, l)
    A0 = mollify(A, l)
    grid1 = v_cur.grid
    D_s = metric(v_cur, w_cur) - A0

    report = StageReport(
        k=k,
        l=l,
        lam=params.lam,
        M=M,
        gamma=params.gamma,
        gamma_internal=gamma_int,
        beta=params.beta,
        r0=r0,
        frequencies=list(ladder),
        input_deficit=d_norm
    )
    logger.info(
        f"Stage indul: k={k}, N={table.N}, λl={lam_l:.4g}, ‖𝒟‖₀={d_norm:.4g}, r₀={r0:.4g}"
    )

    x1, x2 = grid1.coordinates()
    cx, cy = grid1.center
    identity_map = np.stack([x1 - cx, x2 - cy], axis=-1)
    psi_sum = np.zeros((grid1.nx, grid1.ny, 2))
    sq = math.sqrt(d_norm) + l * M
    budget = d_norm + (l * M) ** 2
    product = 1.0

    for s in range(table.S):
        product *= ladder[2 * s]
        report.deficit_norms.append(sup_norm(D_s))
        report.diagnostics.append({
            "s": s,
            "deficit_ratio": sup_norm(D_s) / (lam_l ** (-s) * (product / ladder[2 * s]) ** gamma_int * budget),
        })

        holder = holder_seminorm(D_s, gamma_int)
        c_tilde = (2.0 / r0) * (
            sup_norm(D_s) + holder + product ** gamma_int / lam_l ** s * budget
        )
        decomp = decompose(D_s)
        a_bar = decomp.a_bar.data
        retries = 0
        while float(np.max(a_bar)) > 0.5 * c_tilde:
            if retries >= params.guard_retries:
                raise GuardError(
                    f"s={s}: aₛ² ≥ C̃ₛ/2 nem teljesül {retries} duplázás után "
                    f"(max ā = {np.max(a_bar):.4g}, C̃ = {c_tilde:.4g})"
                )
            retries += 1
            c_tilde *= 2.0
            logger.warning(f"s={s}: őr sérül, C̃ₛ duplázva → {c_tilde:.4g}")

        a_s = Field(grid1, np.sqrt(c_tilde - a_bar))
        psi_s = c_tilde * identity_map - decomp.psi_bar.data
        psi_sum += psi_s
        report.c_tilde.append(c_tilde)
        report.guard_retries.append(retries)
        report.decomposition_residuals.append(decomp.residual_norm)
        report.diagnostics[-1]["c_tilde_ratio"] = c_tilde / (lam_l ** (-s) * product ** gamma_int * budget)

        metric_before = metric(v_cur, w_cur)
        for i in (2 * s + 1, 2 * s + 2):
            _, axis, _, delta = index_split(i, k)
            spec = StepSpec(a=a_s, eta=_unit(delta, 2), E=_unit(axis, k), lam=ladder[i])
            v_next, w_next = apply_step(v_cur, w_cur, spec)
            dv = v_next - v_cur
            dw = w_next - w_cur
            report.step_v_c1.append(c1_norm(dv))
            report.step_w_c1.append(c1_norm(dw))
            scale = lam_l ** (-0.5 * s) * sq
            report.diagnostics.append({
                "i": i,
                "v_ratio": sup_norm(fd_gradient(dv)) / (scale * product ** (0.5 * gamma_int)),
                "w_ratio": sup_norm(fd_gradient(dw)) / (scale * product ** gamma_int * (sq + grad_v)),
            })
            logger.debug(f"Lépés i={i}: λ={ladder[i]:.4g}, ‖Δv‖₁={report.step_v_c1[-1]:.4g}")
            v_cur, w_cur = v_next, w_next

        D_s = metric(v_cur, w_cur) - metric_before - identity_field(grid1) * (a_s * a_s)

    report.deficit_norms.append(sup_norm(D_s))

    v_tilde = v_cur
    w_tilde = w_cur - Field(grid1, psi_sum)

    # Teleszkópikus azonosság: 𝒟̃ = (A − A₀) − 𝒟_S
    A1 = A.restrict(grid1)
    D_tilde = deficit(v_tilde, w_tilde, A1)
    expected = (A1 - A0) - D_s
    r = OUTPUT_RINGS
    mismatch = float(np.max(np.abs((D_tilde - expected).data[r:-r, r:-r])))
    tolerance = 1e-4 * sup_norm(A) + 1e-8 * (1.0 + sum(report.c_tilde))
    report.bookkeeping_error = mismatch
    if mismatch > tolerance:
        raise BookkeepingError(f"𝒟̃ ≠ (A−A₀) − 𝒟_S: eltérés {mismatch:.3e} > {tolerance:.3e}")

    out_grid = grid1.crop_rings(r)
    v_out = v_tilde.restrict(out_grid)
    w_out = w_tilde.restrict(out_grid)

    report.final_deficit = sup_norm(D_tilde.restrict(out_grid))
    report.floor = sup_norm((A1 - A0).restrict(out_grid))
    report.floor_removed_deficit = sup_norm(D_s.restrict(out_grid))
    report.v_increment_c1 = c1_norm(v_out - v.restrict(out_grid))
    report.w_increment_c1 = c1_norm(w_out - w.restrict(out_grid))
    report.hess_v = hessian_sup(v_out)
    report.hess_w = hessian_sup(w_out)

    beta = min(params.beta, 1.0)
    a_holder = sup_norm(A) + holder_seminorm(A, beta)
    lam, g = params.lam, params.gamma
    report.shapes = {
        "v_c1": lam ** (0.5 * g) * sq,
        "w_c1": lam ** g * sq * (1.0 + sq + grad_v),
        "hess_v": lam_l ** table.J / l * lam ** (0.5 * g) * sq,
        "hess_w": lam_l ** table.J / l * lam ** g * sq * (1.0 + sq + grad_v),
        "deficit": lam ** g / lam_l ** table.S * budget,
        "floor": l ** beta * a_holder,
    }

    logger.info(
        f"Stage kész: ‖𝒟̃‖₀={report.final_deficit:.4g} (küszöb {report.floor:.4g}), "
        f"‖𝒟_S‖₀={report.floor_removed_deficit:.4g}, ‖∇²ṽ‖₀={report.hess_v:.4g}"
    )
    log_metrics("Becslés alakok", report.shapes)
    return v_out, w_out, report
