"""
Nash-Kuiper iteráció: stage-ek sorozata csökkenő lᵢ skálákkal és növekvő λᵢ
frekvenciákkal, valamint a teljes flexibilitási folyamat

Két ütemezés létezik:
- build_schedule: a bizonyítás paraméterei (a lᵢ duplán exponenciálisan esnek,
  csak az egyenlőtlenségek ellenőrzésére használható)
- practical_schedule: geometriai skálák, ténylegesen futtatható asztali méretben
"""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import (
    KonvexError,
    MarginError,
    NashKuiperError,
    NyquistError,
    PreconditionError,
    ScheduleError,
    TargetUnreachableError,
)
from src.core.fields import (
    Field,
    c1_norm,
    check_same_grid,
    deficit,
    fd_gradient,
    hessian_sup,
    holder_seminorm,
    min_eigenvalue,
    sup_norm,
)
from src.core.mollify import mollify
from src.core.primitive import FirstStepReport, first_step
from src.core.stage import OUTPUT_RINGS, StageParams, StageReport, exponents, frequency_ladder, run_stage
from src.core.step import NYQUIST_CAP
from src.utils.logger import get_logger, log_banner

logger = get_logger()

L0_HALVINGS = 8
GAMMA_HALVINGS = 60

# e^{-690} ≈ 1e-300: ez alatt az ütemezést csonkoljuk
_LOG_FLOOR = math.log(1e-300)
_LOG_CEIL = 700.0
_LOG_TOL = 1e-9


class ScheduleCase(Enum):
    """A: β/2 > S/(S+2J), B: β/2 ≤ S/(S+2J)"""
    A = "A"
    B = "B"


class TerminationReason(Enum):
    ITERATIONS = "iterations"
    TARGET = "target"
    NYQUIST = "nyquist"
    MARGIN = "margin"
    RESOLUTION = "resolution"
    STALLED = "stalled"


@dataclass
class NkSchedule:
    """
    A bizonyítás paraméter ütemezése

    A log_* listák a pontos értékek; az l, lam, M listák ezek exponenciálisai
    (csak a lebegőpontosan ábrázolható prefixre).
    """
    case: ScheduleCase
    S: int
    J: int
    beta: float
    alpha: float
    a: float
    b: float
    gamma: float
    q: float
    B_const: float
    C: float
    deficit0: float
    grad_v0: float
    a_norm: float
    log_l: List[float] = field(default_factory=list)
    log_lam: List[float] = field(default_factory=list)
    log_M: List[float] = field(default_factory=list)
    l: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    M: List[float] = field(default_factory=list)
    l0_halvings: int = 0
    truncated: bool = False

    @property
    def l0(self) -> float:
        return self.l[0]

    @property
    def iterations(self) -> int:
        return len(self.l)

    @property
    def log_B(self) -> float:
        return math.log(self.B_const)

    @property
    def log_X(self) -> float:
        """log(B^{1/(q−1)}·l₀)"""
        return self.log_B / (self.q - 1.0) + self.log_l[0]

    def summary(self) -> Dict[str, Any]:
        """Az ütemezés visszhangja a JSON összefoglalóhoz"""
        return {
            "mode": "exact",
            "case": self.case.value,
            "S": self.S,
            "J": self.J,
            "beta": self.beta,
            "alpha": self.alpha,
            "a": self.a,
            "b": self.b,
            "gamma": self.gamma,
            "q": self.q,
            "B": self.B_const,
            "C": self.C,
            "l0_halvings": self.l0_halvings,
            "truncated": self.truncated,
            "log_l": list(self.log_l),
            "log_lambda": list(self.log_lam),
            "log_M": list(self.log_M),
        }


@dataclass
class PracticalSchedule:
    """lᵢ = l₀·rⁱ, λᵢ = (λl)/l₀ · ρⁱ (alapértelmezés ρ = 1/r), Mᵢ mért"""
    l0: float
    ratio: float = 0.5
    lambda_l: float = 8.0
    iterations: int = 4
    lambda_ratio: Optional[float] = None
    l: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        return {
            "mode": "practical",
            "l0": self.l0,
            "ratio": self.ratio,
            "lambda_l": self.lambda_l,
            "lambda_ratio": self.lambda_ratio,
            "iterations": self.iterations,
            "l": list(self.l),
            "lambda": list(self.lam),
        }


def practical_schedule(
    l0: float,
    ratio: float = 0.5,
    lambda_l: float = 8.0,
    iterations: int = 4,
    lambda_ratio: Optional[float] = None
) -> PracticalSchedule:
    """
    Futtatható geometriai ütemezés

    Args:
        l0: kezdő simítási skála
        ratio: lᵢ₊₁/lᵢ, (0, 1)
        lambda_l: λ₀·l₀ > 1
        iterations: stage-ek száma
        lambda_ratio: λᵢ₊₁/λᵢ (alapértelmezés 1/ratio)
    """
    if not l0 > 0:
        raise ScheduleError(f"l₀ pozitív kell legyen: {l0}")
    if not 0 < ratio < 1:
        raise ScheduleError(f"A skála arány (0,1)-ben kell legyen: {ratio}")
    if not lambda_l > 1:
        raise ScheduleError(f"λl > 1 szükséges: {lambda_l}")
    if iterations < 1:
        raise ScheduleError(f"Legalább egy iteráció kell: {iterations}")
    growth = lambda_ratio if lambda_ratio is not None else 1.0 / ratio
    if growth * ratio < 1.0 - 1e-12:
        raise ScheduleError(f"λᵢlᵢ nem csökkenhet: ρ·r = {growth * ratio:.4g} < 1")

    scales = [l0 * ratio ** i for i in range(iterations)]
    frequencies = [lambda_l / l0 * growth ** i for i in range(iterations)]
    return PracticalSchedule(
        l0=l0,
        ratio=ratio,
        lambda_l=lambda_l,
        iterations=iterations,
        lambda_ratio=lambda_ratio,
        l=scales,
        lam=frequencies
    )


def _frac(x: float) -> Fraction:
    return Fraction(x)


def _sign_conditions(case: ScheduleCase, S: int, J: int, a: float, gamma: float, beta: float) -> bool:
    """A kitevő előjel feltételek racionálisan kiértékelve"""
    S_, J_, a_, g_, b_ = Fraction(S), Fraction(J), _frac(a), _frac(gamma), _frac(beta)
    q = 1 + (a_ - 1) * (S_ / 2 + J_) + Fraction(5, 2) * a_ * g_
    ratio = a_ * g_ / (a_ - 1)
    series = (S_ - ratio) / (S_ + 2 * J_ + 5 * ratio) - a_ * g_
    if series <= 0:
        return False
    if case is ScheduleCase.A:
        dominance = 2 * q - b_ < 2 * (J_ * (a_ - 1) + 3 * a_ * g_) / (q - 1)
        growth = (S_ / 2 + J_ + (S_ + 2 * J_ + Fraction(1, 2)) * g_) * (b_ - 2 * (q - 1)) - S_ + g_
        return dominance and growth > 0
    return 2 * q - b_ > 2 * q * (J_ * (a_ - 1) + 3 * a_ * g_) / (q - 1)


def _logsumexp(values: Sequence[float]) -> float:
    top = max(values)
    return top + math.log(sum(math.exp(v - top) for v in values))


def _generate(sched: NkSchedule, count: int):
    """lᵢ, λᵢ, Mᵢ logaritmusai a zárt képletekből"""
    S, J, q, a, g = sched.S, sched.J, sched.q, sched.a, sched.gamma
    log_b, log_B = math.log(sched.b), sched.log_B
    log_l0 = sched.log_l[0]
    log_X = log_B / (q - 1.0) + log_l0
    log_M0 = 0.5 * math.log(sched.deficit0) - log_l0
    log_1g = math.log1p(sched.grad_v0)

    sched.log_l = [((q ** i - 1.0) / (q - 1.0)) * log_B + q ** i * log_l0 for i in range(count)]
    sched.log_lam = [log_b - a * value for value in sched.log_l]
    sched.log_M = [log_M0]

    if sched.case is ScheduleCase.A:
        E = 2 * J * (a - 1) + 6 * a * g
        log_K = (
            math.log(2 * sched.C) + 2 * log_1g - (S - g) * log_b
            - ((S * (a - 1) - a * g) / (q - 1)) * log_B
        )
        for i in range(count - 1):
            log_M2 = (
                2 * log_M0 + (i + 1) * log_K
                + (E / (q - 1)) * log_X - q ** (i + 1) * (E / (q - 1)) * log_X
            )
            sched.log_M.append(0.5 * log_M2)
    else:
        beta = sched.beta
        for i in range(count - 1):
            log_M2 = (
                2 * (i + 1) * (log_M0 + log_1g) + (2 - beta) * log_l0
                + ((2 - beta) / (q - 1)) * log_B - q ** i * (2 * q - beta) * log_X
            )
            sched.log_M.append(0.5 * log_M2)

    representable = 0
    for log_l, log_lam, log_M in zip(sched.log_l, sched.log_lam, sched.log_M):
        if log_l < _LOG_FLOOR or log_lam > _LOG_CEIL or log_M > _LOG_CEIL:
            break
        representable += 1
    sched.truncated = representable < count
    sched.l = [math.exp(v) for v in sched.log_l[:representable]]
    sched.lam = [math.exp(v) for v in sched.log_lam[:representable]]
    sched.M = [math.exp(v) for v in sched.log_M[:representable]]


def check_invariants(sched: NkSchedule) -> Optional[str]:
    """
    Az ütemezés önkonzisztenciája a generált prefixen

    Returns:
        None, ha minden teljesül, különben a hiba leírása
    """
    n = len(sched.log_l)
    log_b = math.log(sched.b)
    for i in range(n):
        if abs(sched.log_lam[i] - (log_b - sched.a * sched.log_l[i])) > _LOG_TOL * (1 + abs(sched.log_lam[i])):
            return f"λ_{i} ≠ b/l_{i}^a"
        if not sched.log_lam[i] + sched.log_l[i] > 0:
            return f"λ_{i}·l_{i} ≤ 1"
        if not sched.log_M[i] >= -_LOG_TOL:
            return f"M_{i} < 1"
    for i in range(n - 1):
        if sched.log_l[i + 1] > sched.log_l[i] - math.log(2.0) + _LOG_TOL:
            return f"l_{i + 1} > l_{i}/2"
        if not sched.log_M[i + 1] > sched.log_M[i]:
            return f"M_{i + 1} ≤ M_{i}"
    normalisation = 2 * (sched.log_l[0] + sched.log_M[0]) - math.log(sched.deficit0)
    if abs(normalisation) > 1e-9:
        return "‖𝒟₀‖₀ ≠ (l₀M₀)²"
    if n >= 3:
        tail = [sched.log_l[i] + sched.log_M[i] for i in range(n - 2, n)]
        if not tail[1] < tail[0]:
            return "lᵢMᵢ nem csökken a prefix végén"
    return None


def check_requirements(sched: NkSchedule, indices: Sequence[int] = (0, 1, 2)) -> Dict[str, bool]:
    """
    A három követelmény egyenlőtlenség közvetlen behelyettesítéssel

    - cauchy_sum: b^γ Σ_{j≤i} l_j^{1−aγ} M_j ≤ C·b^{(S+2J)γ}/l₀^{2aγ}·(1+‖∇v₀‖₀)·‖𝒟₀‖₀^{1/2}
    - growth_ratio: (M_{i+1}/M_i)² ≥ 2C(1+‖∇v₀‖₀)²/(b^{S−γ}·B^{(S(a−1)−aγ)/(q−1)}·X^{qⁱ(2J(a−1)+6aγ)})
    - holder_floor: M²_{i+1} ≥ 2C‖A‖_{0,β}·B^{(2−β)/(q−1)}/X^{qⁱ(2q−β)}

    ahol X = B^{1/(q−1)}·l₀. Minden összehasonlítás logaritmusokkal történik.

    Returns:
        {"cauchy_sum": bool, "growth_ratio": bool, "holder_floor": bool}
    """
    S, J, a, g, q, C, beta = sched.S, sched.J, sched.a, sched.gamma, sched.q, sched.C, sched.beta
    need = max(indices) + 2
    if len(sched.log_M) < need:
        raise ScheduleError(f"A követelményekhez legalább {need} tag kell, van {len(sched.log_M)}")

    log_b, log_B, log_X = math.log(sched.b), sched.log_B, sched.log_X
    log_1g = math.log1p(sched.grad_v0)
    E = 2 * J * (a - 1) + 6 * a * g

    rhs_sum = (
        math.log(C) + (S + 2 * J) * g * log_b - 2 * a * g * sched.log_l[0]
        + log_1g + 0.5 * math.log(sched.deficit0)
    )
    results = {"cauchy_sum": True, "growth_ratio": True, "holder_floor": True}
    for i in indices:
        terms = [(1 - a * g) * sched.log_l[j] + sched.log_M[j] for j in range(i + 1)]
        if g * log_b + _logsumexp(terms) > rhs_sum + _LOG_TOL:
            results["cauchy_sum"] = False

        ratio = 2 * (sched.log_M[i + 1] - sched.log_M[i])
        bound = (
            math.log(2 * C) + 2 * log_1g - (S - g) * log_b
            - ((S * (a - 1) - a * g) / (q - 1)) * log_B - q ** i * E * log_X
        )
        if ratio < bound - _LOG_TOL * (1 + abs(bound)):
            results["growth_ratio"] = False

        if sched.a_norm > 0:
            floor = (
                math.log(2 * C * sched.a_norm) + ((2 - beta) / (q - 1)) * log_B
                - q ** i * (2 * q - beta) * log_X
            )
            if 2 * sched.log_M[i + 1] < floor - _LOG_TOL * (1 + abs(floor)):
                results["holder_floor"] = False
    return results


def build_schedule(
    S: int,
    J: int,
    beta: float,
    deficit0: float,
    grad_v0: float,
    a_norm: float,
    alpha: float,
    iterations: int = 4,
    C: float = 2.0
) -> NkSchedule:
    """
    A bizonyítás paraméter ütemezése

    Args:
        S, J: a kitevő táblázatból
        beta: A Hölder kitevője
        deficit0: ‖𝒟₀‖₀, (0, 1]-ben
        grad_v0: ‖∇v₀‖₀
        a_norm: ‖A‖_{0,β}
        alpha: cél Hölder kitevő, 0 < α < min(β/2, S/(S+2J))
        iterations: generált tagok száma (a követelményekhez legalább 4)
        C: a becslések konstansa

    Returns:
        NkSchedule

    Raises:
        ScheduleError: érvénytelen bemenet vagy nem teljesíthető ütemezés
    """
    threshold = Fraction(S, S + 2 * J)
    half_beta = Fraction(str(beta)) / 2
    if not 0 < beta <= 1:
        raise ScheduleError(f"β (0,1]-ben kell legyen: {beta}")
    if not 0 < alpha < min(float(half_beta), float(threshold)):
        raise ScheduleError(
            f"α = {alpha} kívül esik a (0, min(β/2, S/(S+2J))) = (0, {min(float(half_beta), float(threshold)):.4g}) tartományon"
        )
    if not 0 < deficit0 <= 1:
        raise ScheduleError(f"0 < ‖𝒟₀‖₀ ≤ 1 szükséges: {deficit0}")
    if not C >= 1:
        raise ScheduleError(f"C ≥ 1 szükséges: {C}")

    case = ScheduleCase.A if half_beta > threshold else ScheduleCase.B
    slack = abs(float(half_beta - threshold))
    a = 1.0 + 0.05 * min(1.0, slack) if slack > 0 else 1.05

    gamma = beta / 32.0 if case is ScheduleCase.A else 0.01
    for _ in range(GAMMA_HALVINGS):
        if _sign_conditions(case, S, J, a, gamma, beta):
            break
        gamma *= 0.5
    else:
        raise ScheduleError(f"Nem található elég kicsi γ (eset {case.value})")

    q = 1.0 + (a - 1.0) * (0.5 * S + J) + 2.5 * a * gamma
    g1 = 1.0 + grad_v0
    count = max(iterations, 3) + 1

    if case is ScheduleCase.A:
        ratio = a * gamma / (a - 1.0)
        series_exp = (0.5 * S + J + (S + 2 * J + 0.5) * gamma) * (
            (S - ratio) / (S + 2 * J + 5 * ratio) - a * gamma
        )
        b = max((C * g1) ** (4.0 / S), (2.0 * C * g1) ** (1.0 / series_exp))
        if a_norm > 0:
            l0 = (deficit0 / (2.0 * C * a_norm * b ** (S + 4 * J))) ** (1.0 / (beta - 2.0 * (q - 1.0)))
            l0 = min(0.5, l0)
        else:
            l0 = 0.5
    else:
        l0 = min(
            0.5,
            (deficit0 / (2.0 * C * (1.0 + a_norm))) ** (1.0 / beta),
            math.sqrt(deficit0) / (2.0 * C)
        )
        b = None

    failure = None
    for halvings in range(L0_HALVINGS + 1):
        if case is ScheduleCase.B:
            b = (2.0 * g1 / l0) ** (6.0 / (S * beta))
        B_const = 1.0 / (C * b ** (0.5 * S + J + (S + 2 * J + 0.5) * gamma))
        sched = NkSchedule(
            case=case, S=S, J=J, beta=beta, alpha=alpha, a=a, b=b, gamma=gamma, q=q,
            B_const=B_const, C=C, deficit0=deficit0, grad_v0=grad_v0, a_norm=a_norm,
            log_l=[math.log(l0)], l0_halvings=halvings
        )
        _generate(sched, count)
        failure = check_invariants(sched)
        if failure is None:
            requirements = check_requirements(sched)
            if all(requirements.values()):
                if sched.truncated:
                    logger.warning(f"Ütemezés csonkolva {len(sched.l)} tagra (lᵢ < 1e-300)")
                logger.info(
                    f"Ütemezés: eset {case.value}, a={a:.5g}, γ={gamma:.4g}, q={q:.5g}, "
                    f"b={b:.4g}, l₀={l0:.4g}, felezések={halvings}"
                )
                return sched
            failure = ", ".join(name for name, ok in requirements.items() if not ok)
        logger.debug(f"Ütemezés elvetve ({failure}), l₀ felezése: {l0:.4g} → {l0 / 2:.4g}")
        l0 *= 0.5

    raise ScheduleError(f"Nem teljesíthető ütemezés {L0_HALVINGS} felezés után: {failure}")


@dataclass
class NkRunReport:
    """Iterációnkénti mérések és a leállás oka"""
    schedule: Dict[str, Any]
    initial_deficit: float
    deficits: List[float] = field(default_factory=list)
    v_increments: List[float] = field(default_factory=list)
    w_increments: List[float] = field(default_factory=list)
    holder_tracks: Dict[float, List[float]] = field(default_factory=dict)
    holder_initial: Dict[float, float] = field(default_factory=dict)
    scales: List[float] = field(default_factory=list)
    frequencies: List[float] = field(default_factory=list)
    budgets: List[float] = field(default_factory=list)
    stage_reports: List[StageReport] = field(default_factory=list)
    termination: TerminationReason = TerminationReason.ITERATIONS
    rejected_deficit: Optional[float] = None
    cauchy_sum: float = 0.0
    cauchy_shape: float = 0.0
    cauchy_ratio: float = 0.0

    @property
    def completed(self) -> int:
        return len(self.v_increments)

    def is_monotone(self) -> bool:
        track = [self.initial_deficit] + self.deficits
        return all(b < a for a, b in zip(track, track[1:]))

    def holder_growth(self) -> Dict[float, List[float]]:
        """
        [∇vᵢ]_α / [∇vᵢ₋₁]_α iterációnként (az i = 0 tag a bemenethez mér)

        Nulla nevezőnél a hányados végtelen.
        """
        growth = {}
        for alpha, track in self.holder_tracks.items():
            previous = [self.holder_initial.get(alpha, 0.0)] + track[:-1]
            growth[alpha] = [b / a if a > 0 else math.inf for a, b in zip(previous, track)]
        return growth

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        rows = []
        growth = self.holder_growth()
        for i in range(self.completed):
            row = {
                "iteration": i,
                "l": self.scales[i],
                "lambda": self.frequencies[i],
                "M": self.budgets[i],
                "deficit": self.deficits[i],
                "v_increment_c1": self.v_increments[i],
                "w_increment_c1": self.w_increments[i],
            }
            for alpha, track in sorted(self.holder_tracks.items()):
                row[f"holder_grad_v_{alpha:g}"] = track[i]
                row[f"holder_growth_{alpha:g}"] = growth[alpha][i]
            rows.append(row)
        return rows

    def to_json_summary(self) -> Dict[str, Any]:
        return {
            "schedule": self.schedule,
            "termination": self.termination.value,
            "completed_iterations": self.completed,
            "initial_deficit": self.initial_deficit,
            "final_deficit": self.deficits[-1] if self.deficits else self.initial_deficit,
            "rejected_deficit": self.rejected_deficit,
            "monotone": self.is_monotone(),
            "holder_initial": {f"{a:g}": value for a, value in sorted(self.holder_initial.items())},
            "holder_growth": {f"{a:g}": ratios for a, ratios in sorted(self.holder_growth().items())},
            "cauchy_sum": self.cauchy_sum,
            "cauchy_shape": self.cauchy_shape,
            "cauchy_ratio": self.cauchy_ratio,
        }


@dataclass
class HolderWitness:
    """
    A küszöb két oldalán követett kitevők növekedése az utolsó iterációban

    `observed` hamis, ha nincs befejezett iteráció vagy az előző félnorma nulla
    (ekkor `separated` None).
    """
    below: float
    above: float
    max_growth: float
    min_growth: float
    observed: bool = False
    growth_below: Optional[float] = None
    growth_above: Optional[float] = None
    separated: Optional[bool] = None

    def to_json_summary(self) -> Dict[str, Any]:
        return asdict(self)


def holder_witness(
    report: NkRunReport,
    below: float,
    above: float,
    max_growth: float = 2.0,
    min_growth: float = 4.0
) -> HolderWitness:
    """
    [∇v]_below legfeljebb max_growth-szor, [∇v]_above legalább min_growth-szor nő

    Args:
        report: a követett kitevők között `below` és `above` is szerepel
        below, above: a küszöb alatti és feletti kitevő
        max_growth, min_growth: a két korlát

    Raises:
        ValueError: ha valamelyik kitevőt nem követtük
    """
    missing = {below, above} - set(report.holder_tracks)
    if missing:
        raise ValueError(f"Nem követett Hölder kitevő: {sorted(missing)}")
    witness = HolderWitness(below=below, above=above, max_growth=max_growth, min_growth=min_growth)
    if report.completed == 0:
        return witness

    growth = report.holder_growth()
    witness.growth_below = growth[below][-1]
    witness.growth_above = growth[above][-1]
    # nulláról induló félnormánál a hányados nem értelmezhető
    if not (math.isfinite(witness.growth_below) and math.isfinite(witness.growth_above)):
        return witness
    witness.observed = True
    witness.separated = witness.growth_below <= max_growth and witness.growth_above >= min_growth
    return witness


def margin_plan(scales: Sequence[float], margin: float, h: float) -> int:
    """
    Hány stage fér el egymás után a margóban

    Az i. stage-hez 2lᵢ margó kell; utána a margó lᵢ-vel (egész cellára
    lefelé kerekítve) és a levágott kimeneti gyűrűkkel csökken.
    """
    pad = int(math.floor(margin / h + 1e-9))
    fits = 0
    for l_i in scales:
        if pad * h < 2.0 * l_i * (1 - 1e-9):
            break
        pad = int(math.floor((pad * h - l_i) / h + 1e-9)) - OUTPUT_RINGS
        fits += 1
    return fits


def run(
    v: Field,
    w: Field,
    A: Field,
    schedule: Union[NkSchedule, PracticalSchedule],
    k: Optional[int] = None,
    alpha: Sequence[float] = (0.2, 0.5),
    target: float = 0.0,
    gamma: float = 0.1,
    beta: float = 1.0,
    r0: Optional[float] = None,
    guard_retries: int = 8,
    monotone: bool = False
) -> Tuple[Field, Field, NkRunReport]:
    """
    A stage-ek iterálása

    Args:
        v, w, A: kezdő mezők és cél (0 < ‖𝒟‖₀ ≤ 1)
        schedule: NkSchedule vagy PracticalSchedule
        k: kodimenzió
        alpha: a követett Hölder kitevők ∇vᵢ-re
        target: leállás, ha ‖𝒟ᵢ‖₀ ≤ target
        gamma, beta, r0, guard_retries: a stage paraméterei
        monotone: a deficitet nem csökkentő stage eredményét eldobjuk és
            STALLED okkal megállunk

    Returns:
        (ṽ, w̃, NkRunReport)

    Raises:
        PreconditionError: ha ‖𝒟‖₀ = 0 vagy > 1
        MarginError: ha már az első stage sem fér el a margóban
        NashKuiperError: stage hiba az iteráció indexével
    """
    check_same_grid(v, w, A)
    if k is None:
        k = v.value_shape[0]
    initial = sup_norm(deficit(v, w, A))
    if initial <= 0:
        raise PreconditionError("A deficit nulla: nincs mit iterálni (az azonosság a megoldás)")
    if initial > 1:
        raise PreconditionError(f"‖𝒟‖₀ ≤ 1 szükséges, kapott: {initial:.4g}")

    h = v.grid.h
    exact = isinstance(schedule, NkSchedule)
    planned = len(schedule.l) if exact else schedule.iterations
    budget = 2 * schedule.l[0] + sum(schedule.l[:planned]) + OUTPUT_RINGS * h * planned
    fits = margin_plan(schedule.l[:planned], v.grid.margin, h)
    if fits == 0:
        raise MarginError(
            f"Az első stage sem fér el: 2l₀ = {2 * schedule.l[0]:.4g} > margó {v.grid.margin:.4g}"
        )
    if fits < planned:
        logger.warning(
            f"A margó ({v.grid.margin:.4g}) csak {fits}/{planned} stage-re elég "
            f"(keret {budget:.4g}); a futás ott MARGIN okkal áll meg"
        )
    logger.info(
        f"Nash-Kuiper indul: {planned} iteráció, ‖𝒟₀‖₀={initial:.4g}, "
        f"margó keret {budget:.4g} (elérhető {v.grid.margin:.4g})"
    )

    report = NkRunReport(
        schedule=schedule.summary(),
        initial_deficit=initial,
        holder_tracks={float(a): [] for a in alpha}
    )
    grad0 = fd_gradient(v)
    report.holder_initial = {a_exp: holder_seminorm(grad0, a_exp) for a_exp in report.holder_tracks}
    current = initial
    grad_v0 = sup_norm(grad0)
    v_i, w_i = v, w

    for i in range(planned):
        if current <= target:
            report.termination = TerminationReason.TARGET
            break
        l_i, lam_i = schedule.l[i], schedule.lam[i]
        M_i = schedule.M[i] if exact else max(1.0, hessian_sup(v_i), hessian_sup(w_i))

        if l_i < 2 * h:
            report.termination = TerminationReason.RESOLUTION
            break
        if i >= fits or v_i.grid.margin < 2 * l_i * (1 - 1e-9):
            report.termination = TerminationReason.MARGIN
            break
        if frequency_ladder(k, lam_i, l_i)[-1] * h > NYQUIST_CAP:
            report.termination = TerminationReason.NYQUIST
            break

        params = StageParams(l=l_i, lam=lam_i, M=M_i, gamma=gamma, beta=beta, r0=r0, guard_retries=guard_retries)
        logger.info(f"[{i + 1}/{planned}] stage: l={l_i:.4g}, λ={lam_i:.4g}, M={M_i:.4g}")
        try:
            v_next, w_next, stage_report = run_stage(v_i, w_i, A.restrict(v_i.grid), params, k)
        except (NyquistError, MarginError) as e:
            logger.warning(f"Iteráció {i}: {e}")
            report.termination = TerminationReason.NYQUIST if isinstance(e, NyquistError) else TerminationReason.MARGIN
            break
        except KonvexError as e:
            raise NashKuiperError(str(e), i) from e

        if monotone and not stage_report.final_deficit < current:
            report.rejected_deficit = stage_report.final_deficit
            report.termination = TerminationReason.STALLED
            logger.warning(
                f"Iteráció {i}: a stage nem csökkentette a deficitet "
                f"({current:.4g} → {stage_report.final_deficit:.4g}), eredménye eldobva"
            )
            break

        out = v_next.grid
        report.v_increments.append(c1_norm(v_next - v_i.restrict(out)))
        report.w_increments.append(c1_norm(w_next - w_i.restrict(out)))
        current = stage_report.final_deficit
        report.deficits.append(current)
        report.scales.append(l_i)
        report.frequencies.append(lam_i)
        report.budgets.append(M_i)
        report.stage_reports.append(stage_report)
        grad = fd_gradient(v_next)
        for a_exp, track in report.holder_tracks.items():
            track.append(holder_seminorm(grad, a_exp))
        v_i, w_i = v_next, w_next
    else:
        report.termination = (
            TerminationReason.TARGET if current <= target else TerminationReason.ITERATIONS
        )

    report.cauchy_sum = float(sum(report.v_increments))
    report.cauchy_shape = (1.0 + grad_v0) ** 2 * initial ** 0.25
    report.cauchy_ratio = report.cauchy_sum / report.cauchy_shape
    logger.info(
        f"Nash-Kuiper vége ({report.termination.value}): {report.completed} iteráció, "
        f"‖𝒟‖₀ {initial:.4g} → {current:.4g}, Σ‖Δv‖₁ = {report.cauchy_sum:.4g}"
    )
    return v_i, w_i, report


@dataclass
class FlexReport:
    """A teljes flexibilitási futás összefoglalója"""
    epsilon: float
    initial_deficit: float
    smoothing_error: Dict[str, float] = field(default_factory=dict)
    first_step_target: Optional[float] = None
    first_step: Optional[FirstStepReport] = None
    first_step_deficit: Optional[float] = None
    nk: Optional[NkRunReport] = None
    short_circuit: bool = False
    final_deficit: float = 0.0
    v_displacement: float = 0.0
    w_displacement: float = 0.0

    def deficit_track(self) -> List[float]:
        """‖𝒟‖₀ a bemeneten, az első lépés után és minden elfogadott iteráció után"""
        track = [self.initial_deficit]
        if self.first_step_deficit is not None:
            track.append(self.first_step_deficit)
        if self.nk is not None:
            track.extend(self.nk.deficits)
        return track

    def is_monotone(self) -> bool:
        track = self.deficit_track()
        return all(b < a for a, b in zip(track, track[1:]))

    def to_json_summary(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "initial_deficit": self.initial_deficit,
            "smoothing_error": self.smoothing_error,
            "first_step_target": self.first_step_target,
            "first_step": asdict(self.first_step) if self.first_step else None,
            "first_step_deficit": self.first_step_deficit,
            "nk": self.nk.to_json_summary() if self.nk else None,
            "short_circuit": self.short_circuit,
            "final_deficit": self.final_deficit,
            "deficit_track": self.deficit_track(),
            "monotone": self.is_monotone(),
            "v_displacement": self.v_displacement,
            "w_displacement": self.w_displacement,
        }


def full_flexibility(
    v: Field,
    w: Field,
    A: Field,
    epsilon: float,
    alpha: float = 0.2,
    track: Sequence[float] = (),
    k: Optional[int] = None,
    schedule: Optional[Union[NkSchedule, PracticalSchedule, Callable[[Field, Field, Field], Any]]] = None,
    beta: float = 1.0,
    gamma: float = 0.1,
    r0: Optional[float] = None,
    rho: float = 0.1,
    frequency_growth: float = 8.0,
    zero_tolerance: float = 1e-12,
    target: Optional[float] = None,
    nk_target: float = 0.0,
    monotone: bool = True
) -> Tuple[Field, Field, FlexReport]:
    """
    Simítás, első lépés, majd Nash-Kuiper iteráció

    Args:
        v, w, A: bemenet (a deficit pozitív definit)
        epsilon: közelségi cél, (0, 1); ‖ṽ−v‖₀ ≤ ε és ‖w̃−w‖₀ ≤ ε
        alpha: cél Hölder kitevő, α < min(β/2, S/(S+2J))
        track: további követett kitevők (a küszöb felett is)
        k: kodimenzió
        schedule: ütemezés, vagy (v, w, A) → ütemezés az első lépés utáni mezőkből
            (alapértelmezés: geometriai, a margóhoz igazítva)
        beta, gamma, r0: stage paraméterek
        rho, frequency_growth: az első lépés paraméterei
        zero_tolerance: ennél kisebb deficit esetén nincs iteráció
        target: a végső ‖𝒟̃‖₀ felső korlátja (alapértelmezés ε)
        nk_target: az iteráció leáll, ha ‖𝒟ᵢ‖₀ ≤ nk_target
        monotone: a deficitet nem csökkentő stage eredménye eldobva

    Returns:
        (ṽ, w̃, FlexReport)

    Raises:
        PreconditionError: ha a deficit nem pozitív definit
        TargetUnreachableError: ha a végső deficit a cél felett marad, vagy a
            mezők ε-nál messzebb kerülnek (a legjobb eredmény a kivételben)
    """
    check_same_grid(v, w, A)
    if not 0 < epsilon < 1:
        raise ValueError(f"ε (0,1)-ben kell legyen: {epsilon}")
    goal = epsilon if target is None else target
    if not goal > 0:
        raise ValueError(f"A cél deficit pozitív kell legyen: {goal}")
    if k is None:
        k = v.value_shape[0]
    table = exponents(k)
    limit = min(beta / 2, float(table.threshold))
    if not 0 < alpha < limit:
        raise ScheduleError(f"α = {alpha} kívül esik a (0, {limit:.4g}) tartományon")
    tracked = tuple(dict.fromkeys((float(alpha),) + tuple(float(a) for a in track)))

    D = deficit(v, w, A)
    report = FlexReport(epsilon=epsilon, initial_deficit=sup_norm(D))
    zero = report.initial_deficit <= zero_tolerance
    lowest = float(np.min(min_eigenvalue(D).data))
    if not zero and lowest <= 0:
        raise PreconditionError(f"A deficit nem pozitív definit: min sajátérték = {lowest:.3e}")

    log_banner(f"Teljes flexibilitás: ε={epsilon}, k={k}, ‖𝒟‖₀={report.initial_deficit:.4g}")

    # [1/3] simítás 2h skálán
    l_smooth = 2.0 * v.grid.h
    v1, w1, A1 = mollify(v, l_smooth), mollify(w, l_smooth), mollify(A, l_smooth)
    grid1 = v1.grid
    report.smoothing_error = {
        "v_c1": c1_norm(v1 - v.restrict(grid1)),
        "w_c1": c1_norm(w1 - w.restrict(grid1)),
        "A_c0": sup_norm(A1 - A.restrict(grid1)),
    }
    worst = max(report.smoothing_error.values())
    if worst > epsilon ** 5:
        logger.warning(f"[1/3] a simítás hibája {worst:.3e} > ε⁵ = {epsilon ** 5:.3e} (felbontás korlát)")
    else:
        logger.info(f"[1/3] simítás kész, hiba {worst:.3e}")

    # [2/3] első lépés: egyre lazább deficit célok, az elmozdulás korlátja végig ε
    v2, w2 = v1, w1
    best = None
    cascade = () if zero else (epsilon ** 5, epsilon ** 2, epsilon)
    for level in cascade:
        try:
            v2, w2, fs_report = first_step(
                v1, w1, A1, level,
                rho=rho,
                frequency_growth=frequency_growth,
                displacement=epsilon
            )
            report.first_step_target = level
            report.first_step = fs_report
            break
        except TargetUnreachableError as e:
            logger.warning(f"[2/3] első lépés: {e}")
            if e.best is not None and (best is None or e.achieved < best[2]):
                best = (e.best[0], e.best[1], e.achieved, level)
    if cascade and report.first_step is None:
        if best is None:
            raise TargetUnreachableError(f"Az első lépés egyik célt sem érte el (ε={epsilon})")
        v2, w2, achieved, level = best
        report.first_step_target = level
        logger.warning(f"[2/3] a legjobb elért maradék deficittel folytatjuk: {achieved:.4g}")

    D2 = sup_norm(deficit(v2, w2, A1))
    if cascade:
        report.first_step_deficit = D2
    logger.info(f"[2/3] deficit az első lépés után: {D2:.4g}")

    # [3/3] iteráció
    if D2 <= zero_tolerance:
        report.short_circuit = True
        v_out, w_out = v2, w2
        report.final_deficit = D2
        logger.info("[3/3] a deficit nulla, nincs iteráció")
    else:
        if schedule is None:
            l0 = 0.25 * grid1.margin
            schedule = practical_schedule(l0=l0, ratio=0.5, lambda_l=4.0, iterations=3)
        elif callable(schedule):
            schedule = schedule(v2, w2, A1)
        v_out, w_out, nk_report = run(
            v2, w2, A1, schedule,
            k=k,
            alpha=tracked,
            target=nk_target,
            gamma=gamma,
            beta=beta,
            r0=r0,
            monotone=monotone
        )
        report.nk = nk_report
        report.final_deficit = nk_report.deficits[-1] if nk_report.deficits else D2

    out = v_out.grid
    report.v_displacement = sup_norm(v_out - v.restrict(out))
    report.w_displacement = sup_norm(w_out - w.restrict(out))
    logger.info(
        f"Flexibilitás kész: ‖ṽ−v‖₀={report.v_displacement:.4g}, ‖w̃−w‖₀={report.w_displacement:.4g}, "
        f"‖𝒟̃‖₀={report.final_deficit:.4g}"
    )

    shortfalls = []
    if report.final_deficit > goal:
        shortfalls.append(f"‖𝒟̃‖₀ = {report.final_deficit:.4g} > {goal:.4g}")
    if max(report.v_displacement, report.w_displacement) > epsilon:
        shortfalls.append(
            f"elmozdulás ({report.v_displacement:.4g}, {report.w_displacement:.4g}) > ε = {epsilon:.4g}"
        )
    if shortfalls:
        raise TargetUnreachableError(
            "A flexibilitási futás nem érte el a célt: " + "; ".join(shortfalls),
            best=(v_out, w_out),
            achieved=report.final_deficit
        )
    return v_out, w_out, report
