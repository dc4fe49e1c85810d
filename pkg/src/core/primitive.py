"""
Primitív metrikák és az első korrekciós lépés
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import PreconditionError, TargetUnreachableError
from src.core.fields import (
    Field,
    check_same_grid,
    deficit,
    fd_gradient,
    min_eigenvalue,
    sup_norm,
)
from src.core.step import NYQUIST_CAP, StepSpec, apply_step
from src.utils.logger import get_logger

logger = get_logger()

_SQRT_HALF = 1.0 / np.sqrt(2.0)

# (név, η) sorrendben: e₁, e₂, η₃ = (e₁+e₂)/√2, η₃′ = (e₁−e₂)/√2
DIRECTIONS = (
    ("e1", np.array([1.0, 0.0])),
    ("e2", np.array([0.0, 1.0])),
    ("eta3", np.array([_SQRT_HALF, _SQRT_HALF])),
    ("eta3_reflected", np.array([_SQRT_HALF, -_SQRT_HALF])),
)

_NEGATIVE_TOL = 1e-13


@dataclass
class PrimitiveDecomp:
    """
    D = c1sq·e₁⊗e₁ + c2sq·e₂⊗e₂ + c3sq·η₃⊗η₃ + c3sq_reflected·η₃′⊗η₃′
    """
    c1sq: Field
    c2sq: Field
    c3sq: Field
    c3sq_reflected: Field

    def coefficients(self) -> List[Field]:
        return [self.c1sq, self.c2sq, self.c3sq, self.c3sq_reflected]

    def reconstruct(self) -> Field:
        """Az együtthatókból összerakott szimmetrikus mező"""
        grid = self.c1sq.grid
        out = np.zeros((grid.nx, grid.ny, 2, 2))
        for coeff, (_, eta) in zip(self.coefficients(), DIRECTIONS):
            out += coeff.data[..., np.newaxis, np.newaxis] * np.outer(eta, eta)
        return Field(grid, out)


def primitive_coeffs(D: Field, smoothing: float = 0.0) -> PrimitiveDecomp:
    """
    Felbontás primitív metrikákra

    A D₁₂ előjelét a p − m = D₁₂ felosztás kezeli:
        p = ½(D₁₂ + √(D₁₂² + δ²)),  m = ½(−D₁₂ + √(D₁₂² + δ²))
    δ = 0 esetén p = max(D₁₂, 0), m = max(−D₁₂, 0).

    Args:
        D: szimmetrikus 2×2 mező
        smoothing: δ ≥ 0, vegyes előjelű D₁₂ simításához

    Returns:
        PrimitiveDecomp

    Raises:
        PreconditionError: ha valamelyik együttható negatív
    """
    if D.value_shape != (2, 2):
        raise ValueError(f"primitive_coeffs 2×2 mezőt vár, kapott: {D.value_shape}")
    if smoothing < 0:
        raise ValueError(f"A simítás nem lehet negatív: {smoothing}")

    grid = D.grid
    d11 = D.data[..., 0, 0]
    d22 = D.data[..., 1, 1]
    d12 = 0.5 * (D.data[..., 0, 1] + D.data[..., 1, 0])

    if smoothing > 0:
        root = np.sqrt(d12 ** 2 + smoothing ** 2)
        p = 0.5 * (d12 + root)
        m = 0.5 * (-d12 + root)
    else:
        p = np.maximum(d12, 0.0)
        m = np.maximum(-d12, 0.0)

    c1 = d11 - (p + m)
    c2 = d22 - (p + m)
    scale = 1.0 + float(np.max(np.abs(D.data)))
    worst = float(min(np.min(c1), np.min(c2)))
    if worst < -_NEGATIVE_TOL * scale:
        raise PreconditionError(
            f"Negatív primitív együttható (min = {worst:.3e}); a deficit túl messze van a konformtól"
        )

    return PrimitiveDecomp(
        c1sq=Field(grid, np.maximum(c1, 0.0)),
        c2sq=Field(grid, np.maximum(c2, 0.0)),
        c3sq=Field(grid, 2.0 * p),
        c3sq_reflected=Field(grid, 2.0 * m)
    )


@dataclass
class FirstStepReport:
    """Az első lépés mért mennyiségei"""
    initial_deficit: float
    remaining_deficit: float
    displacement: float = 0.0
    gradient_increment: float = 0.0
    gradient_constant: float = 0.0
    base_frequency: float = 0.0
    frequencies: List[float] = field(default_factory=list)
    directions: List[str] = field(default_factory=list)
    shrink: float = 0.0
    attempts: int = 0
    noop: bool = False


def _plan(decomp: PrimitiveDecomp, k: int) -> List[Tuple[str, np.ndarray, Field, int]]:
    """(név, η, a, tengely) a nem nulla együtthatójú irányokra, tengelyek ciklikusan"""
    plan = []
    for coeff, (name, eta) in zip(decomp.coefficients(), DIRECTIONS):
        if float(np.max(coeff.data)) <= 0.0:
            continue
        amplitude = Field(coeff.grid, np.sqrt(coeff.data))
        plan.append((name, eta, amplitude, len(plan) % k))
    return plan


def _ladder(plan, base: float, growth: float, epsilon: float, ceiling: float) -> List[float]:
    """
    Frekvenciák: egy már használt tengelyre visszatérő irány frekvenciája
    legalább `growth`-szor az előzőé, és elég nagy, hogy a kereszttag ε/4 alatt maradjon

    A kereszttag miatti emelést a `ceiling` frekvencia vágja, a `growth` szorzót nem.
    """
    frequencies = []
    for j, (_, _, amplitude, axis) in enumerate(plan):
        lam = base
        a_j = sup_norm(amplitude)
        for i in range(j):
            if plan[i][3] == axis:
                cross = min(frequencies[i] * 16.0 * sup_norm(plan[i][2]) * a_j / epsilon, ceiling)
                lam = max(lam, frequencies[i] * growth, cross)
        frequencies.append(lam)
    return frequencies


def first_step(
    v: Field,
    w: Field,
    A: Field,
    epsilon: float,
    rho: float = 0.1,
    frequency_growth: float = 8.0,
    base_frequency: Optional[float] = None,
    displacement: Optional[float] = None
) -> Tuple[Field, Field, FirstStepReport]:
    """
    Egy korrekciós menet a primitív irányok mentén

    Args:
        v: ℝᵏ-értékű mező
        w: ℝ²-értékű mező
        A: cél mező
        epsilon: a maradék deficit cél szup-normája
        rho: a deficit zsugorítása (a felhasznált arány min(ρ, ε/(2‖𝒟‖₀)))
        frequency_growth: frekvencia szorzó tengely újrahasználáskor
        base_frequency: kezdő frekvencia (alapértelmezés 2Σ‖aⱼ‖₀/δ)
        displacement: δ, a megengedett ‖ṽ−v‖₀ (alapértelmezés ε)

    Returns:
        (ṽ, w̃, FirstStepReport)

    Raises:
        PreconditionError: ha a deficit nem pozitív definit
        TargetUnreachableError: ha ε vagy δ a Nyquist korlátig nem érhető el
    """
    check_same_grid(v, w, A)
    if not epsilon > 0:
        raise ValueError(f"ε pozitív kell legyen: {epsilon}")
    if not 0 <= rho < 1:
        raise ValueError(f"ρ [0,1)-ben kell legyen: {rho}")
    tolerance = epsilon if displacement is None else displacement
    if not tolerance > 0:
        raise ValueError(f"δ pozitív kell legyen: {tolerance}")

    D = deficit(v, w, A)
    lowest = float(np.min(min_eigenvalue(D).data))
    if lowest <= 0:
        raise PreconditionError(f"A deficit nem pozitív definit: min sajátérték = {lowest:.3e}")

    initial = sup_norm(D)
    if initial <= epsilon:
        logger.info(f"Első lépés kihagyva: ‖𝒟‖₀ = {initial:.4g} ≤ ε = {epsilon:.4g}")
        return v, w, FirstStepReport(initial_deficit=initial, remaining_deficit=initial, noop=True)

    shrink = min(rho, 0.5 * epsilon / initial)
    k = v.value_shape[0]
    d12 = D.data[..., 0, 1]
    mixed = float(np.min(d12)) < 0 < float(np.max(d12))
    smoothing = 0.05 * float(np.max(np.abs(d12))) if mixed else 0.0
    decomp = primitive_coeffs(D * (1.0 - shrink), smoothing=smoothing)
    plan = _plan(decomp, k)

    lam = base_frequency or 2.0 * sum(sup_norm(a) for _, _, a, _ in plan) / tolerance
    h = v.grid.h
    ceiling = NYQUIST_CAP / h
    best = None
    attempts = 0

    while True:
        frequencies = _ladder(plan, lam, frequency_growth, epsilon, ceiling)
        if max(frequencies) > ceiling * (1 + 1e-12):
            break
        attempts += 1

        v_new, w_new = v, w
        for (name, eta, amplitude, axis), lam_j in zip(plan, frequencies):
            E = np.zeros(k)
            E[axis] = 1.0
            v_new, w_new = apply_step(v_new, w_new, StepSpec(a=amplitude, eta=eta, E=E, lam=lam_j))

        remaining = sup_norm(deficit(v_new, w_new, A))
        moved = sup_norm(v_new - v)
        logger.debug(
            f"Első lépés próba {attempts}: λ={lam:.4g}, maradék={remaining:.4g}, ‖ṽ−v‖₀={moved:.4g}"
        )
        # a δ-n belüli próbák megelőzik a többit
        rank = (moved > tolerance, remaining)
        if best is None or rank < best[0]:
            best = (rank, v_new, w_new, remaining, lam, frequencies, moved)
        if remaining <= epsilon and moved <= tolerance:
            break
        lam *= 2.0

    if best is None:
        raise TargetUnreachableError(
            f"Már a kezdő frekvencia is túl magas: λ·h = {lam * h:.4f} > {NYQUIST_CAP}"
        )

    _, v_new, w_new, remaining, lam, frequencies, moved = best
    if remaining > epsilon or moved > tolerance:
        raise TargetUnreachableError(
            f"ε = {epsilon:.3g}, δ = {tolerance:.3g} nem érhető el a rácson "
            f"(legjobb maradék: {remaining:.3g}, ‖ṽ−v‖₀ = {moved:.3g})",
            best=(v_new, w_new),
            achieved=remaining
        )

    gradient_increment = sup_norm(fd_gradient(v_new - v))
    report = FirstStepReport(
        initial_deficit=initial,
        remaining_deficit=remaining,
        displacement=moved,
        gradient_increment=gradient_increment,
        gradient_constant=gradient_increment / np.sqrt(initial),
        base_frequency=lam,
        frequencies=list(frequencies),
        directions=[name for name, _, _, _ in plan],
        shrink=shrink,
        attempts=attempts
    )
    logger.info(
        f"Első lépés: ‖𝒟‖₀ {initial:.4g} → {remaining:.4g}, "
        f"irányok={report.directions}, λ={lam:.4g}"
    )
    return v_new, w_new, report
