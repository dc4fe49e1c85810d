"""
Konform felbontás: D + sym∇Ψ̄(D) = ā(D)·Id₂

Két Dirichlet Poisson feladat a téglalapon:
    Δψ₁ = D₁₁ − D₂₂,  Δψ₂ = 2D₁₂,  ψ = 0 a határon
    Ψ̄ = (−∂₁ψ₁ − ∂₂ψ₂, ∂₂ψ₁ − ∂₁ψ₂),  ā = D₁₁ + ∂₁Ψ̄¹
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.fft

from src.core.errors import GridError, SolverError
from src.core.fields import (
    Field,
    Grid2,
    fd_gradient,
    holder_seminorm,
    identity_field,
    sup_norm,
    sym_grad,
)
from src.utils.logger import get_logger

logger = get_logger()

FIVE_POINT = "five_point"
CENTRAL_SQUARED = "central_squared"
SPECTRAL = "spectral"
STENCILS = (FIVE_POINT, CENTRAL_SQUARED, SPECTRAL)

# Ennyi külső gyűrűn nem teljesül pontosan az (i) azonosság
BOUNDARY_RINGS = 2

IDENTITY_TOL = 1e-6


@dataclass
class DecompResult:
    """Ψ̄(D), ā(D) és az azonosság reziduuma a belső csomópontokon"""
    psi_bar: Field
    a_bar: Field
    residual_norm: float
    psi1: Field
    psi2: Field


def _symbol(n_interior: int, h: float, stencil: str) -> np.ndarray:
    """A DST-I bázisban diagonális operátor sajátértékei egy tengely mentén"""
    theta = np.pi * np.arange(1, n_interior + 1) / (n_interior + 1)
    if stencil == FIVE_POINT:
        return -4.0 * np.sin(0.5 * theta) ** 2 / h ** 2
    if stencil == CENTRAL_SQUARED:
        return -np.sin(theta) ** 2 / h ** 2
    if stencil == SPECTRAL:
        return -(theta / h) ** 2
    raise ValueError(f"Ismeretlen stencil: {stencil} (engedélyezett: {STENCILS})")


def _apply_operator(psi: np.ndarray, h: float, stencil: str) -> np.ndarray:
    """A diszkrét operátor a belső csomópontokon (páratlan tükrözéssel a határon túl)"""
    if stencil == FIVE_POINT:
        return (
            psi[2:, 1:-1] + psi[:-2, 1:-1] + psi[1:-1, 2:] + psi[1:-1, :-2] - 4.0 * psi[1:-1, 1:-1]
        ) / h ** 2
    ext = np.pad(psi, 1)
    ext[0, :] = -ext[2, :]
    ext[-1, :] = -ext[-3, :]
    ext[:, 0] = -ext[:, 2]
    ext[:, -1] = -ext[:, -3]
    core = ext[2:-2, 2:-2]
    lx = ext[4:, 2:-2] - 2.0 * core + ext[:-4, 2:-2]
    ly = ext[2:-2, 4:] - 2.0 * core + ext[2:-2, :-4]
    return (lx + ly) / (4.0 * h ** 2)


def solve_dirichlet(rhs: Field, stencil: str = FIVE_POINT) -> Field:
    """
    Δψ = rhs a belső csomópontokon, ψ = 0 a határon

    Szinusz-transzformációs (DST-I) diagonalizálás. A `five_point` és
    `central_squared` stencilekre a diszkrét reziduumot is ellenőrizzük.

    Args:
        rhs: skalár mező
        stencil: five_point | central_squared | spectral

    Returns:
        ψ skalár mező ugyanazon a rácson
    """
    if rhs.value_shape != ():
        raise GridError("solve_dirichlet skalár jobb oldalt vár")
    grid = rhs.grid
    h = grid.h
    interior = rhs.data[1:-1, 1:-1]
    nxi, nyi = interior.shape

    denom = _symbol(nxi, h, stencil)[:, np.newaxis] + _symbol(nyi, h, stencil)[np.newaxis, :]
    coeffs = scipy.fft.dstn(interior, type=1, norm="ortho")
    psi_interior = scipy.fft.idstn(coeffs / denom, type=1, norm="ortho")

    psi = np.zeros((grid.nx, grid.ny))
    psi[1:-1, 1:-1] = psi_interior

    rhs_norm = float(np.max(np.abs(interior))) if interior.size else 0.0
    if stencil != SPECTRAL and rhs_norm > 0:
        residual = float(np.max(np.abs(_apply_operator(psi, h, stencil) - interior)))
        tolerance = max(1e-10, 1e-15 * max(nxi, nyi) ** 2) * rhs_norm
        if residual > tolerance:
            raise SolverError(f"Poisson reziduum túl nagy: {residual:.3e} > {tolerance:.3e}")
        logger.debug(f"Poisson ({stencil}) reziduum: {residual:.3e}")

    return Field(grid, psi)


def decompose(D: Field, tolerance: float = IDENTITY_TOL) -> DecompResult:
    """
    Konform felbontás

    Args:
        D: szimmetrikus 2×2 mező
        tolerance: az (i) azonosság relatív tűrése, (1 + ‖D‖₀)-lal skálázva

    Returns:
        DecompResult
    """
    if D.value_shape != (2, 2):
        raise GridError(f"decompose 2×2 mezőt vár, kapott: {D.value_shape}")
    grid = D.grid
    d11 = D.data[..., 0, 0]
    d22 = D.data[..., 1, 1]
    d12 = 0.5 * (D.data[..., 0, 1] + D.data[..., 1, 0])

    psi1 = solve_dirichlet(Field(grid, d11 - d22), stencil=CENTRAL_SQUARED)
    psi2 = solve_dirichlet(Field(grid, 2.0 * d12), stencil=CENTRAL_SQUARED)
    g1 = fd_gradient(psi1).data
    g2 = fd_gradient(psi2).data

    psi_bar = Field(grid, np.stack([-g1[..., 0] - g2[..., 1], g1[..., 1] - g2[..., 0]], axis=-1))
    a_bar = Field(grid, d11 + fd_gradient(psi_bar).data[..., 0, 0])

    residual = D + sym_grad(psi_bar) - identity_field(grid) * a_bar
    r = BOUNDARY_RINGS
    residual_norm = float(np.max(np.abs(residual.data[r:-r, r:-r])))
    bound = tolerance * (1.0 + sup_norm(D))
    if residual_norm > bound:
        raise SolverError(f"Konform azonosság reziduuma túl nagy: {residual_norm:.3e} > {bound:.3e}")

    return DecompResult(
        psi_bar=psi_bar,
        a_bar=a_bar,
        residual_norm=residual_norm,
        psi1=psi1,
        psi2=psi2
    )


def default_probes(grid: Grid2, gamma: float) -> List[Field]:
    """
    Perturbáció család ‖P‖_{0,γ} = 1 normálással

    ±e₁⊗e₁, ±e₂⊗e₂ és ±(e₁⊗e₂ + e₂⊗e₁)/2 irányok sima, kompakt tartójú bumppal.
    """
    cx, cy = grid.center
    radius = 0.35 * min(grid.x_max - grid.x_min, grid.y_max - grid.y_min)

    def bump(x1, x2):
        rho2 = ((x1 - cx) ** 2 + (x2 - cy) ** 2) / radius ** 2
        out = np.zeros_like(rho2)
        inside = rho2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
        return out

    base = Field.from_function(grid, bump)
    directions = [
        np.array([[1.0, 0.0], [0.0, 0.0]]),
        np.array([[0.0, 0.0], [0.0, 1.0]]),
        np.array([[0.0, 0.5], [0.5, 0.0]]),
    ]
    probes = []
    for direction in directions:
        for sign in (1.0, -1.0):
            probe = Field(grid, sign * base.data[..., np.newaxis, np.newaxis] * direction)
            scale = sup_norm(probe) + holder_seminorm(probe, gamma)
            probes.append(probe * (1.0 / scale))
    return probes


def estimate_r0(
    gamma: float,
    grid: Optional[Grid2] = None,
    probes: Optional[List[Field]] = None,
    cap: float = 100.0,
    iterations: int = 48
) -> float:
    """
    r₀ alsó becslése felezéssel

    A legnagyobb r, amelyre minden P próbára min ā(Id₂ + rP) > ½.

    Args:
        gamma: Hölder kitevő, (0, 1)-ben
        grid: a próbák rácsa (alapértelmezés: 64×64 egységnégyzet)
        probes: perturbációk (alapértelmezés: default_probes)
        cap: a felezés felső korlátja
        iterations: felezési lépések száma

    Returns:
        r₀ becslés, (0, cap]-ben
    """
    if not 0 < gamma < 1:
        raise ValueError(f"γ (0,1)-ben kell legyen: {gamma}")
    if grid is None:
        grid = Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.0, nodes=64)
    if probes is None:
        probes = default_probes(grid, gamma)

    identity = identity_field(grid)

    def passes(r: float) -> bool:
        for probe in probes:
            a_bar = decompose(identity + probe * r).a_bar
            if float(np.min(a_bar.data)) <= 0.5:
                return False
        return True

    if passes(cap):
        logger.info(f"r₀ becslés: a felső korlát ({cap}) is megfelel")
        return cap

    low, high = 0.0, cap
    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if passes(mid):
            low = mid
        else:
            high = mid

    logger.info(f"r₀ becslés (γ={gamma}): {low:.6g}")
    return low
