"""
Kanonikus feladatok (v, w, A, f) egy adott rácson

A registry név szerint adja vissza a feladat építőt; minden építő
(grid, k, rng, **paraméterek) aláírású.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from src.core.conformal import FIVE_POINT, solve_dirichlet
from src.core.errors import ConfigError
from src.core.fields import Field, Grid2, curl_curl, identity_field
from src.utils.logger import get_logger

logger = get_logger()


@dataclass
class Problem:
    """Kezdő mezők és cél"""
    name: str
    v: Field
    w: Field
    A: Field
    f: Optional[Field] = None
    description: str = ""


def f_to_A(f: Field, c_pad: float) -> Field:
    """
    Konform cél mező egy adott Monge-Ampère jobb oldalhoz

    A = (φ + c_pad)·Id₂, ahol Δφ = −f, φ = 0 a határon; így −curl curl A = f.

    Args:
        f: skalár mező
        c_pad: pozitív eltolás, a (0, 0) deficit pozitív definitségéhez

    Returns:
        Szimmetrikus 2×2 mező
    """
    if f.value_shape != ():
        raise ValueError(f"f skalár mező kell, kapott: {f.value_shape}")
    if not c_pad > 0:
        raise ValueError(f"c_pad pozitív kell legyen: {c_pad}")
    phi = solve_dirichlet(f * -1.0, stencil=FIVE_POINT)
    return identity_field(f.grid) * (phi + c_pad)


def _zeros(grid: Grid2, k: int):
    return Field.zeros(grid, (k,)), Field.zeros(grid, (2,))


def _smooth_noise(grid: Grid2, rng: np.random.Generator, amplitude: float, modes: int = 3) -> Field:
    """Néhány alacsony Fourier módusból álló szimmetrikus mező"""
    x1, x2 = grid.coordinates()
    width, height = grid.extent
    out = np.zeros((grid.nx, grid.ny, 2, 2))
    for _ in range(modes):
        p, q = rng.integers(1, 4, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
        mode = np.sin(2 * np.pi * p * x1 / width + phase[0]) * np.sin(2 * np.pi * q * x2 / height + phase[1])
        c = rng.normal(size=3)
        sym = np.array([[c[0], c[1]], [c[1], c[2]]])
        out += mode[..., np.newaxis, np.newaxis] * sym
    scale = float(np.max(np.abs(out))) or 1.0
    return Field(grid, amplitude * out / scale)


def constant_conformal(
    grid: Grid2,
    k: int,
    rng: np.random.Generator,
    c: float = 0.2,
    noise: float = 0.0
) -> Problem:
    """v = 0, w = 0, A = c·Id₂ (opcionálisan kis sima zajjal)"""
    v, w = _zeros(grid, k)
    A = identity_field(grid, c)
    if noise > 0:
        A = A + _smooth_noise(grid, rng, noise)
    return Problem("constant_conformal", v, w, A, f=curl_curl(A) * -1.0, description=f"A = {c}·Id₂")


def quadratic_bending(
    grid: Grid2,
    k: int,
    rng: np.random.Generator,
    c: float = 10.0,
    shift: float = 0.1
) -> Problem:
    """
    vⱼ = ½c·xⱼ² (j ≤ min(k, 2)), w = 0, A = shift·Id₂ + ½(∇v)ᵀ∇v

    A kezdő deficit konstans shift·Id₂, a Hesse-mátrix konstans c.
    """
    x1, x2 = grid.coordinates()
    v = np.zeros((grid.nx, grid.ny, k))
    grad = np.zeros((grid.nx, grid.ny, k, 2))
    v[..., 0] = 0.5 * c * x1 ** 2
    grad[..., 0, 0] = c * x1
    if k >= 2:
        v[..., 1] = 0.5 * c * x2 ** 2
        grad[..., 1, 1] = c * x2
    quadratic = 0.5 * np.einsum("...ki,...kj->...ij", grad, grad)
    A = Field(grid, quadratic) + identity_field(grid, shift)
    return Problem(
        "quadratic_bending",
        Field(grid, v),
        Field.zeros(grid, (2,)),
        A,
        description=f"c = {c}, 𝒟₀ = {shift}·Id₂"
    )


def hessian_saddle(
    grid: Grid2,
    k: int,
    rng: np.random.Generator,
    shift: float = 0.0
) -> Problem:
    """
    v = (x₁x₂, 0, …), w = 0, A = ½(∇v)ᵀ∇v + shift·Id₂ analitikusan

    𝔇et∇²v ≡ −1, így f ≡ −1.
    """
    x1, x2 = grid.coordinates()
    v = np.zeros((grid.nx, grid.ny, k))
    v[..., 0] = x1 * x2
    quadratic = 0.5 * np.stack(
        [np.stack([x2 ** 2, x1 * x2], axis=-1), np.stack([x1 * x2, x1 ** 2], axis=-1)],
        axis=-2
    )
    A = Field(grid, quadratic) + identity_field(grid, shift)
    return Problem(
        "hessian_saddle",
        Field(grid, v),
        Field.zeros(grid, (2,)),
        A,
        f=Field.constant(grid, -1.0),
        description="v = (x₁x₂, 0)"
    )


def monge_ampere(
    grid: Grid2,
    k: int,
    rng: np.random.Generator,
    f: float = 1.0,
    c_pad: float = 0.2
) -> Problem:
    """
    Sűrűségi feladat: v ≡ 0 célfüggvény, A = f_to_A(f, c_pad)

    Args:
        f: konstans jobb oldal
        c_pad: eltolás
    """
    rhs = Field.constant(grid, float(f))
    A = f_to_A(rhs, c_pad)
    v, w = _zeros(grid, k)
    return Problem("monge_ampere", v, w, A, f=rhs, description=f"f ≡ {f}, c_pad = {c_pad}")


PROBLEMS: Dict[str, Callable[..., Problem]] = {
    "constant_conformal": constant_conformal,
    "quadratic_bending": quadratic_bending,
    "hessian_saddle": hessian_saddle,
    "monge_ampere": monge_ampere,
}


def build_problem(name: str, grid: Grid2, k: int, seed: int = 0, **params) -> Problem:
    """
    Feladat építése név szerint

    Raises:
        ConfigError: ismeretlen név vagy paraméter
    """
    if name not in PROBLEMS:
        raise ConfigError(f"Ismeretlen feladat: {name} (elérhető: {sorted(PROBLEMS)})")
    rng = np.random.default_rng(seed)
    try:
        problem = PROBLEMS[name](grid, k, rng, **params)
    except TypeError as e:
        raise ConfigError(f"Érvénytelen paraméter a(z) {name} feladathoz: {e}") from e
    logger.info(f"Feladat: {name} ({problem.description}), k={k}, rács {grid.nx}x{grid.ny}")
    return problem
