"""
Egyetlen oszcilláló lépés: (v, w) → (ṽ, w̃)

    ṽ = v + (1/λ)·a·Γ(λt_η)·E
    w̃ = w − (1/λ)·a·Γ·∇⟨v,E⟩ − (1/λ²)·a·Γ̄·∇a + (1/λ)·a²·Γ̇̄·η

ahol t_η = ⟨x, η⟩, Γ(t) = 2 sin t, Γ̄(t) = −½ cos 2t, Γ̇̄(t) = −½ sin 2t.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.core.errors import GridError, NyquistError, PreconditionError
from src.core.fields import Field, check_same_grid, fd_gradient, fd_hessian, metric
from src.utils.logger import get_logger

logger = get_logger()

# λ·h felső korlát (kb. 25 pont hullámhosszanként)
NYQUIST_CAP = 0.25

_UNIT_TOL = 1e-12


def profiles(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Γ, Γ̄, Γ̇̄) analitikusan kiértékelve"""
    return 2.0 * np.sin(t), -0.5 * np.cos(2.0 * t), -0.5 * np.sin(2.0 * t)


def check_nyquist(lam: float, h: float, what: str = "frekvencia"):
    """NyquistError, ha λ·h > NYQUIST_CAP"""
    if lam * h > NYQUIST_CAP * (1 + 1e-12):
        raise NyquistError(f"{what} túl magas: λ·h = {lam * h:.4f} > {NYQUIST_CAP}")


@dataclass(frozen=True)
class StepSpec:
    """
    Egy oszcilláló perturbáció leírása

    Attributes:
        a: amplitúdó (skalár mező, a ≥ 0)
        eta: egységvektor ℝ²-ben
        E: egységvektor ℝᵏ-ban (kodimenzió tengely)
        lam: frekvencia, λ > 0
    """
    a: Field
    eta: np.ndarray
    E: np.ndarray
    lam: float

    def validate(self, k: int):
        eta = np.asarray(self.eta, dtype=float)
        E = np.asarray(self.E, dtype=float)
        if eta.shape != (2,) or abs(np.linalg.norm(eta) - 1.0) > _UNIT_TOL:
            raise ValueError(f"η nem egységvektor: {eta}")
        if E.shape != (k,) or abs(np.linalg.norm(E) - 1.0) > _UNIT_TOL:
            raise ValueError(f"E nem egységvektor ℝ^{k}-ban: {E}")
        if self.a.value_shape != ():
            raise GridError("Az amplitúdó skalár mező kell legyen")
        if not self.lam > 0:
            raise ValueError(f"A frekvencia nem pozitív: {self.lam}")
        check_nyquist(self.lam, self.a.grid.h)
        if np.min(self.a.data) < 0:
            raise PreconditionError(f"Negatív amplitúdó: min a = {np.min(self.a.data):.3e}")


def _phase(s: StepSpec) -> np.ndarray:
    x1, x2 = s.a.grid.coordinates()
    return s.lam * (s.eta[0] * x1 + s.eta[1] * x2)


def apply_step(v: Field, w: Field, s: StepSpec) -> Tuple[Field, Field]:
    """
    A lépés végrehajtása

    Args:
        v: ℝᵏ-értékű mező
        w: ℝ²-értékű mező
        s: a lépés paraméterei

    Returns:
        (ṽ, w̃)
    """
    check_same_grid(v, w, s.a)
    if len(v.value_shape) != 1:
        raise GridError(f"v vektor mező kell, kapott alak: {v.value_shape}")
    k = v.value_shape[0]
    s.validate(k)

    eta = np.asarray(s.eta, dtype=float)
    E = np.asarray(s.E, dtype=float)
    gamma, gamma_bar, gamma_bar_dot = profiles(_phase(s))
    a = s.a.data
    lam = s.lam

    v_new = v.data + (a * gamma / lam)[..., np.newaxis] * E

    v_e = Field(v.grid, v.data @ E)
    grad_v_e = fd_gradient(v_e).data
    grad_a = fd_gradient(s.a).data
    w_new = (
        w.data
        - (a * gamma / lam)[..., np.newaxis] * grad_v_e
        - (a * gamma_bar / lam ** 2)[..., np.newaxis] * grad_a
        + (a ** 2 * gamma_bar_dot / lam)[..., np.newaxis] * eta
    )

    logger.debug(f"Lépés: λ={lam:.4g}, η={eta}, max a={np.max(a):.4g}")
    return Field(v.grid, v_new), Field(w.grid, w_new)


def step_residual(v: Field, w: Field, v_new: Field, w_new: Field, s: StepSpec) -> Field:
    """
    A lépés-azonosság bal oldala véges differenciákkal

    (½(∇ṽ)ᵀ∇ṽ + sym∇w̃) − (½(∇v)ᵀ∇v + sym∇w) − a²·η⊗η
    """
    check_same_grid(v, w, v_new, w_new, s.a)
    eta = np.asarray(s.eta, dtype=float)
    primitive = (s.a.data ** 2)[..., np.newaxis, np.newaxis] * np.outer(eta, eta)
    return metric(v_new, w_new) - metric(v, w) - primitive


def step_rhs(
    v: Field,
    s: StepSpec,
    hess_v_e: Optional[np.ndarray] = None,
    grad_a: Optional[np.ndarray] = None,
    hess_a: Optional[np.ndarray] = None
) -> Field:
    """
    A lépés-azonosság jobb oldala

    −(1/λ)·a·Γ·∇²⟨v,E⟩ + (1/λ²)·(½Γ² − Γ̄)·∇a⊗∇a − (1/λ²)·a·Γ̄·∇²a

    A hiányzó deriváltakat véges differenciákkal számoljuk; tesztekhez
    zárt alakú deriváltak is átadhatók.

    Args:
        v: a lépés előtti ℝᵏ-értékű mező
        s: a lépés paraméterei
        hess_v_e: ∇²⟨v,E⟩, (nx, ny, 2, 2)
        grad_a: ∇a, (nx, ny, 2)
        hess_a: ∇²a, (nx, ny, 2, 2)

    Returns:
        Szimmetrikus 2×2 mező
    """
    E = np.asarray(s.E, dtype=float)
    if hess_v_e is None:
        hess_v_e = fd_hessian(Field(v.grid, v.data @ E)).data
    if grad_a is None:
        grad_a = fd_gradient(s.a).data
    if hess_a is None:
        hess_a = fd_hessian(s.a).data

    gamma, gamma_bar, _ = profiles(_phase(s))
    a = s.a.data
    lam = s.lam
    expand = (Ellipsis, np.newaxis, np.newaxis)

    rhs = (
        -(a * gamma / lam)[expand] * hess_v_e
        + ((0.5 * gamma ** 2 - gamma_bar) / lam ** 2)[expand] * np.einsum("...i,...j->...ij", grad_a, grad_a)
        - (a * gamma_bar / lam ** 2)[expand] * hess_a
    )
    return Field(v.grid, rhs)
