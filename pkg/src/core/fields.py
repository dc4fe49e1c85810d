"""
Rács, mezők, véges differenciák és normabecslők

Minden más modul erre épül. A mezők értékei (nx, ny, *value_shape) alakú
numpy tömbökben élnek; a 0. tengely x₁, az 1. tengely x₂ irányú.
"""
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from src.core.errors import GridError, MarginError
from src.utils.logger import get_logger

logger = get_logger()

# Ennyi csomópont kell legalább tengelyenként
MIN_NODES = 8

_REL_TOL = 1e-9


@dataclass(frozen=True)
class Grid2:
    """
    Egyenletes téglalap rács margóval (ω̄ + B̄_margin diszkrét megfelelője)

    A margó mindig egész számú rácsköz: margin = pad·h.
    """
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    margin: float
    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise GridError(f"Rácsköz nem pozitív: h={self.h}")
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise GridError(f"Túl kicsi rács: {self.nx}x{self.ny} (min {MIN_NODES})")
        if self.margin < -_REL_TOL * self.h:
            raise MarginError(f"Negatív margó: {self.margin}")

    @classmethod
    def build(
        cls,
        x_min: float,
        x_max: float,
        y_min: float,
        y_max: float,
        margin: float,
        nodes: int
    ) -> 'Grid2':
        """
        Rács felépítése adott x-irányú csomópontszámmal a teljes kiterjedésen

        A margót felfelé kerekítjük egész rácsközre, az y felső határt pedig
        a legközelebbi rácspontra igazítjuk.

        Args:
            x_min, x_max, y_min, y_max: ω téglalap
            margin: kívánt minimális margó
            nodes: csomópontok száma x irányban (margóval együtt)

        Returns:
            Grid2
        """
        width = x_max - x_min
        height = y_max - y_min
        if width <= 0 or height <= 0:
            raise GridError("Üres tartomány")
        if margin < 0:
            raise MarginError(f"Negatív margó: {margin}")

        h0 = (width + 2 * margin) / (nodes - 1)
        pad = int(math.ceil(margin / h0 - 1e-9))
        inner = nodes - 1 - 2 * pad
        if inner < 1:
            raise GridError(f"A margó ({margin}) elfogyasztja a rácsot ({nodes} pont)")
        h = width / inner
        ny_inner = max(1, int(round(height / h)))
        y_max_aligned = y_min + ny_inner * h
        if abs(y_max_aligned - y_max) > 1e-6 * height:
            logger.debug(f"y_max igazítva: {y_max} -> {y_max_aligned}")

        return cls(
            x_min=x_min,
            x_max=x_max,
            y_min=y_min,
            y_max=y_max_aligned,
            margin=pad * h,
            nx=nodes,
            ny=ny_inner + 1 + 2 * pad,
            h=h
        )

    @property
    def pad(self) -> int:
        """Margó rácsközökben"""
        return int(round(self.margin / self.h))

    @property
    def origin(self) -> Tuple[float, float]:
        """A bal alsó csomópont koordinátái"""
        return self.x_min - self.margin, self.y_min - self.margin

    @property
    def extent(self) -> Tuple[float, float]:
        return (self.nx - 1) * self.h, (self.ny - 1) * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """(X1, X2) koordináta tömbök 'ij' indexeléssel"""
        x0, y0 = self.origin
        x = x0 + self.h * np.arange(self.nx)
        y = y0 + self.h * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def shrink(self, margin: float) -> 'Grid2':
        """
        Logikai szűkítés kisebb margóra (újramintavételezés nélkül)

        Args:
            margin: új margó, 0 ≤ margin ≤ self.margin

        Returns:
            Az eredeti rács csomópontjainak részhalmazán élő rács
        """
        if margin > self.margin + _REL_TOL * self.h:
            raise MarginError(f"Nem bővíthető a margó: {margin} > {self.margin}")
        if margin < -_REL_TOL * self.h:
            raise MarginError(f"Negatív margó: {margin}")
        new_pad = int(math.floor(margin / self.h + 1e-9))
        cut = self.pad - new_pad
        return Grid2(
            x_min=self.x_min,
            x_max=self.x_max,
            y_min=self.y_min,
            y_max=self.y_max,
            margin=new_pad * self.h,
            nx=self.nx - 2 * cut,
            ny=self.ny - 2 * cut,
            h=self.h
        )

    def crop_rings(self, rings: int) -> 'Grid2':
        """A külső `rings` csomópont gyűrű levágása"""
        if rings > self.pad:
            raise MarginError(f"Nincs {rings} gyűrűnyi margó (pad={self.pad})")
        return self.shrink((self.pad - rings) * self.h)

    def is_compatible(self, other: 'Grid2') -> bool:
        """Azonos ω és rácsköz (a margó eltérhet)"""
        return (
            abs(self.h - other.h) <= _REL_TOL * self.h
            and abs(self.x_min - other.x_min) <= _REL_TOL * self.h
            and abs(self.y_min - other.y_min) <= _REL_TOL * self.h
            and abs(self.x_max - other.x_max) <= _REL_TOL * self.h
            and abs(self.y_max - other.y_max) <= _REL_TOL * self.h
        )

    def same_as(self, other: 'Grid2') -> bool:
        return self.is_compatible(other) and self.nx == other.nx and self.ny == other.ny


class Field:
    """
    Rácson mintavételezett leképezés (skalár, ℝᵏ, ℝ², szimmetrikus 2×2 ...)

    Létrehozás után nem módosítható.
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid: Grid2, data: np.ndarray):
        """
        Args:
            grid: a rács
            data: (nx, ny, *value_shape) alakú tömb
        """
        array = np.array(data, dtype=float, copy=True)
        if array.ndim < 2 or array.shape[:2] != (grid.nx, grid.ny):
            raise GridError(
                f"Adat alak {array.shape} nem illik a rácshoz ({grid.nx}, {grid.ny})"
            )
        if not np.all(np.isfinite(array)):
            raise GridError("Nem véges értékek a mezőben")
        array.flags.writeable = False
        self.grid = grid
        self.data = array

    @classmethod
    def from_function(cls, grid: Grid2, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> 'Field':
        """Mező a koordinátákon kiértékelt függvényből"""
        x1, x2 = grid.coordinates()
        values = np.asarray(fn(x1, x2), dtype=float)
        if values.shape[:2] != (grid.nx, grid.ny):
            values = np.broadcast_to(values, (grid.nx, grid.ny) + values.shape[2:])
        return cls(grid, values)

    @classmethod
    def constant(cls, grid: Grid2, value) -> 'Field':
        value = np.asarray(value, dtype=float)
        return cls(grid, np.broadcast_to(value, (grid.nx, grid.ny) + value.shape))

    @classmethod
    def zeros(cls, grid: Grid2, value_shape: Tuple[int, ...] = ()) -> 'Field':
        return cls(grid, np.zeros((grid.nx, grid.ny) + tuple(value_shape)))

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return self.data.shape[2:]

    def restrict(self, grid: Grid2) -> 'Field':
        """Megszorítás egy szűkített (részhalmaz) rácsra"""
        if not self.grid.is_compatible(grid):
            raise GridError("A cél rács nem kompatibilis")
        cut = self.grid.pad - grid.pad
        if cut < 0:
            raise MarginError("A cél rács nagyobb, mint a forrás")
        if cut == 0:
            return self
        return Field(grid, self.data[cut:-cut, cut:-cut])

    def component(self, index) -> 'Field':
        """Egy komponens kiemelése (pl. index=0 vagy index=(0, 1))"""
        if not isinstance(index, tuple):
            index = (index,)
        return Field(self.grid, self.data[(Ellipsis,) + index] if self.value_shape else self.data)

    def _coerce(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.data
        return other

    def __add__(self, other) -> 'Field':
        return Field(self.grid, self.data + self._coerce(other))

    def __sub__(self, other) -> 'Field':
        return Field(self.grid, self.data - self._coerce(other))

    def __mul__(self, other) -> 'Field':
        if isinstance(other, Field):
            check_same_grid(self, other)
            other_data = other.data
            if other.value_shape == () and self.value_shape != ():
                other_data = other_data.reshape(other_data.shape + (1,) * len(self.value_shape))
            return Field(self.grid, self.data * other_data)
        return Field(self.grid, self.data * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self) -> 'Field':
        return Field(self.grid, -self.data)

    def __repr__(self) -> str:
        return f"Field(shape={self.value_shape}, grid={self.grid.nx}x{self.grid.ny}, h={self.grid.h:.4g})"


@dataclass
class NormReport:
    """
    Normabecslések egy mezőre

    c0, c1, c2 a teljes C⁰/C¹/C² normák (a deriváltak szuprémumainak összege),
    grad_sup és hess_sup a megfelelő félnormák.
    """
    c0: float
    c1: float
    c2: float
    grad_sup: float
    hess_sup: float
    holder: Dict[float, float] = dc_field(default_factory=dict)

    def holder_norm(self, gamma: float) -> float:
        """‖f‖_{0,γ} = ‖f‖₀ + [f]_γ"""
        return self.c0 + self.holder[gamma]


def check_same_grid(*fields: Field):
    """Ellenőrzi, hogy minden mező ugyanazon a rácson él"""
    first = fields[0].grid
    for f in fields[1:]:
        if not first.same_as(f.grid):
            raise GridError("A mezők nem azonos rácson vannak")


def _require_nodes(grid: Grid2, minimum: int):
    if grid.nx < minimum or grid.ny < minimum:
        raise GridError(f"Rács túl kicsi a differenciáláshoz: {grid.nx}x{grid.ny}")


def _second_difference(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Második derivált: belül 3 pontos, a szélen egyoldali másodrendű"""
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h ** 2
    out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h ** 2
    out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h ** 2
    return np.moveaxis(out, 0, axis)


def _first_difference(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(a, h, axis=axis, edge_order=2)


def fd_gradient(f: Field) -> Field:
    """
    Gradiens véges differenciákkal

    Belül centrális, a határon egyoldali másodrendű séma.

    Returns:
        Field (*value_shape, 2) alakú értékekkel, az utolsó tengely ∂₁, ∂₂
    """
    _require_nodes(f.grid, 3)
    h = f.grid.h
    d1 = _first_difference(f.data, h, 0)
    d2 = _first_difference(f.data, h, 1)
    return Field(f.grid, np.stack([d1, d2], axis=-1))


def fd_hessian(f: Field) -> Field:
    """
    Hesse-mátrix véges differenciákkal

    Returns:
        Field (*value_shape, 2, 2) alakú, szimmetrikus vegyes taggal
    """
    _require_nodes(f.grid, 4)
    h = f.grid.h
    d11 = _second_difference(f.data, h, 0)
    d22 = _second_difference(f.data, h, 1)
    d12 = _first_difference(_first_difference(f.data, h, 0), h, 1)
    row1 = np.stack([d11, d12], axis=-1)
    row2 = np.stack([d12, d22], axis=-1)
    return Field(f.grid, np.stack([row1, row2], axis=-2))


def _as_vector(v: Field, name: str) -> np.ndarray:
    """Skalár mezőt k=1 vektor mezővé emel"""
    if v.value_shape == ():
        return v.data[..., np.newaxis]
    if len(v.value_shape) != 1:
        raise GridError(f"{name} vektor mező kell, kapott alak: {v.value_shape}")
    return v.data


def sym_grad(w: Field) -> Field:
    """sym∇w = ½(∇w + (∇w)ᵀ) egy ℝ²-értékű mezőre"""
    if w.value_shape != (2,):
        raise GridError(f"sym_grad ℝ²-értékű mezőt vár, kapott: {w.value_shape}")
    g = fd_gradient(w).data
    return Field(w.grid, 0.5 * (g + np.swapaxes(g, -1, -2)))


def metric(v: Field, w: Field) -> Field:
    """½(∇v)ᵀ∇v + sym∇w"""
    check_same_grid(v, w)
    v_data = _as_vector(v, "v")
    g = fd_gradient(Field(v.grid, v_data)).data
    quadratic = 0.5 * np.einsum("...ki,...kj->...ij", g, g)
    return Field(v.grid, quadratic + sym_grad(w).data)


def deficit(v: Field, w: Field, A: Field) -> Field:
    """
    Deficit 𝒟 = A − (½(∇v)ᵀ∇v + sym∇w)

    Args:
        v: ℝᵏ-értékű mező
        w: ℝ²-értékű mező
        A: szimmetrikus 2×2 mező

    Returns:
        Szimmetrikus 2×2 mező
    """
    check_same_grid(v, w, A)
    if A.value_shape != (2, 2):
        raise GridError(f"A 2×2 mátrix mező kell, kapott: {A.value_shape}")
    return A - metric(v, w)


def det_hessian(v: Field) -> Field:
    """𝔇et∇²v = ⟨∂₁₁v, ∂₂₂v⟩ − |∂₁₂v|²"""
    v_data = _as_vector(v, "v")
    hess = fd_hessian(Field(v.grid, v_data)).data
    value = np.sum(hess[..., 0, 0] * hess[..., 1, 1] - hess[..., 0, 1] ** 2, axis=-1)
    return Field(v.grid, value)


def curl_curl(A: Field) -> Field:
    """curl curl A = ∂₂₂A₁₁ − 2∂₁₂A₁₂ + ∂₁₁A₂₂"""
    if A.value_shape != (2, 2):
        raise GridError(f"curl_curl 2×2 mező kell, kapott: {A.value_shape}")
    _require_nodes(A.grid, 4)
    h = A.grid.h
    a11 = A.data[..., 0, 0]
    a12 = 0.5 * (A.data[..., 0, 1] + A.data[..., 1, 0])
    a22 = A.data[..., 1, 1]
    mixed = _first_difference(_first_difference(a12, h, 0), h, 1)
    return Field(A.grid, _second_difference(a11, h, 1) - 2.0 * mixed + _second_difference(a22, h, 0))


def min_eigenvalue(S: Field) -> Field:
    """Szimmetrikus 2×2 mező legkisebb sajátértéke csomópontonként"""
    a = S.data[..., 0, 0]
    d = S.data[..., 1, 1]
    b = 0.5 * (S.data[..., 0, 1] + S.data[..., 1, 0])
    return Field(S.grid, 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b ** 2))


def identity_field(grid: Grid2, scale: float = 1.0) -> Field:
    """scale·Id₂ konstans mező"""
    return Field.constant(grid, scale * np.eye(2))


def _pointwise_norm(a: np.ndarray, value_ndim: int) -> np.ndarray:
    """Euklideszi/Frobenius norma az érték tengelyek mentén"""
    if value_ndim == 0:
        return np.abs(a)
    axes = tuple(range(a.ndim - value_ndim, a.ndim))
    return np.sqrt(np.sum(a * a, axis=axes))


def sup_norm(f: Field) -> float:
    """‖f‖₀ = max csomóponti norma"""
    return float(np.max(_pointwise_norm(f.data, len(f.value_shape))))


def _shifted_difference(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    nx, ny = a.shape[:2]
    if dj >= 0:
        y_hi, y_lo = slice(dj, ny), slice(0, ny - dj)
    else:
        y_hi, y_lo = slice(0, ny + dj), slice(-dj, ny)
    return a[di:nx, y_hi] - a[0:nx - di, y_lo]


def holder_seminorm(f: Field, gamma: float) -> float:
    """
    [f]_γ becslése diadikus távolságokon

    A párokat tengely- és átlóirányú eltolásokkal mintavételezzük
    r ∈ {h, 2h, 4h, …} távolságokon, ez alsó becslés a valódi félnormára.

    Args:
        f: mező
        gamma: kitevő, (0, 1]-ben

    Returns:
        A becsült félnorma
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"Hölder kitevő (0,1]-ben kell legyen: {gamma}")
    nx, ny = f.grid.nx, f.grid.ny
    value_ndim = len(f.value_shape)
    best = 0.0
    s = 1
    while s < max(nx, ny):
        for di, dj in ((s, 0), (0, s), (s, s), (s, -s)):
            if di >= nx or abs(dj) >= ny:
                continue
            diff = _shifted_difference(f.data, di, dj)
            if diff.size == 0:
                continue
            r = f.grid.h * math.hypot(di, dj)
            best = max(best, float(np.max(_pointwise_norm(diff, value_ndim))) / r ** gamma)
        s *= 2
    return best


def norms(f: Field, exponents: Iterable[float] = ()) -> NormReport:
    """
    C⁰, C¹, C² és Hölder normák becslése

    Args:
        f: mező
        exponents: kért Hölder kitevők, mind (0, 1]-ben

    Returns:
        NormReport
    """
    exponents = list(exponents)
    for gamma in exponents:
        if not 0 < gamma <= 1:
            raise ValueError(f"Hölder kitevő (0,1]-ben kell legyen: {gamma}")

    value_ndim = len(f.value_shape)
    c0 = sup_norm(f)
    grad = fd_gradient(f).data
    grad_sup = float(np.max(_pointwise_norm(grad, value_ndim + 1)))
    hess = fd_hessian(f).data
    hess_sup = float(np.max(_pointwise_norm(hess, value_ndim + 2)))

    return NormReport(
        c0=c0,
        c1=c0 + grad_sup,
        c2=c0 + grad_sup + hess_sup,
        grad_sup=grad_sup,
        hess_sup=hess_sup,
        holder={gamma: holder_seminorm(f, gamma) for gamma in exponents}
    )


def c1_norm(f: Field) -> float:
    """‖f‖₁ a Hesse-mátrix nélkül (olcsóbb, mint a teljes norms())"""
    value_ndim = len(f.value_shape)
    grad = fd_gradient(f).data
    return sup_norm(f) + float(np.max(_pointwise_norm(grad, value_ndim + 1)))


def hessian_sup(f: Field) -> float:
    """‖∇²f‖₀"""
    hess = fd_hessian(f).data
    return float(np.max(_pointwise_norm(hess, len(f.value_shape) + 2)))
