"""
Simítás (mollifikáció) l skálán és a kommutátor
"""
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.signal

from src.core.errors import GridError, MarginError
from src.core.fields import Field, check_same_grid
from src.utils.logger import get_logger

logger = get_logger()


@lru_cache(maxsize=64)
def _bump_kernel(l: float, h: float) -> Tuple[int, np.ndarray]:
    """exp(−1/(1−|x/l|²)) a rácson mintavételezve, egységnyi diszkrét tömegre normálva"""
    radius = int(math.floor(l / h + 1e-9))
    offsets = h * np.arange(-radius, radius + 1)
    x1, x2 = np.meshgrid(offsets, offsets, indexing="ij")
    rho2 = (x1 ** 2 + x2 ** 2) / l ** 2
    weights = np.zeros_like(rho2)
    inside = rho2 < 1.0
    weights[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    weights /= weights.sum()
    weights.flags.writeable = False
    return radius, weights


class Mollifier:
    """
    Radiálisan szimmetrikus, nemnegatív, egységnyi tömegű simító mag

    A tartó sugara legfeljebb l; a konvolúció FFT alapú, csak a teljes magot látó ("valid") csomópontokon.
    """

    def __init__(self, l: float, h: float):
        """
        Args:
            l: simítási skála
            h: rácsköz
        """
        if l < 2.0 * h * (1 - 1e-9):
            raise MarginError(f"A mag nem feloldható: l={l:.4g} < 2h={2 * h:.4g}")
        self.l = float(l)
        self.h = float(h)
        self.radius, self.weights = _bump_kernel(self.l, self.h)

    def second_moment(self) -> float:
        """σ² = Σ φ_l(y)·y₁² (tengelyenként azonos a szimmetria miatt)"""
        offsets = self.h * np.arange(-self.radius, self.radius + 1)
        return float(np.sum(self.weights * offsets[:, np.newaxis] ** 2))

    def apply(self, f: Field) -> Field:
        """
        f ∗ φ_l a margóban l-lel szűkített rácson

        Args:
            f: tetszőleges értékű mező

        Returns:
            Simított mező a szűkített rácson
        """
        grid = f.grid
        if abs(grid.h - self.h) > 1e-9 * self.h:
            raise GridError("A mag más rácsközre készült")
        if grid.margin < self.l * (1 - 1e-9):
            raise MarginError(f"Kevés margó a simításhoz: {grid.margin:.4g} < l={self.l:.4g}")

        out_grid = grid.shrink(grid.margin - self.l)
        cut = grid.pad - out_grid.pad

        flat = f.data.reshape(grid.nx, grid.ny, -1)
        # a mag szimmetrikus, így a konvolúció egyben korreláció
        valid = scipy.signal.fftconvolve(flat, self.weights[..., np.newaxis], mode="valid", axes=(0, 1))
        trim = cut - self.radius
        out = valid[trim:valid.shape[0] - trim, trim:valid.shape[1] - trim]

        return Field(out_grid, out.reshape((out_grid.nx, out_grid.ny) + f.value_shape))


def mollify(f: Field, l: float) -> Field:
    """f ∗ φ_l, a rács margója l-lel csökken"""
    return Mollifier(l, f.grid.h).apply(f)


def commutator(f: Field, g: Field, l: float) -> Field:
    """
    (fg)∗φ_l − (f∗φ_l)(g∗φ_l) skalár mezőkre

    Args:
        f, g: skalár mezők ugyanazon a rácson
        l: simítási skála

    Returns:
        A kommutátor mező a szűkített rácson
    """
    check_same_grid(f, g)
    if f.value_shape != () or g.value_shape != ():
        raise GridError("A kommutátor skalár mezőkre van definiálva")
    mollifier = Mollifier(l, f.grid.h)
    product = Field(f.grid, f.data * g.data)
    return mollifier.apply(product) - mollifier.apply(f) * mollifier.apply(g)
