"""
Kivétel hierarchia a konvex integrációs motorhoz
"""


class KonvexError(Exception):
    """Közös ős minden saját kivételhez"""
    pass


class GridError(KonvexError, ValueError):
    """Rács vagy mező inkonzisztencia (méret, alak, nem véges érték)"""
    pass


class NyquistError(KonvexError):
    """A frekvencia túl magas a rácshoz (λ·h > 0.25)"""
    pass


class MarginError(KonvexError):
    """Nincs elég margó a rácson, vagy l < 2h"""
    pass


class SolverError(KonvexError):
    """Poisson megoldás vagy konform felbontás reziduuma tolerancián kívül"""
    pass


class PreconditionError(KonvexError, ValueError):
    """Pozitivitási / nemnegativitási előfeltétel sérül"""
    pass


class TargetUnreachableError(KonvexError):
    """
    A kért ε nem érhető el a Nyquist korláton belül

    A legjobb elért eredményt a `best` attribútum hordozza.
    """

    def __init__(self, message: str, best=None, achieved: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.achieved = achieved


class StageError(KonvexError):
    """Hiba egy stage futása közben"""
    pass


class GuardError(StageError):
    """Az aₛ² ≥ C̃ₛ/2 őr a megengedett újrapróbálások után is sérül"""
    pass


class BookkeepingError(StageError):
    """A teleszkópikus deficit azonosság nem teljesül"""
    pass


class ScheduleError(KonvexError, ValueError):
    """Érvénytelen vagy nem megvalósítható Nash-Kuiper ütemezés"""
    pass


class NashKuiperError(KonvexError):
    """Stage hiba a Nash-Kuiper iteráció belsejében"""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"[iteráció {iteration}] {message}")
        self.iteration = iteration


class ConfigError(KonvexError, ValueError):
    """Konfiguráció beolvasási vagy validációs hiba"""
    pass


class AcceptanceError(KonvexError):
    """Egy kísérlet mért eredménye kívül esik az elvárt tartományon"""
    pass
