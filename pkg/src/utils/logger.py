"""
Logging konfiguráció: egyetlen folyamat szintű logger, konzol + opcionális
forgó log fájl, valamint a pipeline-ok banner és metrika sorai
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Mapping, Optional

LOGGER_NAME = "KonvexIntegralo"

# A sweep szálakban fut, ezért a szál neve is a sorba kerül
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(threadName)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

BANNER_WIDTH = 60


class Logger:
    """Központi logging manager (egy példány a folyamatban)"""

    _instance: Optional['Logger'] = None
    _initialized: bool = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self.logger = logging.getLogger(LOGGER_NAME)
            self.logger.propagate = False
            self._initialized = True

    def setup(
        self,
        level: str = "INFO",
        log_file: Optional[str] = None,
        max_bytes: int = 10485760,  # 10MB
        backup_count: int = 5
    ):
        """
        Logging beállítása

        Ismételt hívás lecseréli a korábbi handlereket (a CLI a konfiguráció
        betöltése után újra beállítja a szintet és a fájlt).

        Args:
            level: DEBUG, INFO, WARNING vagy ERROR
            log_file: forgó log fájl (None: csak konzol)
            max_bytes: fájlméret rotálás előtt
            backup_count: megtartott régi fájlok
        """
        log_level = getattr(logging, str(level).upper(), logging.INFO)
        self.logger.setLevel(log_level)
        self.detach()

        self._attach(logging.StreamHandler(sys.stdout), log_level)
        if log_file:
            path = Path(log_file)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._attach(
                RotatingFileHandler(path, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"),
                log_level,
            )

        self.logger.debug(f"Logging: szint={logging.getLevelName(log_level)}, fájl={log_file}")

    def _attach(self, handler: logging.Handler, level: int):
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        self.logger.addHandler(handler)

    def detach(self):
        """Minden handler levétele és lezárása"""
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()

    def get_logger(self) -> logging.Logger:
        return self.logger


_logger_instance = Logger()


def get_logger() -> logging.Logger:
    """
    A folyamat loggere

    Returns:
        logging.Logger
    """
    return _logger_instance.get_logger()


def setup_logger(
    level: str = "INFO",
    log_file: Optional[str] = None,
    max_bytes: int = 10485760,
    backup_count: int = 5
):
    """Global logger beállítása (lásd Logger.setup)"""
    _logger_instance.setup(level, log_file, max_bytes, backup_count)


def detach_handlers():
    _logger_instance.detach()


def log_banner(title: str, level: int = logging.INFO):
    """Pipeline fejléc: `=` sor, cím, `=` sor"""
    logger = get_logger()
    logger.log(level, "=" * BANNER_WIDTH)
    logger.log(level, title)
    logger.log(level, "=" * BANNER_WIDTH)


def log_metrics(title: str, metrics: Mapping[str, Any], level: int = logging.DEBUG):
    """
    Metrikák soronként, kulcs szerint rendezve

    Args:
        title: a blokk címe
        metrics: név → érték (a float értékek 6 értékes jegyre)
        level: log szint
    """
    logger = get_logger()
    if not logger.isEnabledFor(level):
        return
    logger.log(level, f"{title}:")
    for key in sorted(metrics):
        value = metrics[key]
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        logger.log(level, f"  {key} = {text}")
