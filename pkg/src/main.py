"""
Konvex Integráló - Main Entry Point

Igék: stage, sweep, flex, verify, export
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import yaml

# Projekt gyökér hozzáadása a path-hoz
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.errors import AcceptanceError, ConfigError, KonvexError
from src.core.experiment import PIPELINES, run_experiment
from src.utils.config_manager import ConfigManager, ExperimentConfig
from src.utils.logger import get_logger, setup_logger

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSERTION = 2
# hibás bemenet (olvashatatlan fájl, rossz érték); az argparse is 2-vel lép ki
EXIT_INPUT = 2


def _alpha_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Érvénytelen α lista: {text}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="konvex-integralo",
        description="Konvex integráció a von Kármán rendszerre (stage, sweep, Nash-Kuiper, ellenőrzés)"
    )
    parser.add_argument("verb", choices=sorted(PIPELINES), help="Végrehajtandó pipeline")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", help="YAML konfiguráció")
    source.add_argument("--preset", help="Beépített preset neve (presets/ mappa)")
    parser.add_argument("--out", help="Kimeneti mappa (felülírja az output.dir értéket)")
    parser.add_argument("--seed", type=int, help="Véletlen mag")
    parser.add_argument("--alpha", type=_alpha_list, help="Hölder kitevők vesszővel elválasztva")
    parser.add_argument("--threads", type=int, help="Párhuzamos sweep feladatok száma")
    parser.add_argument("--log-level", default=None, choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def load_config(args: argparse.Namespace) -> ConfigManager:
    """Konfiguráció a forrásból, a parancssori felülírásokkal"""
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f"Config fájl nem található: {args.config}")
        config = ConfigManager(args.config)
    elif args.preset:
        config = ConfigManager.from_preset(args.preset)
    else:
        config = ConfigManager()

    if args.out:
        config.set('output.dir', args.out)
    if args.seed is not None:
        config.set('seed', args.seed)
    if args.alpha:
        config.set('alpha', args.alpha)
    if args.threads is not None:
        config.set('threads', args.threads)
    if args.log_level:
        config.set('logging.level', args.log_level)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    setup_logger(level=args.log_level or "INFO")
    logger = get_logger()

    try:
        config = load_config(args)
        setup_logger(
            level=config.get('logging.level', 'INFO'),
            log_file=config.get('logging.file_path'),
            max_bytes=config.get('logging.max_file_size', 10485760),
            backup_count=config.get('logging.backup_count', 5)
        )
        cfg = ExperimentConfig.from_manager(config)
        out = Path(cfg.output_dir)
        config.save(str(out / "config.yaml"))
        run_experiment(cfg, args.verb, out)

    except AcceptanceError as e:
        logger.error(f"❌ Ellenőrzés sikertelen: {e}")
        return EXIT_ASSERTION
    except KonvexError as e:
        logger.error(f"Hiba: {e}", exc_info=True)
        return EXIT_ERROR
    except (ValueError, OSError, yaml.YAMLError) as e:
        logger.error(f"Hibás bemenet: {e}")
        return EXIT_INPUT

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
