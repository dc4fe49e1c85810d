"""
Input validáció utility függvények
"""
import numbers
from typing import Any, Dict, Optional, Sequence, Tuple

from src.utils.logger import get_logger

logger = get_logger()

MIN_NODES = 64
OUTPUT_FORMATS = {'csv', 'json', 'grid'}
NK_MODES = {'exact', 'practical'}


def _is_number(value: Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def validate_domain(domain: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
    """
    Téglalap tartomány validálása

    Args:
        domain: {'x_min', 'x_max', 'y_min', 'y_max'}

    Returns:
        (valid, error_message) tuple
    """
    if not isinstance(domain, dict):
        return False, "domain mapping kell legyen"

    for key in ('x_min', 'x_max', 'y_min', 'y_max'):
        if not _is_number(domain.get(key)):
            return False, f"domain.{key} hiányzik vagy nem szám"

    if domain['x_max'] <= domain['x_min'] or domain['y_max'] <= domain['y_min']:
        return False, "Üres tartomány (x_max ≤ x_min vagy y_max ≤ y_min)"

    return True, None


def validate_grid(nodes: Any, margin: Any) -> Tuple[bool, Optional[str]]:
    """
    Rács felbontás és margó validálása

    Args:
        nodes: csomópontok száma x irányban
        margin: margó

    Returns:
        (valid, error_message) tuple
    """
    if not isinstance(nodes, int) or isinstance(nodes, bool):
        return False, f"grid.nodes egész kell legyen: {nodes}"

    if nodes < MIN_NODES:
        return False, f"Túl kicsi felbontás: {nodes} (min {MIN_NODES})"

    if not _is_number(margin) or margin < 0:
        return False, f"grid.margin nemnegatív szám kell legyen: {margin}"

    return True, None


def validate_exponents(alpha: Sequence[Any]) -> Tuple[bool, Optional[str]]:
    """
    Hölder kitevő lista validálása

    Returns:
        (valid, error_message) tuple
    """
    if not isinstance(alpha, (list, tuple)) or len(alpha) == 0:
        return False, "alpha nem üres lista kell legyen"

    for a in alpha:
        if not _is_number(a) or not 0 < a < 1:
            return False, f"Érvénytelen Hölder kitevő: {a} (0 és 1 között)"

    return True, None


def validate_stage_settings(stage: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
    """
    Stage beállítások validálása

    Returns:
        (valid, error_message) tuple
    """
    lambdas = stage.get('lambdas')
    if not isinstance(lambdas, (list, tuple)) or len(lambdas) == 0:
        return False, "stage.lambdas nem lehet üres"

    if any(not _is_number(lam) or lam <= 0 for lam in lambdas):
        return False, f"stage.lambdas pozitív számokat vár: {lambdas}"

    for key in ('l', 'M', 'gamma', 'beta'):
        if not _is_number(stage.get(key)):
            return False, f"stage.{key} hiányzik vagy nem szám"

    if stage['l'] <= 0:
        return False, f"stage.l pozitív kell legyen: {stage['l']}"

    if not 0 < stage['gamma'] < 1:
        return False, f"stage.gamma (0,1)-ben kell legyen: {stage['gamma']}"

    if not 0 < stage['beta'] <= 1:
        return False, f"stage.beta (0,1]-ben kell legyen: {stage['beta']}"

    r0 = stage.get('r0')
    if r0 is not None and (not _is_number(r0) or r0 <= 0):
        return False, f"stage.r0 pozitív szám vagy null: {r0}"

    return True, None


def validate_nk_settings(nk: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
    """
    Nash-Kuiper beállítások validálása

    Returns:
        (valid, error_message) tuple
    """
    if nk.get('mode') not in NK_MODES:
        return False, f"Érvénytelen nk.mode: {nk.get('mode')} (engedélyezett: {sorted(NK_MODES)})"

    iterations = nk.get('iterations')
    if not isinstance(iterations, int) or iterations < 1:
        return False, f"nk.iterations pozitív egész kell legyen: {iterations}"

    ratio = nk.get('l_ratio')
    if not _is_number(ratio) or not 0 < ratio < 1:
        return False, f"nk.l_ratio (0,1)-ben kell legyen: {ratio}"

    if not _is_number(nk.get('lambda_l')) or nk['lambda_l'] <= 1:
        return False, f"nk.lambda_l > 1 szükséges: {nk.get('lambda_l')}"

    if not _is_number(nk.get('constant_C')) or nk['constant_C'] < 1:
        return False, f"nk.constant_C ≥ 1 szükséges: {nk.get('constant_C')}"

    return True, None


def validate_experiment_config(raw: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
    """
    Teljes kísérlet konfiguráció validálása

    Args:
        raw: az összefésült konfiguráció dictionary

    Returns:
        (valid, error_message) tuple
    """
    checks = [
        validate_domain(raw.get('domain')),
        validate_grid(raw.get('grid', {}).get('nodes'), raw.get('grid', {}).get('margin')),
        validate_exponents(raw.get('alpha')),
        validate_stage_settings(raw.get('stage') or {}),
        validate_nk_settings(raw.get('nk') or {}),
    ]
    for valid, error in checks:
        if not valid:
            logger.debug(f"Config validáció sikertelen: {error}")
            return False, error

    k = raw.get('k')
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        return False, f"k pozitív egész kell legyen: {k}"

    problem = raw.get('problem') or {}
    if not isinstance(problem.get('name'), str) or not problem['name']:
        return False, "problem.name hiányzik"

    formats = raw.get('output', {}).get('formats') or []
    unknown = set(formats) - OUTPUT_FORMATS
    if unknown:
        return False, f"Ismeretlen kimeneti formátum: {sorted(unknown)}"

    epsilon = (raw.get('flex') or {}).get('epsilon')
    if not _is_number(epsilon) or not 0 < epsilon < 1:
        return False, f"flex.epsilon (0,1)-ben kell legyen: {epsilon}"

    target = (raw.get('flex') or {}).get('target')
    if target is not None and (not _is_number(target) or target <= 0):
        return False, f"flex.target pozitív szám vagy null: {target}"

    threads = raw.get('threads')
    if not isinstance(threads, int) or threads < 1:
        return False, f"threads pozitív egész kell legyen: {threads}"

    seed = raw.get('seed')
    if not isinstance(seed, int) or seed < 0:
        return False, f"seed nemnegatív egész kell legyen: {seed}"

    reduction = (raw.get('assertions') or {}).get('deficit_reduction')
    if reduction is not None and (not _is_number(reduction) or not 0 < reduction <= 1):
        return False, f"assertions.deficit_reduction (0,1]-ben kell legyen vagy null: {reduction}"

    return True, None
