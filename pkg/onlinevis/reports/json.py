__package__ = 'onlinevis.reports'

from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from ..config.constants import CONSTANTS
from ..config.version import VERSION
from ..misc.system import atomic_write
from ..misc.util import enforce_types


def report_header(kind: str) -> Dict[str, Any]:
    return {
        'schema': f'onlinevis.{kind}',
        'meta': {
            'project': 'onlinevis',
            'version': VERSION,
        },
    }


@enforce_types
def write_json_report(path: Union[Path, str], kind: str, body: dict) -> Path:
    atomic_write(path, {**report_header(kind), **body})
    return Path(path)


def write_resolved_config(out_dir: Union[Path, str], config_sets: Dict[str, Any], run_info: Optional[Dict[str, Any]]=None) -> Path:
    """Merged model_dump() of every config set in play, plus how the run was invoked"""
    resolved = {name: config.to_dict() for name, config in config_sets.items()}
    return write_json_report(Path(out_dir) / CONSTANTS.RESOLVED_CONFIG_FILENAME, 'resolved_config', {
        'config': resolved,
        'run': run_info or {},
    })


def write_metrics(out_dir: Union[Path, str], metrics: Dict[str, Any]) -> Path:
    return write_json_report(Path(out_dir) / CONSTANTS.METRICS_FILENAME, 'metrics', metrics)


def write_gradcheck_report(out_dir: Union[Path, str], results: Iterable, tolerance: float) -> Path:
    results = list(results)
    return write_json_report(Path(out_dir) / CONSTANTS.GRADCHECK_FILENAME, 'gradcheck', {
        'tolerance': tolerance,
        'passed': all(result.passed for result in results),
        'results': [result.to_dict() for result in results],
    })
