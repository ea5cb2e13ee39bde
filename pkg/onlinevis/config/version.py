__package__ = 'onlinevis.config'

import importlib.metadata

from pathlib import Path
from functools import cache

#############################################################################################

PACKAGE_DIR: Path = Path(__file__).resolve().parent.parent    # onlinevis source code dir

#############################################################################################


@cache
def detect_installed_version(PACKAGE_DIR: Path=PACKAGE_DIR):
    """Autodetect the installed onlinevis version by using pip package metadata or the pyproject.toml file"""
    try:
        # if in production install, use pip-installed package metadata
        return importlib.metadata.version('onlinevis').strip()
    except importlib.metadata.PackageNotFoundError:
        pass

    try:
        # if in dev Git repo dir, use pyproject.toml file
        pyproject_config = (PACKAGE_DIR.parent / 'pyproject.toml').read_text().split('\n')
        for line in pyproject_config:
            if line.startswith('version = '):
                return line.split(' = ', 1)[-1].strip('"').strip()
    except FileNotFoundError:
        pass

    return 'dev'


@cache
def get_dependency_versions() -> dict:
    versions = {}
    for dist in ('numpy', 'scipy', 'pydantic', 'pydantic-settings', 'rich'):
        try:
            versions[dist] = importlib.metadata.version(dist)
        except importlib.metadata.PackageNotFoundError:
            versions[dist] = None
    return versions


VERSION: str = detect_installed_version()
