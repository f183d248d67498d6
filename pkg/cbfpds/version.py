from collections import UserString
from pathlib import Path
from typing import Optional


class VersionProxy(UserString):
    """
    Lazily resolved package version.

    The lookup order is:

    1. ``setuptools_scm`` when running from a source checkout
    2. the ``_version.py`` file written at build time
    3. installed distribution metadata
    4. ``0.0.unknown`` if nothing else is available

    Nothing is resolved until the string value is first used, which keeps
    ``import cbfpds`` fast.
    """
    def __init__(self):
        self._version = None

    def _get_version(self) -> Optional[str]:
        repo_root = Path(__file__).resolve().parent.parent
        if (repo_root / '.git').exists():
            try:
                from setuptools_scm import get_version
                return get_version(root='..', relative_to=__file__)
            except (ImportError, LookupError):
                ...
        try:
            from ._version import version  # noqa: F401
            return version
        except ImportError:
            ...
        try:
            from importlib.metadata import PackageNotFoundError
            from importlib.metadata import version as dist_version
            return dist_version('cbfpds')
        except PackageNotFoundError:
            ...
        return None

    @property
    def data(self) -> str:
        if self._version is None:
            self._version = self._get_version() or '0.0.unknown'
        return self._version


__version__ = version = VersionProxy()
