"""Exact small-instance tools for Sherali-Adams refutations of the k-clique formula."""
from importlib.resources import files

__version__ = "0.1.0"


def data_path(name: str) -> str:
    """Path of a bundled data file."""
    return str(files(__name__) / "data" / name)
