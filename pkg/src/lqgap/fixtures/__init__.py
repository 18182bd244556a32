"""Games with matrices as printed in the source study, shipped as JSON files."""

from importlib import resources
from pathlib import Path

NAMES = ("g1.json", "g2.json", "g3.json", "g4.json", "example1_g.json", "example1_ghat.json")


def path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files(__name__).joinpath(name)))


def load(name: str):
    from lqgap.game_model import load_game

    return load_game(path(name))
