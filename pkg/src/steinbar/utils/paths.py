import os
from pathlib import Path

UTILS_DIR = Path(__file__).resolve().parent
SOURCE_DIR = UTILS_DIR.parent
PROJECT_DIR = SOURCE_DIR.parent.parent
CONFIG_PATH = PROJECT_DIR.joinpath("config.toml")
CONFIGS_DIR = PROJECT_DIR / "configs"
RUNDATA_DIR = PROJECT_DIR.joinpath("run_data")

OUT_DIR_ENV = "STEINBAR_OUT_DIR"


def default_out_dir() -> Path:
    """Output directory: $STEINBAR_OUT_DIR if set, else run_data/ under the project."""
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else RUNDATA_DIR
