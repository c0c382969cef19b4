import os
from pathlib import Path

import dotenv

dotenv.load_dotenv()

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"


class Settings:
    OUT_DIR: str = os.getenv("IMTK_OUT", "")
    SEED: int = int(os.getenv("IMTK_SEED", "42"))
    THREADS: int = int(os.getenv("IMTK_THREADS", "1"))
    DATABASE_URL: str = os.getenv("IMTK_DATABASE_URL", "sqlite:///imtk_runs.db")
    LOG_LEVEL: str = os.getenv("IMTK_LOG_LEVEL", "INFO")
    FIXTURES: str = os.getenv("IMTK_FIXTURES", str(FIXTURE_DIR))
