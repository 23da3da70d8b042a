import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseSettings):
    PROJECT_NAME: str = "CMPP Measure-Change Lab"
    LOG_LEVEL: str = "INFO"

    # Reports
    OUTPUT_DIR: str = os.getenv("CMPP_OUTPUT_DIR", "reports")
    DEFAULT_FORMAT: str = "csv"  # "csv" or "jsonl"

    # Monte Carlo defaults (scenario files and CLI flags override these)
    DEFAULT_SEED: int = 20190521
    DEFAULT_PATHS: int = 20_000
    DEFAULT_HORIZON: float = 2.0

    # Path generation
    WORKERS: int = int(os.getenv("CMPP_WORKERS", "1"))
    CHUNK_SIZE: int = 5_000

    class Config:
        case_sensitive = True

settings = Settings()
