"""Runtime settings read from the environment (and a local .env file)."""
import os
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()


class Settings(BaseModel):
    threads: Optional[int] = Field(default=None, ge=1)
    log_level: str = "WARNING"
    trace_project: str = "dplp"
    max_enumeration: int = Field(default=1_000_000, ge=1)

    def worker_count(self, requested: Optional[int] = None) -> int:
        if requested is not None:
            return max(1, requested)
        return self.threads or os.cpu_count() or 1


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    threads = os.environ.get("DPLP_THREADS")
    max_enumeration = os.environ.get("DPLP_MAX_ENUMERATION")
    return Settings(
        threads=int(threads) if threads else None,
        log_level=os.environ.get("DPLP_LOG_LEVEL", "WARNING").upper(),
        trace_project=os.environ.get("DPLP_TRACE_PROJECT", "dplp"),
        max_enumeration=int(max_enumeration) if max_enumeration else 1_000_000,
    )
