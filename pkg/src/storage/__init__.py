"""
Storage for obscert: a SQLite ledger of experiment runs and the constants
they certified.
"""

from .models import Base, CertificateRecord, ExperimentRun, RunStatus, init_db
from .run_store import RunStore

__all__ = [
    "Base",
    "CertificateRecord",
    "ExperimentRun",
    "RunStatus",
    "RunStore",
    "init_db",
]
