"""
SQLAlchemy models for the run ledger.

    ExperimentRun (one per CLI invocation) ---< CertificateRecord (one per
    certified or measured constant)

Timestamps live only here; CSV and manifest artifacts carry none, so reruns
stay byte-identical.
"""

import enum
from datetime import datetime, timezone
from typing import Any, Dict

from sqlalchemy import (
    JSON,
    Column,
    DateTime,
    Enum as SQLEnum,
    Float,
    ForeignKey,
    Index,
    Integer,
    String,
    Text,
    create_engine,
    event,
)
from sqlalchemy.orm import Session, declarative_base, relationship, sessionmaker

Base = declarative_base()


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class RunStatus(enum.Enum):
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class ExperimentRun(Base):
    """One experiment invocation."""

    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_iri = Column(String(64), nullable=False, index=True)
    command = Column(String(32), nullable=False, index=True)
    config_hash = Column(String(64), nullable=False)
    seed = Column(String(20), nullable=False)  # u64 does not fit SQLite INTEGER
    threads = Column(Integer, default=1)
    output_dir = Column(String(500))

    status = Column(SQLEnum(RunStatus), default=RunStatus.RUNNING, index=True)
    exit_code = Column(Integer)
    error_type = Column(String(64))
    error_message = Column(Text)

    versions = Column(JSON)
    started_at = Column(DateTime, default=_utcnow, index=True)
    completed_at = Column(DateTime)

    certificates = relationship(
        "CertificateRecord", back_populates="run", cascade="all, delete-orphan"
    )

    __table_args__ = (Index("ix_run_command_hash", "command", "config_hash"),)

    @property
    def duration_sec(self) -> float:
        if self.started_at is None or self.completed_at is None:
            return 0.0
        return (self.completed_at - self.started_at).total_seconds()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "run_iri": self.run_iri,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": int(self.seed),
            "threads": self.threads,
            "status": self.status.value if self.status else None,
            "exit_code": self.exit_code,
            "error_type": self.error_type,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "completed_at": self.completed_at.isoformat() if self.completed_at else None,
            "certificates": len(self.certificates),
        }


class CertificateRecord(Base):
    """A named constant produced by a run, with where it came from."""

    __tablename__ = "certificate_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False, index=True)
    certificate_iri = Column(String(64), nullable=False)
    name = Column(String(64), nullable=False, index=True)
    value = Column(Float)
    log_value = Column(Float)
    provenance = Column(JSON)

    run = relationship("ExperimentRun", back_populates="certificates")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "log_value": self.log_value,
            "certificate_iri": self.certificate_iri,
            "provenance": self.provenance,
        }


def create_sqlite_engine(db_path: str, timeout: float = 5.0):
    engine = create_engine(f"sqlite:///{db_path}", echo=False, connect_args={"timeout": timeout})

    @event.listens_for(engine, "connect")
    def set_sqlite_pragma(dbapi_connection, connection_record):
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA foreign_keys=ON")
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
        cursor.close()

    return engine


def init_db(db_path: str = "runs.db") -> Session:
    """Create the tables if needed and return a session."""
    engine = create_sqlite_engine(db_path)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine)()
