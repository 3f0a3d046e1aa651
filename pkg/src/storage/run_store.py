"""
Run ledger operations.

Records every experiment run and the constants it produced in SQLite so runs
can be compared across seeds and configs.
"""

import logging
import math
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Union

from sqlalchemy import func
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session, selectinload, sessionmaker

from ..base import ArtifactIOError
from ..provenance import certificate_iri
from .models import Base, CertificateRecord, ExperimentRun, RunStatus, create_sqlite_engine

logger = logging.getLogger(__name__)


class RunStore:
    """
    SQLite-backed ledger of experiment runs.

    Usage:
        store = RunStore("out/runs.db")
        run_id = store.start_run(run_iri, "cert", digest, seed=7, threads=1)
        store.add_certificates(run_id, {"C_obs": {"value": value, "log_value": log_value}})
        store.finish_run(run_id, exit_code=0)
    """

    def __init__(self, db_path: Union[str, Path] = "runs.db", timeout: float = 5.0):
        self.db_path = str(db_path)
        try:
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
            self.engine = create_sqlite_engine(self.db_path, timeout)
            Base.metadata.create_all(self.engine)
        except Exception as exc:
            raise ArtifactIOError(f"cannot open run ledger {self.db_path}: {exc}") from exc
        self.SessionLocal = sessionmaker(bind=self.engine, expire_on_commit=False)

    def get_session(self) -> Session:
        return self.SessionLocal()

    @contextmanager
    def session_scope(self) -> Iterator[Session]:
        """Transaction scope; database failures surface as ``ArtifactIOError``."""
        session = self.get_session()
        try:
            yield session
            session.commit()
        except SQLAlchemyError as exc:
            session.rollback()
            raise ArtifactIOError(f"run ledger {self.db_path}: {exc}") from exc
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def start_run(
        self,
        run_iri: str,
        command: str,
        config_hash: str,
        seed: int,
        threads: int = 1,
        output_dir: Optional[str] = None,
        versions: Optional[Mapping[str, str]] = None,
    ) -> int:
        with self.session_scope() as session:
            run = ExperimentRun(
                run_iri=run_iri,
                command=command,
                config_hash=config_hash,
                seed=str(seed),
                threads=threads,
                output_dir=output_dir,
                versions=dict(versions or {}),
                status=RunStatus.RUNNING,
            )
            session.add(run)
            session.flush()
            return run.id

    def add_certificates(self, run_id: int, constants: Mapping[str, Mapping[str, Any]]) -> int:
        """
        Store constants keyed by name; each entry may carry ``value``,
        ``log_value`` and ``provenance``. Non-finite values are stored as NULL.
        """
        with self.session_scope() as session:
            run = session.get(ExperimentRun, run_id)
            if run is None:
                raise KeyError(f"no run with id {run_id}")
            for name, entry in constants.items():
                session.add(
                    CertificateRecord(
                        run_id=run_id,
                        certificate_iri=certificate_iri(run.run_iri, name),
                        name=name,
                        value=_finite_or_none(entry.get("value")),
                        log_value=_finite_or_none(entry.get("log_value")),
                        provenance=entry.get("provenance"),
                    )
                )
        return len(constants)

    def finish_run(self, run_id: int, exit_code: int, error: Optional[BaseException] = None) -> None:
        with self.session_scope() as session:
            run = session.get(ExperimentRun, run_id)
            if run is None:
                raise KeyError(f"no run with id {run_id}")
            run.exit_code = exit_code
            run.status = RunStatus.SUCCEEDED if exit_code == 0 else RunStatus.FAILED
            run.completed_at = datetime.now(timezone.utc)
            if error is not None:
                run.error_type = type(error).__name__
                run.error_message = str(error)

    def get_run(self, run_id: int) -> Optional[ExperimentRun]:
        with self.session_scope() as session:
            return (
                session.query(ExperimentRun)
                .options(selectinload(ExperimentRun.certificates))
                .filter(ExperimentRun.id == run_id)
                .first()
            )

    def list_runs(self, command: Optional[str] = None, limit: int = 50) -> List[ExperimentRun]:
        with self.session_scope() as session:
            query = session.query(ExperimentRun).options(selectinload(ExperimentRun.certificates))
            if command:
                query = query.filter(ExperimentRun.command == command)
            return query.order_by(ExperimentRun.id.desc()).limit(limit).all()

    def certificate_history(self, name: str, config_hash: Optional[str] = None) -> List[Dict[str, Any]]:
        """Every stored value of one constant, oldest first."""
        with self.session_scope() as session:
            query = (
                session.query(CertificateRecord, ExperimentRun)
                .join(ExperimentRun, CertificateRecord.run_id == ExperimentRun.id)
                .filter(CertificateRecord.name == name)
            )
            if config_hash:
                query = query.filter(ExperimentRun.config_hash == config_hash)
            return [
                {**cert.to_dict(), "run_id": run.id, "seed": int(run.seed)}
                for cert, run in query.order_by(CertificateRecord.id).all()
            ]

    def get_statistics(self) -> Dict[str, Any]:
        with self.session_scope() as session:
            by_status = dict(
                session.query(ExperimentRun.status, func.count(ExperimentRun.id))
                .group_by(ExperimentRun.status)
                .all()
            )
            by_command = dict(
                session.query(ExperimentRun.command, func.count(ExperimentRun.id))
                .group_by(ExperimentRun.command)
                .all()
            )
            return {
                "total_runs": sum(by_command.values()),
                "by_status": {status.value: count for status, count in by_status.items()},
                "by_command": by_command,
                "certificates": session.query(func.count(CertificateRecord.id)).scalar(),
            }


def _finite_or_none(value: Any) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None
