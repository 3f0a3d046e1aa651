"""
Unit tests for storage models.

Tests model methods, serialization and table creation.
"""

from datetime import datetime, timedelta

import pytest

from src.storage.models import (
    CertificateRecord,
    ExperimentRun,
    RunStatus,
    init_db,
)


class TestExperimentRun:
    """Tests for ExperimentRun model."""

    def test_duration(self):
        """Test duration from start and completion times."""
        start = datetime(2024, 1, 1, 12, 0, 0)
        run = ExperimentRun(started_at=start, completed_at=start + timedelta(seconds=2.5))
        assert run.duration_sec == pytest.approx(2.5)

    def test_duration_while_running(self):
        """Test that an unfinished run has zero duration."""
        run = ExperimentRun(started_at=datetime(2024, 1, 1))
        assert run.duration_sec == 0.0

    def test_to_dict(self):
        """Test serialization to dictionary."""
        run = ExperimentRun(
            id=3,
            run_iri="urn:uuid:abc",
            command="cert",
            config_hash="f" * 64,
            seed=str(2 ** 64 - 1),
            threads=4,
            status=RunStatus.SUCCEEDED,
            exit_code=0,
        )

        data = run.to_dict()

        assert data["command"] == "cert"
        assert data["seed"] == 2 ** 64 - 1
        assert data["status"] == "succeeded"
        assert data["certificates"] == 0
        assert data["completed_at"] is None


class TestCertificateRecord:
    """Tests for CertificateRecord model."""

    def test_to_dict(self):
        """Test serialization keeps the log value and provenance."""
        record = CertificateRecord(
            name="C_obs",
            value=None,
            log_value=2575.0,
            certificate_iri="urn:uuid:def",
            provenance={"method": "closed"},
        )

        data = record.to_dict()

        assert data["value"] is None
        assert data["log_value"] == 2575.0
        assert data["provenance"] == {"method": "closed"}


class TestInitDb:
    """Tests for init_db."""

    def test_creates_tables(self, temp_db_path):
        """Test that a run with certificates can be stored and read back."""
        session = init_db(temp_db_path)
        try:
            run = ExperimentRun(run_iri="urn:uuid:1", command="thickness", config_hash="0" * 64, seed="7")
            run.certificates.append(
                CertificateRecord(certificate_iri="urn:uuid:2", name="rho", value=0.5, log_value=None)
            )
            session.add(run)
            session.commit()

            loaded = session.query(ExperimentRun).one()
            assert loaded.status == RunStatus.RUNNING
            assert loaded.started_at is not None
            assert [c.name for c in loaded.certificates] == ["rho"]
        finally:
            session.close()
