import json
import logging
from datetime import datetime

from imtk.database import get_session, init_db
from imtk.models import Run
from imtk.reports import RunManifest

logger = logging.getLogger(__name__)


def record_run(manifest: RunManifest, exit_code: int) -> dict:
    """
    Store one CLI invocation in the run registry.
    Returns:
        Dictionary with the new run id, or an error message when the registry is unavailable
    """
    try:
        init_db()
        with get_session() as session:
            run = Run(
                command=manifest.command,
                config_paths=json.dumps(manifest.config_paths),
                seed=manifest.seed,
                tool_version=manifest.tool_version,
                exit_code=exit_code,
                artifacts=json.dumps(manifest.artifacts),
                started_at=datetime.fromisoformat(manifest.started_at),
                finished_at=datetime.fromisoformat(manifest.finished_at) if manifest.finished_at else None,
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            return {"status": "success", "run_id": run.id}
    except Exception as e:
        logger.warning("run registry unavailable: %s", e)
        return {"status": "error", "message": str(e)}


def list_runs(limit: int = 20) -> dict:
    init_db()
    with get_session() as session:
        rows = session.query(Run).order_by(Run.id.desc()).limit(limit).all()
        return {
            "status": "success",
            "count": len(rows),
            "runs": [
                {
                    "id": r.id,
                    "command": r.command,
                    "config_paths": json.loads(r.config_paths),
                    "seed": r.seed,
                    "tool_version": r.tool_version,
                    "exit_code": r.exit_code,
                    "artifacts": json.loads(r.artifacts),
                    "started_at": r.started_at.isoformat() if r.started_at else None,
                    "finished_at": r.finished_at.isoformat() if r.finished_at else None,
                }
                for r in rows
            ],
        }
