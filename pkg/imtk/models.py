from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Integer, String, Text

from imtk.database import Base


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True, autoincrement=True)
    command = Column(String(64), nullable=False)
    config_paths = Column(Text, nullable=False, default="[]")
    seed = Column(Integer, nullable=False)
    tool_version = Column(String(32), nullable=False)
    exit_code = Column(Integer, nullable=True)
    artifacts = Column(Text, nullable=False, default="[]")
    started_at = Column(
        DateTime, default=lambda: datetime.now(timezone.utc), nullable=False
    )
    finished_at = Column(DateTime, nullable=True)
