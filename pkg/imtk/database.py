"""Engine and sessions for the run registry (one row per CLI invocation).

The URL comes from IMTK_DATABASE_URL; SQLite is the default so a checkout works
without a server. Tests point it at a temporary file and call reset_engine().
"""

from contextlib import contextmanager

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from imtk.config import Settings

Base = declarative_base()

_registry_engine = None
_RegistrySession = None


def get_engine():
    global _registry_engine
    if _registry_engine is None:
        _registry_engine = create_engine(Settings.DATABASE_URL)
    return _registry_engine


def reset_engine():
    """Drop the cached engine so a changed DATABASE_URL takes effect."""
    global _registry_engine, _RegistrySession
    if _registry_engine is not None:
        _registry_engine.dispose()
    _registry_engine = None
    _RegistrySession = None


def init_db():
    """Create the runs table if the registry is new."""
    Base.metadata.create_all(bind=get_engine())


@contextmanager
def get_session():
    """Registry session committed on success and rolled back if recording a run fails."""
    global _RegistrySession
    if _RegistrySession is None:
        _RegistrySession = sessionmaker(autocommit=False, autoflush=False, bind=get_engine())
    session = _RegistrySession()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
