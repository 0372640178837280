from collections import namedtuple
from sqlalchemy import create_engine, MetaData
from sqlalchemy.pool import StaticPool
from sqlalchemy.orm import sessionmaker, scoped_session, declarative_base

from captiongan import settings

RUN_NAME_LEN = 128
DIALECTS = ["sqlite", "postgresql"]

metadata = MetaData()
Base = declarative_base(metadata=metadata)
Session = scoped_session(sessionmaker())

db = namedtuple("db", ["session", "metadata", "engine"])
db.session = Session
db.metadata = metadata
db.engine = None


def connect_db(uri=None):
    """Bind the ledger to a database and create missing tables. An
    in-memory SQLite URI keeps a single shared connection."""
    uri = uri or settings.DATABASE_URI
    if uri.startswith("sqlite:///"):
        settings.DATA_PATH.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if uri in ("sqlite://", "sqlite:///:memory:"):
        kwargs["poolclass"] = StaticPool
        kwargs["connect_args"] = {"check_same_thread": False}
    engine = create_engine(uri, **kwargs)
    assert engine.dialect.name in DIALECTS, "Unsupported database engine"
    Session.remove()
    Session.configure(bind=engine)
    db.engine = engine
    metadata.create_all(engine)
    return engine


def ensure_db():
    if db.engine is None:
        connect_db()
