from sqlalchemy import Column, Unicode, DateTime
from sqlalchemy.types import JSON

from captiongan import settings
from captiongan.model.base import Base, db, RUN_NAME_LEN


class Run(Base):
    """One execution of a pipeline stage (or a whole sweep point), with the
    resolved configuration it ran under and the metrics it produced."""

    __tablename__ = "run"

    STARTED = "started"
    COMPLETED = "completed"
    FAILED = "failed"

    name = Column(Unicode(RUN_NAME_LEN), primary_key=True)
    kind = Column(Unicode, primary_key=True)
    status = Column(Unicode, nullable=False)
    started_at = Column(DateTime, nullable=False)
    ended_at = Column(DateTime, nullable=True)
    sweep = Column(Unicode, index=True, nullable=True)
    config = Column(JSON, nullable=False)
    metrics = Column(JSON, nullable=True)
    error = Column(Unicode, nullable=True)

    @classmethod
    def start(cls, name, kind, config, sweep=None):
        run = db.session.get(cls, (name, kind))
        if run is None:
            run = cls()
            run.name = name
            run.kind = kind
        run.status = cls.STARTED
        run.started_at = settings.RUN_TIME
        run.ended_at = None
        run.sweep = sweep
        run.config = config
        run.metrics = None
        run.error = None
        db.session.add(run)
        return run

    def finish(self, metrics=None, error=None):
        self.status = self.FAILED if error is not None else self.COMPLETED
        self.ended_at = settings.RUN_TIME
        self.metrics = metrics
        self.error = error
        db.session.add(self)

    @classmethod
    def query(cls, sweep=None):
        q = db.session.query(cls)
        if sweep is not None:
            q = q.filter(cls.sweep == sweep)
        return q.order_by(cls.name.asc(), cls.kind.asc())

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "status": self.status,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "sweep": self.sweep,
            "config": self.config,
            "metrics": self.metrics,
            "error": self.error,
        }
