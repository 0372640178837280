from banal import is_mapping
from sqlalchemy import func, Column, Integer, Unicode, DateTime
from sqlalchemy.types import JSON

from captiongan import settings
from captiongan.model.base import Base, db, RUN_NAME_LEN


class Issue(Base):
    """A warning or error logged while a run was bound to the logging
    context."""

    __tablename__ = "issue"

    id = Column(Integer, primary_key=True)
    timestamp = Column(DateTime, nullable=False)
    level = Column(Unicode, nullable=False)
    module = Column(Unicode)
    run = Column(Unicode(RUN_NAME_LEN), index=True, nullable=False)
    stage = Column(Unicode, nullable=True)
    message = Column(Unicode)
    data = Column(JSON, nullable=False)

    @classmethod
    def save(cls, event):
        data = dict(event)
        for key, value in data.items():
            if hasattr(value, "to_dict"):
                value = value.to_dict()
            if isinstance(value, (set, tuple)):
                value = list(value)
            if not isinstance(value, (str, int, float, bool, list, dict)):
                if value is not None and not is_mapping(value):
                    value = str(value)
            data[key] = value
        data.pop("_record", None)
        data.pop("_from_structlog", None)
        data.pop("timestamp", None)
        issue = cls()
        issue.timestamp = settings.RUN_TIME
        issue.module = data.pop("logger", None)
        issue.level = data.pop("level")
        issue.message = data.pop("event", None)
        issue.run = data.pop("run")
        issue.stage = data.pop("stage", None)
        issue.data = data
        db.session.add(issue)

    @classmethod
    def _filter(cls, q, run=None, stage=None):
        if run is not None:
            q = q.filter(cls.run == run)
        if stage is not None:
            q = q.filter(cls.stage == stage)
        return q

    @classmethod
    def clear(cls, run, stage=None):
        pq = cls._filter(db.session.query(cls), run, stage)
        pq.delete(synchronize_session=False)

    @classmethod
    def query(cls, run=None, stage=None):
        q = cls._filter(db.session.query(cls), run, stage)
        return q.order_by(cls.id.asc())

    @classmethod
    def agg_by_level(cls, run=None, stage=None):
        q = db.session.query(cls.level, func.count(cls.id))
        q = cls._filter(q, run, stage)
        q = q.group_by(cls.level)
        return {l: c for (l, c) in q.all()}

    def to_dict(self):
        return {
            "id": self.id,
            "timestamp": self.timestamp,
            "level": self.level,
            "module": self.module,
            "run": self.run,
            "stage": self.stage,
            "message": self.message,
            "data": self.data,
        }
