from captiongan.model.base import db, connect_db, ensure_db
from captiongan.model.issue import Issue
from captiongan.model.run import Run


__all__ = ["db", "connect_db", "ensure_db", "Issue", "Run"]
