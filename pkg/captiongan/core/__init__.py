import logging

from captiongan import settings
from captiongan.core.logs import configure_logging
from captiongan.model import connect_db


def setup(log_level=logging.INFO, database_uri=None):
    """Configure the framework."""
    settings.DATA_PATH.mkdir(parents=True, exist_ok=True)
    connect_db(database_uri)
    configure_logging(level=log_level)
