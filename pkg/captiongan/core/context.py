import yaml
import structlog
from pathlib import Path
from structlog.contextvars import clear_contextvars, bind_contextvars

from captiongan import settings
from captiongan.exc import CaptionError
from captiongan.model import db, Issue, Run


class RunContext(object):
    """A utility object passed into pipeline stages, which supplies the
    run directory and the resolved config, and records the stage in the
    run ledger. Warnings and errors logged while a stage executes are
    stored as issues of the run."""

    def __init__(self, config, stage, run_dir=None, sweep=None):
        self.config = config
        self.stage = stage
        self.sweep = sweep
        self.name = config.name
        if run_dir is None:
            run_dir = settings.RUNS_PATH.joinpath(config.name)
        self.path = Path(run_dir)
        self.log = structlog.get_logger(stage)
        self.metrics = None

    def get_path(self, name):
        return self.path.joinpath(name)

    def write_config(self):
        """Echo the resolved config into the run directory."""
        self.path.mkdir(parents=True, exist_ok=True)
        with open(self.get_path("config.yml"), "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.config.to_dict(), fh, sort_keys=True)

    def bind(self):
        bind_contextvars(run=self.name, stage=self.stage)

    def execute(self, method, *args, **kwargs):
        """Run a stage function, ``method(context, ...)``. Errors are logged
        against the run and re-raised."""
        run = None
        try:
            self.bind()
            self.clear()
            run = Run.start(self.name, self.stage, self.config.to_dict(), self.sweep)
            db.session.commit()
            self.write_config()
            self.log.info("Begin stage")
            result = method(self, *args, **kwargs)
            run.finish(metrics=self.metrics)
            self.log.info("Stage completed")
            return result
        except KeyboardInterrupt:
            db.session.rollback()
            raise
        except CaptionError as exc:
            db.session.rollback()
            self.log.error(exc.message, kind=exc.kind, **exc.context)
            self._fail(run, exc.message)
            raise
        except Exception as exc:
            db.session.rollback()
            self.log.exception("Stage failed")
            self._fail(run, str(exc))
            raise
        finally:
            self.close()

    def _fail(self, run, message):
        if run is not None:
            run = db.session.merge(run)
            run.finish(metrics=self.metrics, error=message)

    def clear(self):
        """Drop the issues left by an earlier execution of this stage."""
        Issue.clear(self.name, self.stage)
        db.session.commit()

    def close(self):
        clear_contextvars()
        db.session.commit()
