import itertools
import structlog
from pathlib import Path
from banal import ensure_list, is_mapping

from captiongan import settings
from captiongan.exc import CaptionError, ConfigError
from captiongan.util import load_yaml, joinslug
from captiongan.core.context import RunContext
from captiongan.core.export import write_csv
from captiongan.core.pipeline import full_run

log = structlog.get_logger(__name__)


def dotted(values):
    """``{"a.b": 1}`` to ``{"a": {"b": 1}}``."""
    nested = {}
    for key, value in values.items():
        parts = str(key).split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


class SweepPoint(object):
    def __init__(self, name, overrides):
        self.name = name
        self.overrides = dict(overrides)

    def to_dict(self):
        return {"name": self.name, "overrides": self.overrides}


class Sweep(object):
    """A set of runs over a grid of config overrides, each point running
    the whole pipeline (initialization, adversarial training, inference
    and evaluation). Sweeps are defined in YAML files in the metadata
    directory: explicit ``points`` and/or a cartesian ``grid``."""

    def __init__(self, file_path, config):
        self.file_path = file_path
        self.name = config.get("name", file_path.stem if file_path else "sweep")
        self.title = config.get("title", self.name)
        self.description = config.get("description", "")
        self.base = config.get("base")
        self.points = self._expand(config)
        if not len(self.points):
            raise ConfigError("Sweep has no points", sweep=self.name)
        names = [p.name for p in self.points]
        if len(set(names)) != len(names):
            raise ConfigError("Sweep point names must be unique", sweep=self.name)

    def _expand(self, config):
        points = []
        for item in ensure_list(config.get("points")):
            if not is_mapping(item) or "name" not in item:
                raise ConfigError("Sweep points need a name", sweep=self.name)
            points.append(SweepPoint(str(item["name"]), item.get("set") or {}))
        grid = config.get("grid") or {}
        if not is_mapping(grid):
            raise ConfigError("Sweep grid must be a mapping", sweep=self.name)
        keys = list(grid.keys())
        if not len(keys):
            return points
        for values in itertools.product(*(ensure_list(grid[k]) for k in keys)):
            overrides = dict(zip(keys, values))
            parts = [f"{k.split('.')[-1]}-{v}" for k, v in overrides.items()]
            points.append(SweepPoint(joinslug(*parts), overrides))
        return points

    @classmethod
    def load(cls, name):
        """Load a sweep by name from the metadata directory, or from a
        file path."""
        file_path = settings.METADATA_PATH.joinpath("sweeps", f"{name}.yml")
        if not file_path.exists():
            file_path = Path(name)
        if not file_path.exists():
            raise ConfigError(f"Unknown sweep: {name}", sweep=name)
        return cls(file_path, load_yaml(file_path) or {})

    @classmethod
    def names(cls):
        path = settings.METADATA_PATH.joinpath("sweeps")
        return sorted(p.stem for p in path.glob("*.yml"))

    def point_config(self, base, point):
        config = base.override(dotted(point.overrides))
        return config.override({"name": joinslug(self.name, point.name)})

    @property
    def path(self):
        return settings.RUNS_PATH.joinpath(self.name)

    def run(self, base, runner=full_run):
        """Run every point in order and collate one CSV row per point. A
        failing point is recorded and the sweep carries on."""
        rows = []
        for point in self.points:
            config = self.point_config(base, point)
            context = RunContext(
                config,
                "sweep",
                run_dir=self.path.joinpath(point.name),
                sweep=self.name,
            )
            row = {"point": point.name, "status": "completed", "error": None}
            row.update(point.overrides)
            try:
                context.execute(runner)
            except CaptionError as exc:
                row.update(status="failed", error=exc.message)
            except Exception as exc:
                row.update(status="failed", error=str(exc))
            row.update(context.metrics or {})
            rows.append(row)
        self.path.mkdir(parents=True, exist_ok=True)
        lead = ["point", "status", "error"]
        rest = sorted(set(k for row in rows for k in row.keys()) - set(lead))
        write_csv(self.path.joinpath("sweep.csv"), rows, lead + rest)
        failed = [r["point"] for r in rows if r["status"] == "failed"]
        log.info("Sweep completed", sweep=self.name, points=len(rows), failed=failed)
        return rows

    def to_dict(self):
        return {
            "name": self.name,
            "title": self.title,
            "description": self.description,
            "base": self.base,
            "points": [p.to_dict() for p in self.points],
        }
