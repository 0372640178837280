# Settings configuration for captiongan
# Below settings can be configured via environment variables, which makes
# them easy to access in a batch job or a container.
from pathlib import Path
from datetime import datetime
from os import environ as env

# All data storage (e.g. a mounted volume)
DATA_PATH = Path.cwd().joinpath("data")
DATA_PATH = env.get("CAPTIONGAN_DATA_PATH", DATA_PATH)
DATA_PATH = Path(DATA_PATH).resolve()

# Run directories: checkpoints, step logs, reports
RUNS_PATH = DATA_PATH.joinpath("runs")
RUNS_PATH = env.get("CAPTIONGAN_RUNS_PATH", RUNS_PATH)
RUNS_PATH = Path(RUNS_PATH).resolve()

# Aggregate embeddings and downloaded image payloads
CACHE_PATH = DATA_PATH.joinpath("cache")
CACHE_PATH = env.get("CAPTIONGAN_CACHE_PATH", CACHE_PATH)
CACHE_PATH = Path(CACHE_PATH).resolve()

# Ledger of runs and logged issues
DATABASE_URI = "sqlite:///%s" % DATA_PATH.joinpath("captiongan.sqlite3")
DATABASE_URI = env.get("CAPTIONGAN_DATABASE_URI", DATABASE_URI)

# Per-run timestamp
RUN_TIME = datetime.utcnow().replace(microsecond=0)

# Directory with bundled run configurations and sweep grids
METADATA_PATH = Path(__file__).resolve().parent.joinpath("metadata")
METADATA_PATH = env.get("CAPTIONGAN_METADATA_PATH", METADATA_PATH)
METADATA_PATH = Path(METADATA_PATH).resolve()

# Torch device for model code; the reproducibility contract holds on "cpu"
DEVICE = env.get("CAPTIONGAN_DEVICE", "cpu")

# User agent for image payload downloads
USER_AGENT = "Mozilla/5.0 (any) captiongan"
HTTP_TIMEOUT = 60
