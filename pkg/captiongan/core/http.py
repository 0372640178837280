import hashlib
import requests
import structlog

from captiongan import settings

log = structlog.get_logger("http")
HEADERS = {"User-Agent": settings.USER_AGENT}


def fetch_download(file_path, url):
    """Stream a remote file to disk."""
    session = requests.Session()
    session.headers.update(HEADERS)
    log.info("Fetching resource", path=file_path.as_posix(), url=url)
    file_path.parent.mkdir(exist_ok=True, parents=True)
    tmp_path = file_path.with_name(file_path.name + ".part")
    with session.get(url, stream=True, timeout=settings.HTTP_TIMEOUT) as res:
        res.raise_for_status()
        with open(tmp_path, "wb") as handle:
            for chunk in res.iter_content(chunk_size=8192 * 16):
                handle.write(chunk)
    tmp_path.replace(file_path)


def fetch_cached(url):
    """Download a URL into the cache directory once and return the local
    path of the copy."""
    digest = hashlib.sha1(url.encode("utf-8")).hexdigest()
    suffix = url.rsplit("/", 1)[-1].rsplit(".", 1)[-1][:5]
    file_path = settings.CACHE_PATH.joinpath("images", f"{digest}.{suffix}")
    if not file_path.exists():
        fetch_download(file_path, url)
    return file_path
