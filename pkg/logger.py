import logging
from pathlib import Path

from rich.logging import RichHandler

logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler()]
)
logger = logging.getLogger("es")

RUN_LOG_FORMAT = "%(asctime)s %(levelname)s %(message)s"


def attach_run_log(path: Path) -> logging.Handler:
    """Mirror log records into a plain timestamped file, e.g. run_dir/log.txt"""
    handler = logging.FileHandler(path, mode="a", encoding="utf8")
    handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT))
    logger.addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler):
    logger.removeHandler(handler)
    handler.close()
