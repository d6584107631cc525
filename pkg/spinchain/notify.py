"""Completion notices for long sweeps, posted as JSON to a webhook."""

import logging
from dataclasses import asdict, dataclass, field

import requests

from . import __version__

logger = logging.getLogger(__name__)

POST_TIMEOUT = 10.0


@dataclass(frozen=True)
class SweepNotice:
    """Outcome of one sweep command."""
    command: str
    config_hash: str
    points: int
    failed: list[float] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failed

    def payload(self) -> dict:
        return {
            "tool": "spinchain",
            "version": __version__,
            "status": "ok" if self.ok else "failed",
            "summary": self.summary(),
            **asdict(self),
        }

    def summary(self) -> str:
        if self.ok:
            return f"{self.command}: {self.points} points done in {self.elapsed:.1f}s"
        return f"{self.command}: {len(self.failed)} of {self.points} points failed"


def post_notice(url: str | None, notice: SweepNotice) -> bool:
    """POST the notice as JSON to `url`.

    No url means nothing to do. Returns False on any transport or HTTP
    error; a notice never stops a sweep.
    """
    if not url:
        return True
    try:
        response = requests.post(url, json=notice.payload(), timeout=POST_TIMEOUT)
        response.raise_for_status()
    except requests.RequestException as e:
        logger.warning("Sweep notice to %s failed: %s", url, e)
        return False
    logger.info("Posted %s", notice.summary())
    return True
