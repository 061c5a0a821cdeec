"""Tracking coordinated senders seen by a network telescope."""

__version__ = "0.1.0"

from darktrack.config import RunConfig                     # noqa: E402
from darktrack.pipeline import Pipeline                    # noqa: E402
from darktrack.remote import ArchiveOpts, SensorArchive    # noqa: E402

__all__ = ['ArchiveOpts', 'Pipeline', 'RunConfig', 'SensorArchive',
           '__version__']
