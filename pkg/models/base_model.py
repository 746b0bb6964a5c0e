from dataclasses import dataclass, field
from datetime import datetime

from helper.dateutils import DateUtils


@dataclass
class BaseRecord:
    """Persisted records carry the timestamp of the run that produced them"""

    created_at: datetime = field(default_factory=DateUtils.now, kw_only=True, compare=False)
