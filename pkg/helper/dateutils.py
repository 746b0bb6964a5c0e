import os
from datetime import datetime

import pytz


class DateUtils:
    """
    Utility class for run timestamps with consistent timezone support
    """

    @staticmethod
    def get_timezone():
        """Get the configured timezone, defaults to UTC"""
        timezone_name = os.getenv("TIMEZONE", "UTC")
        return pytz.timezone(timezone_name)

    @staticmethod
    def now():
        """Get current datetime in the configured timezone"""
        return datetime.now(DateUtils.get_timezone())

    @staticmethod
    def format_timestamp(dt=None, format_string="%Y-%m-%dT%H:%M:%S%z"):
        """Format a timestamp for provenance headers"""
        dt = dt or DateUtils.now()
        return dt.strftime(format_string)

    @staticmethod
    def localize_datetime(dt):
        """Localize a naive datetime to the configured timezone"""
        if dt.tzinfo is None:
            return DateUtils.get_timezone().localize(dt)
        return dt
