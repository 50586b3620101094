import datetime


def rfc3339_timestamp(dt: datetime.datetime) -> str:
    """
    Generate an :RFC:`3339`-formatted timestamp in UTC time zone from a
    :class:`datetime.datetime`, keeping microseconds.
    >>> import datetime as dtm
    >>> rfc3339_timestamp(dtm.datetime(2009,1,1,12,59,59,250,dtm.timezone.utc))
    '2009-01-01T12:59:59.000250Z'
    If timestamp is naive, local time zone is used to calculate shift.
    """
    dt = dt.astimezone(datetime.timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def utc_now() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc)
