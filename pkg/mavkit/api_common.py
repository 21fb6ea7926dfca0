"""Common plumbing shared by every mavkit module: the exception tree, the
table rendering base class used by the domain objects, time conversion and
the small line-oriented configuration reader."""

import logging
import re
import textwrap
import warnings
from datetime import date, datetime, timezone

from dateutil import parser
from tabulate import tabulate

logger = logging.getLogger(__name__)

# Make Warnings a little less weird
formatwarning_orig = warnings.formatwarning
warnings.formatwarning = lambda message, category, filename, lineno, line=None: formatwarning_orig(
    message, category, filename, lineno, line=""
)

# Regex for matching "host:port" strings. Host may be empty (bind all).
_hostport_regex = r"^(?P<host>[^:]*):(?P<port>\d{1,5})$"
_datetime_regex = r"^[0-2]\d{3}-(0?[1-9]|1[012])-([0][1-9]|[1-2][0-9]|3[0-1]) ([0-9]:|[0-1][0-9]:|2[0-3]:)[0-5][0-9]:[0-5][0-9]+(\.\d+)?$"


class MAVKitError(Exception):
    """Base class of every error raised by mavkit"""


class PayloadTooLong(MAVKitError, ValueError):
    pass


class FlagSignatureMismatch(MAVKitError, ValueError):
    pass


class ArityMismatch(MAVKitError, ValueError):
    pass


class TypeMismatch(MAVKitError, TypeError):
    pass


class LengthMismatch(MAVKitError, ValueError):
    pass


class UnknownMessage(MAVKitError, KeyError):
    pass


class CatalogSyntaxError(MAVKitError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class BadKeyFile(MAVKitError, ValueError):
    pass


class LinkError(MAVKitError, OSError):
    pass


class CaptureCorrupt(MAVKitError, ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class NonContiguousSeq(MAVKitError, ValueError):
    pass


class ScenarioInvalid(MAVKitError, ValueError):
    pass


def convert_to_dt(value):
    """Convert various date formats to a timezone aware UTC datetime

    Parameters
    ----------
    value : varies
        Value to be converted. Strings may be 'YYYY-MM-DD HH:MM:SS' (taken as
        UTC) or ISO8601; numbers are POSIX seconds.

    Returns
    -------
    datetime
        Aware datetime in UTC, or None if value is None.

    Raises
    ------
    TypeError
        Raised if incorrect format is given for conversion.
    """
    if value is None:
        return None
    if isinstance(value, datetime):
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)
    if isinstance(value, date):
        return datetime(value.year, value.month, value.day, tzinfo=timezone.utc)
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if isinstance(value, str):
        if re.match(_datetime_regex, value):
            return convert_to_dt(parser.parse(value))
        try:
            dtvalue = parser.isoparse(value)
        except ValueError:
            raise ValueError("Date/time given as string should be 'YYYY-MM-DD HH:MM:SS' or ISO8601 format.")
        if dtvalue.tzinfo is None:
            warnings.warn("ISO8601 dates with no timezone are assumed to be UTC.")
        return convert_to_dt(dtvalue)
    raise TypeError('Date should be given as a datetime, POSIX seconds or a string "YYYY-MM-DD HH:MM:SS"')


def parse_hostport(value, default_host="127.0.0.1"):
    """Split a 'host:port' string. An empty host (':14550') means default_host."""
    match = re.match(_hostport_regex, value.strip())
    if match is None:
        raise ValueError(f"Expected host:port, got '{value}'")
    port = int(match["port"])
    if port > 65535:
        raise ValueError(f"Port out of range in '{value}'")
    return (match["host"] or default_host, port)


def read_keyvalue_file(path):
    """Read a line oriented key=value file. Blank lines and '#' comments are
    skipped. Returns an ordered dict of stripped strings."""
    values = dict()
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioInvalid(f"{path}:{lineno}: expected key=value, got '{line}'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _tablefy(table, header=None):
    """Simple HTML table generator

    Parameters
    ----------
    table : list
        Data for table
    header : list
        Headers for table, by default None

    Returns
    -------
    str
        HTML formatted table.
    """

    tab = "<table>"
    if header is not None:
        tab += "<thead>"
        tab += "".join([f"<th style='text-align: left;'>{head}</th>" for head in header])
        tab += "</thead>"

    for row in table:
        tab += "<tr>"
        row = [f"{col}".replace("\n", "<br>") for col in row]
        tab += "".join([f"<td style='text-align: left;'>{col}</td>" for col in row])
        tab += "</tr>"
    tab += "</table>"
    return tab


class MAVAPI_Baseclass:
    """Mixin for mavkit domain classes. Provides table rendering of the
    `_parameters` and `_attributes` of a class and a repr."""

    # Parameters set by the user
    _parameters = []
    # Values derived or measured by the class
    _attributes = []

    @property
    def _table(self):
        """Table of details of the class"""
        header = ["Parameter", "Value"]
        table = []
        for row in self._parameters + self._attributes:
            value = getattr(self, row)
            if value is not None and value != [] and value != "":
                if isinstance(value, (list, tuple)):
                    table.append([row, "\n".join([f"{le}" for le in value])])
                else:
                    table.append([row, "\n".join(textwrap.wrap(f"{value}"))])
        return header, table

    @property
    def api_data(self):
        """Dictionary of the parameters and attributes of the class"""
        data = dict()
        for param in self._parameters + self._attributes:
            value = getattr(self, param)
            if hasattr(value, "api_data"):
                data[param] = value.api_data
            elif hasattr(value, "name") and hasattr(value, "value"):
                # Enumerations are reported by name
                data[param] = value.name
            else:
                data[param] = value
        return data

    def _repr_html_(self):
        header, table = self._table
        if len(table) > 0:
            return _tablefy(table, header)
        return "No data"

    def __str__(self):
        header, table = self._table
        if len(table) > 0:
            return tabulate(table, header, tablefmt="pretty", stralign="right")
        return "No data"

    def __repr__(self):
        name = self.__class__.__name__
        args = ",".join(
            [
                f"{row}={getattr(self, row)!r}"
                for row in self._parameters
                if getattr(self, row) is not None and getattr(self, row) != []
            ]
        )
        return f"{name}({args})"

