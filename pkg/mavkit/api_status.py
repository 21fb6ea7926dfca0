from .api_common import MAVAPI_Baseclass


class MAV_Status(MAVAPI_Baseclass):
    """Status of a request sent to a vehicle: a command waiting for its
    acknowledgement, or a mission upload.

    Attributes
    ----------
    status : str
        One of 'Pending', 'Accepted', 'Rejected' or 'Timeout'
    errors : list
        list of error strings associated with the request
    warnings : list
        list of warning strings associated with the request
    began : float
        simulated or wall time the request was first sent
    completed : float
        time the request was resolved
    """

    _parameters = ["name"]
    _attributes = ["status", "errors", "warnings", "began", "completed"]

    PENDING = "Pending"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    TIMEOUT = "Timeout"

    def __init__(self, name=None, began=None):
        self.name = name
        self.status = self.PENDING
        self.began = began
        self.completed = None
        self.errors = list()
        self.warnings = list()

    def __eq__(self, value):
        return value == self.status

    def __bool__(self):
        return self.status == self.ACCEPTED

    @property
    def done(self):
        return self.status != self.PENDING

    def resolve(self, status, when=None):
        """Set the final status. A resolved request never changes again."""
        if self.done:
            return False
        self.status = status
        self.completed = when
        return True

    def error(self, error):
        """Add an error to the list of errors"""
        if error not in self.errors:
            self.errors.append(error)

    def warning(self, warning):
        """Add a warning to the list of warnings"""
        if warning not in self.warnings:
            self.warnings.append(warning)


# Aliases
Status = MAV_Status
