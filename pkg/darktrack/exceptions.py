"""Exceptions raised by darktrack."""


class InputException(IOError):
    """Exception raised when an input file can not be read or does not
    conform to its format

    Attributes:
        path  -- the offending file
        message  -- explanation of the error
    """

    def __init__(self, path, message):
        IOError.__init__(self, '%s: %s' % (path, message))
        self.path = path
        self.message = message


class ConfigException(ValueError):
    """Exception raised for an invalid configuration value

    Attributes:
        field  -- name of the offending setting
        message  -- explanation of the error, naming the field
    """

    def __init__(self, field, message):
        ValueError.__init__(self, message)
        self.field = field
        self.message = message


class ContractException(Exception):
    """Exception raised when a caller breaks the precondition of an
    operation, e.g. partitions handed over out of order"""

    def __init__(self, message):
        Exception.__init__(self, message)
        self.message = message


class LineageAssertion(AssertionError):
    """Raised when the lineage registry would break one of its invariants"""

    def __init__(self, message):
        AssertionError.__init__(self, message)
        self.message = message


class UnknownSenderException(KeyError):
    """Exception raised when looking up a sender outside the vocabulary"""

    def __init__(self, sender):
        KeyError.__init__(self, sender)
        self.sender = sender
        self.message = 'Unknown sender: %s' % sender

    def __str__(self):
        return self.message


class UndefinedDistanceException(ValueError):
    """Exception raised for a cosine distance involving a zero vector"""

    def __init__(self, sender=None):
        if sender is None:
            message = 'cosine distance undefined for a zero vector'
        else:
            message = 'cosine distance undefined, zero vector for %s' % sender
        ValueError.__init__(self, message)
        self.sender = sender
        self.message = message


class GroundTruthException(ValueError):
    """Exception raised for a malformed or contradictory ground truth file

    Attributes:
        problems  -- list of (line number, description)
    """

    def __init__(self, path, problems):
        lines = ['line %d: %s' % prob for prob in problems]
        message = '%s: %d problem(s)\n%s' % (path, len(problems),
                                             '\n'.join(lines))
        ValueError.__init__(self, message)
        self.path = path
        self.problems = problems
        self.message = message


class ScenarioException(ValueError):
    """Exception raised for an invalid synthetic scenario"""

    def __init__(self, message):
        ValueError.__init__(self, message)
        self.message = message


class StageException(Exception):
    """Exception raised when a pipeline stage fails

    Attributes:
        stage  -- name of the failing stage
        day  -- the day being processed, or None
        cause  -- the original exception
    """

    def __init__(self, stage, day, cause):
        Exception.__init__(self, stage, day, cause)
        self.stage = stage
        self.day = day
        self.cause = cause
        self.message = 'stage %s failed on %s: %s' % (stage, day or '-',
                                                      cause)

    def __str__(self):
        return self.message


class ConnectionException(Exception):
    """Exception raised for connection problems with the sensor archive

    Attributes:
        message  -- explanation of the error
    """

    def __init__(self, host, port):
        Exception.__init__(self, host, port)
        self.message = 'Could not connect to host:port.  %s:%s' % (host, port)


class CredentialException(Exception):
    """Exception raised for credential problems

    Attributes:
        message  -- explanation of the error
    """

    def __init__(self, message):
        Exception.__init__(self, message)
        self.message = message
