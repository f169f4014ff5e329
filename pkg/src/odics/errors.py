"""Exception hierarchy; each class carries the CLI exit status it maps to."""


class OdicsError(Exception):
    exit_code = 1


class ConfigurationError(OdicsError):
    exit_code = 1


class DataError(OdicsError):
    exit_code = 1


class ProtocolViolation(OdicsError):
    exit_code = 2


class NumericFailure(OdicsError):
    exit_code = 3
