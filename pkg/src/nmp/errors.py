"""Exception hierarchy shared across the platform."""


class NmpError(Exception):
    """Base class for all platform errors."""


class GeometryError(NmpError):
    """Frame size / channel count does not match the session configuration."""


class GainError(NmpError):
    """Invalid gain request (listener-role source, unknown client, ...)."""


class ProtocolError(NmpError):
    """Malformed or invalid wire data."""


class MalformedMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class TruncatedPayload(ProtocolError):
    pass


class ScenarioError(NmpError):
    """Invalid scenario description; message names the offending field."""


class MeasurementError(NmpError):
    """Not enough or inconsistent data for a latency statistic."""
