"""Exception types shared across the pipeline.

The CLI maps these onto its stable exit codes: usage and configuration
problems exit 2, schema violations exit 3, internal invariant breaches
exit 4.
"""


class OvitrapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OvitrapError):
    """A parameter value is out of its valid domain (e.g. overlap so large
    the scan step would be zero or negative)."""


class GeometryError(OvitrapError):
    """A geometric impossibility, e.g. a tile larger than the trap."""


class SceneTooDenseError(ConfigError):
    """Egg placement failed after bounded retries; the requested density is
    infeasible for the given minimum separation."""


class SchemaError(OvitrapError):
    """An input document violates its schema. The message names the
    offending record."""


class InvariantError(OvitrapError):
    """An internal postcondition failed; indicates a bug, not bad input."""
