"""Error types for artifact parsing and figure rendering."""


class PlotsError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatch(PlotsError):
    """An artifact file exists but does not match the documented schema."""


class MissingColumn(SchemaMismatch):
    """A required CSV column is absent."""
