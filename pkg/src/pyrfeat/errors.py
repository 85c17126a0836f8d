"""Exception taxonomy shared across the pipeline.

Two failure families matter to callers: problems reading or writing bytes
(``OSError`` and subclasses, CLI exit code 1) and problems with the content
of otherwise readable inputs (``ValidationError`` and subclasses, CLI exit
code 2).
"""


class ValidationError(ValueError):
    """Input or configuration violates a pipeline contract."""


class StoreFormatError(ValidationError):
    """A feature store file is malformed (bad magic, truncation, NaN...)."""


class MissingRecordError(ValidationError):
    """A required (image id, level) record is absent from a feature store."""
