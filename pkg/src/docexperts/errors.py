"""Exception hierarchy for the docexperts engine.

Two broad families matter to callers: input/configuration problems
(bad files, bad flags, incompatible providers) and runtime failures on
an otherwise valid setup (a remote provider going away, an evalset that
does not match the index). The CLI maps the first family to exit code 2
and the second to exit code 1.
"""

from __future__ import annotations


class DocExpertsError(Exception):
    """Base class for all engine errors."""


class InputError(DocExpertsError):
    """Invalid input data or configuration; the request could never succeed."""


class RuntimeFailure(DocExpertsError):
    """A semantically valid request failed while executing."""


class EmptyDocumentError(InputError):
    """Document has no tokens after normalization."""


class CorpusFormatError(InputError):
    """Corpus file is malformed (bad JSON line, missing field, duplicate id)."""


class ConfigError(InputError):
    """Invalid or unknown configuration key/value."""


class ProviderMismatchError(InputError):
    """Query-time embedding provider does not match the one used at ingestion."""


class ProviderUnavailableError(RuntimeFailure):
    """Remote embedding provider failed after all retries."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class ProviderProtocolError(RuntimeFailure):
    """Remote embedding provider returned a malformed or mismatched response."""


class IndexFormatError(InputError):
    """Index file cannot be loaded."""


class VersionMismatchError(IndexFormatError):
    """Index file was written with an unsupported format version."""


class ChecksumError(IndexFormatError):
    """Index file is corrupt or truncated (checksum verification failed)."""


class InvariantError(IndexFormatError):
    """Index file parsed but violates a structural invariant."""


class EvalSetFormatError(InputError):
    """Evaluation set file is malformed (bad JSON line, missing field)."""


class EvalSetError(RuntimeFailure):
    """Evaluation set is inconsistent with the index under evaluation."""


class EmptyQueryError(RuntimeFailure):
    """Query text is empty or whitespace-only."""
