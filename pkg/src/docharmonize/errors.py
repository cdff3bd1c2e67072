"""Exception hierarchy shared across the toolkit."""


class DocharmonizeError(Exception):
    """Base class for all toolkit errors."""


class DataError(DocharmonizeError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """Unparseable file or response fragment."""

    def __init__(self, message, offset=None, fragment=None):
        super().__init__(message)
        self.offset = offset
        self.fragment = fragment


class StructuralError(DataError):
    """Well-formed input whose cross-references are broken."""

    def __init__(self, message, offending_ids=()):
        super().__init__(message)
        self.offending_ids = list(offending_ids)


class RemapError(DataError):
    """Category remapping failed under the configured policy."""


class PlanContractError(DocharmonizeError):
    """A harmonization plan violated its validation contract."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class AgentError(DocharmonizeError):
    """An agent could not produce a valid plan."""


class TransportError(AgentError):
    """HTTP-level failure talking to the VLM endpoint (retryable)."""


class JobError(DocharmonizeError):
    """A harmonization job failed under the fail_job policy."""

    def __init__(self, message, page_id=None):
        super().__init__(message)
        self.page_id = page_id
