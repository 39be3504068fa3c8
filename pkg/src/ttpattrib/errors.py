"""Error hierarchy shared across the pipeline.

Exit codes: 2 for validation problems, 3 for provider/backend failures,
4 for malformed or missing data files. The CLI maps an uncaught error to
``exit_code`` of its class.
"""


class PipelineError(Exception):
    exit_code = 1


class ValidationError(PipelineError):
    """Caller passed arguments or configuration that violate a contract."""

    exit_code = 2


class ProviderError(PipelineError):
    """An embedding or text-generation backend failed."""

    exit_code = 3


class DataError(PipelineError):
    """A data file exists but does not satisfy its documented format."""

    exit_code = 4


class MalformedTechniqueIdError(ValidationError):
    pass


class EmptyTextError(ValidationError):
    pass


class ZeroNormError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class EmptyDocumentError(DataError):
    pass


class TaxonomyFormatError(DataError):
    pass


class CorpusFormatError(DataError):
    pass


class ProviderUnavailableError(ProviderError):
    pass


class GenerationFailureError(ProviderError):
    pass


class AllLinesUnparseableError(DataError):
    """LLM reply contained lines but none parsed; the reply is kept for audit."""

    def __init__(self, message, extraction=None):
        super().__init__(message)
        self.extraction = extraction
