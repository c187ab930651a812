from dataclasses import dataclass
from typing import List, Optional


class WorkbenchError(Exception):
    """Base class for every error the workbench raises on purpose."""


# ========== Model errors ==========

class StructuralError(WorkbenchError):
    pass


class StateBoundsError(WorkbenchError):
    pass


class ContractViolation(WorkbenchError):
    pass


# ========== Specification language ==========

@dataclass(frozen=True)
class Diagnostic:
    kind: str  # syntax | unknown-identifier | type | bounds | structure
    message: str
    line: int = 0
    column: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.kind}: {self.message}"


class SpecError(WorkbenchError):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class SpecFileError(WorkbenchError, FileNotFoundError):
    pass


class SearchBudgetExceeded(WorkbenchError):
    pass


class CacheFileError(WorkbenchError):
    pass


# ========== LLM side ==========

class PromptInputError(WorkbenchError):
    pass


class ConfigurationError(WorkbenchError):
    pass


class TransportError(WorkbenchError):
    pass


class FixtureMissingError(TransportError):
    def __init__(self, node_id: str, source: str = "replay set"):
        super().__init__(f"{source} has no response for node {node_id}")
        self.node_id = node_id
        self.transcript = None  # set by the pipeline to the partial transcript


class PipelineError(WorkbenchError):
    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript  # partial, status "incomplete"


class ExtractionError(WorkbenchError):
    def __init__(self, message: str, diagnostics: Optional[List[str]] = None, attempts: int = 0):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
        self.attempts = attempts


class ExprTypeError(WorkbenchError):
    pass
