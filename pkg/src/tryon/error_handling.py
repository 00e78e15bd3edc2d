"""
Error Handling and Messaging System for layerfit

This module provides the error classification used across the pipeline:
every failure carries a code, a category and troubleshooting suggestions,
and the command layer turns it into a rich panel plus a process exit code.
"""

import logging
import traceback
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from rich.markup import escape
from rich.panel import Panel

from core_utils import console, print_warning

logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """Error severity levels for classification"""
    WARNING = "warning"     # Reported, but the command still completes
    ERROR = "error"         # Stops the current command
    CRITICAL = "critical"   # Internal invariant broken


class ErrorCategory(Enum):
    """Error categories for systematic classification"""
    CONFIGURATION = "configuration" # Run config or network configuration
    INPUT = "input"                 # Shape, dimension and value contracts
    DATA = "data"                   # Dataset files on disk
    CHECKPOINT = "checkpoint"       # Checkpoint files
    VERIFICATION = "verification"   # Gradient checks and acceptance gates
    USAGE = "usage"                 # API misuse
    INTERNAL = "internal"           # Internal application errors


@dataclass
class ErrorInfo:
    """Comprehensive error information structure"""
    message: str
    code: str
    severity: ErrorSeverity
    category: ErrorCategory
    details: Optional[str] = None
    suggestions: List[str] = field(default_factory=list)
    exception: Optional[BaseException] = None
    context: Dict[str, Any] = field(default_factory=dict)


class LayerfitError(Exception):
    """Base exception class for all layerfit errors"""

    exit_code = 1

    def __init__(self,
                 message: str,
                 code: str = "LFT-E000",
                 severity: ErrorSeverity = ErrorSeverity.ERROR,
                 category: ErrorCategory = ErrorCategory.INTERNAL,
                 details: Optional[str] = None,
                 suggestions: Optional[List[str]] = None,
                 context: Optional[Dict[str, Any]] = None,
                 original_exception: Optional[BaseException] = None):
        self.error_info = ErrorInfo(
            message=message,
            code=code,
            severity=severity,
            category=category,
            details=details,
            suggestions=suggestions or [],
            exception=original_exception,
            context=context or {},
        )
        super().__init__(message)

    @property
    def code(self) -> str:
        return self.error_info.code

    @property
    def severity(self) -> ErrorSeverity:
        return self.error_info.severity

    @property
    def category(self) -> ErrorCategory:
        return self.error_info.category

    @property
    def suggestions(self) -> List[str]:
        return self.error_info.suggestions

    @property
    def details(self) -> Optional[str]:
        return self.error_info.details

    @property
    def context(self) -> Dict[str, Any]:
        return self.error_info.context


class ConfigurationError(LayerfitError):
    """Invalid run configuration or incompatible network configuration"""
    exit_code = 2

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.CONFIGURATION)
        kwargs.setdefault('code', 'LFT-E200')
        super().__init__(message, **kwargs)


class InputError(LayerfitError):
    """Input tensors or images violate a shape or value contract"""
    exit_code = 3

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.INPUT)
        kwargs.setdefault('code', 'LFT-E800')
        super().__init__(message, **kwargs)


class DataError(LayerfitError):
    """Missing or unreadable dataset files"""
    exit_code = 3

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.DATA)
        kwargs.setdefault('code', 'LFT-E300')
        super().__init__(message, **kwargs)


class CheckpointError(LayerfitError):
    """Missing, truncated or incompatible checkpoint"""
    exit_code = 4

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.CHECKPOINT)
        kwargs.setdefault('code', 'LFT-E600')
        super().__init__(message, **kwargs)


class VerificationError(LayerfitError):
    """A verification suite or acceptance gate failed"""
    exit_code = 5

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.VERIFICATION)
        kwargs.setdefault('code', 'LFT-E1000')
        super().__init__(message, **kwargs)


class UsageError(LayerfitError):
    """The API was called outside its contract"""
    exit_code = 1

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.USAGE)
        kwargs.setdefault('code', 'LFT-E700')
        super().__init__(message, **kwargs)


class InternalError(LayerfitError):
    """Internal application errors"""
    exit_code = 1

    def __init__(self, message: str, **kwargs):
        kwargs.setdefault('category', ErrorCategory.INTERNAL)
        kwargs.setdefault('code', 'LFT-E1100')
        kwargs.setdefault('severity', ErrorSeverity.CRITICAL)
        super().__init__(message, **kwargs)


class ErrorHandler:
    """
    Centralized error handling for the command layer

    Converts exceptions into LayerfitError, logs them, renders them on the
    console and maps them to process exit codes.
    """

    def __init__(self):
        self.logger = logging.getLogger('tryon.error_handler')

    def handle_error(self, error: BaseException, context: Optional[Dict[str, Any]] = None) -> int:
        """
        Handle an exception and return the exit code the process should use

        Args:
            error: The exception to handle
            context: Additional context information (command, stage, path)

        Returns:
            int: process exit code
        """
        if not isinstance(error, LayerfitError):
            error = self._convert_exception(error)
        if context:
            error.error_info.context.update(context)

        self._log_error(error)
        self.display_error(error)
        return error.exit_code

    def _convert_exception(self, exception: BaseException) -> LayerfitError:
        """Convert a standard exception to a LayerfitError"""
        details = "".join(traceback.format_exception(type(exception), exception, exception.__traceback__))
        if isinstance(exception, FileNotFoundError):
            return DataError(
                f"File not found: {exception.filename or exception}",
                code="LFT-E301",
                details=details,
                suggestions=["Verify the path passed on the command line",
                             "Run gen-data first if the dataset does not exist yet"],
                original_exception=exception,
            )
        if isinstance(exception, (ValueError, TypeError)):
            return InputError(
                f"Invalid input or parameter: {exception}",
                code="LFT-E801",
                details=details,
                suggestions=["Check the input values and formats"],
                original_exception=exception,
            )
        if isinstance(exception, KeyboardInterrupt):
            return UsageError(
                "Operation cancelled by user",
                code="LFT-E701",
                severity=ErrorSeverity.WARNING,
                original_exception=exception,
            )
        return InternalError(
            str(exception) or "An unknown error occurred",
            details=details,
            suggestions=["Check the run log for more details"],
            original_exception=exception,
        )

    def _log_error(self, error: LayerfitError):
        """Log error information to the logger"""
        log_message = f"[{error.code}] {error.severity.value.upper()}: {error}"
        if error.context:
            log_message += f" context={error.context}"
        if error.severity == ErrorSeverity.CRITICAL:
            self.logger.critical(log_message, exc_info=error.error_info.exception)
        elif error.severity == ErrorSeverity.ERROR:
            self.logger.error(log_message)
        else:
            self.logger.warning(log_message)

    def display_error(self, error: LayerfitError):
        """Display error information to the user"""
        if error.severity == ErrorSeverity.WARNING:
            print_warning(str(error))
            return

        body = f"[bold red]Error {error.code}:[/] {escape(str(error))}\n"
        if error.context:
            body += "\n" + "\n".join(f"[dim]{key}:[/] {escape(str(value))}" for key, value in error.context.items())
        if error.details and (error.severity == ErrorSeverity.CRITICAL or error.error_info.exception is None):
            body += f"\n[dim]{escape(error.details)}[/]"
        if error.suggestions:
            body += "\n\n[yellow]Suggested Solutions:[/]"
            for suggestion in error.suggestions:
                body += f"\n  • {escape(suggestion)}"

        title = (f"[white on red]CRITICAL {error.category.value.upper()} ERROR[/]"
                 if error.severity == ErrorSeverity.CRITICAL
                 else f"[red]{error.category.value.upper()} ERROR[/]")
        console.print(Panel(body, title=title, border_style="red"))


_error_handler = None

def get_error_handler() -> ErrorHandler:
    """
    Get the global error handler instance

    Returns:
        ErrorHandler: The global error handler
    """
    global _error_handler
    if _error_handler is None:
        _error_handler = ErrorHandler()
    return _error_handler


ERROR_CODES = {
    "LFT-E000": "Generic error",
    # Configuration errors (200-299)
    "LFT-E200": "Generic configuration error",
    "LFT-E201": "Unknown configuration key",
    "LFT-E202": "Configuration value has the wrong type",
    "LFT-E203": "Configuration value out of range",
    "LFT-E204": "Network layer shapes do not agree",
    # Data errors (300-399)
    "LFT-E300": "Generic data error",
    "LFT-E301": "File not found",
    "LFT-E302": "Sample is missing a role file",
    "LFT-E303": "Unreadable image",
    # Checkpoint errors (600-699)
    "LFT-E600": "Generic checkpoint error",
    "LFT-E601": "Checkpoint file missing",
    "LFT-E602": "Bad checkpoint header",
    "LFT-E603": "Truncated checkpoint record",
    "LFT-E604": "Checkpoint does not match the model",
    "LFT-E605": "Model config sidecar missing",
    # Usage errors (700-799)
    "LFT-E700": "Generic usage error",
    "LFT-E701": "Operation cancelled by user",
    "LFT-E702": "Backward called on a non-scalar tensor",
    "LFT-E703": "Missing gradient for a parameter",
    "LFT-E704": "Index out of range",
    "LFT-E705": "Output directory would write into the dataset",
    # Input errors (800-899)
    "LFT-E800": "Generic input error",
    "LFT-E801": "Invalid input parameter",
    "LFT-E802": "Spatial dimensions not divisible by the required multiple",
    "LFT-E803": "Shape mismatch between inputs",
    # Verification errors (1000-1099)
    "LFT-E1000": "Verification failure",
    "LFT-E1001": "Gradient check exceeded tolerance",
    # Internal errors (1100-1199)
    "LFT-E1100": "Generic internal error",
}
