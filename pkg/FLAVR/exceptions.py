"""
Base exceptions shared by every FLAVR app.

`exit_code` plays the role an HTTP status code plays for a web service: the
management commands turn it into the process exit status.
"""


class FlavrError(Exception):
    """Base exception for FLAVR errors"""
    exit_code = 1

    def __init__(self, message, exit_code=None):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(self.message)


class FlavrConfigError(FlavrError):
    """Raised when a configuration value or usage is invalid"""
    exit_code = 2


class FlavrProcessingError(FlavrError):
    """Raised when a run fails for a reason other than bad input"""
    exit_code = 1

    def __init__(self, message=None, original_exception=None):
        self.original_exception = original_exception
        if message is None:
            message = "Error processing FLAVR run"
        if original_exception:
            message = f"{message}: {str(original_exception)}"
        super().__init__(message, self.exit_code)
