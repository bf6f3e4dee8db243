"""Exception types shared across modules; the CLI maps each family to an exit code."""


class ConfigError(ValueError):
    """Invalid configuration value, model kind or hyperparameter."""


class EndpointError(RuntimeError):
    """A chat-completion request failed."""

    def __init__(self, message: str, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


class TokenBudgetExceeded(EndpointError):
    """The server rejected a request for exceeding the model context window."""

    def __init__(self, message: str, status: int | None = 400):
        super().__init__(message, status=status, retryable=False)
