"""Exception hierarchy; the CLI maps these onto exit codes."""


class VerilabelError(Exception):
    """Base class for all errors raised by this package."""


class InputError(VerilabelError):
    """Invalid data, configuration, or arguments (CLI exit code 1)."""


class BackendError(VerilabelError):
    """Verification/detection backend failed (CLI exit code 2)."""


class TransientBackendError(BackendError):
    """Backend failure that is worth retrying (timeouts, 5xx, connection resets)."""
