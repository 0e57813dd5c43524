"""Exception hierarchy shared across the pipeline."""


class HarmonizerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HarmonizerError):
    """Bad or unknown configuration (CLI exit code 2)."""


class InputError(HarmonizerError):
    """Malformed input data such as a bad TSV row (CLI exit code 3)."""


class StageError(HarmonizerError):
    """A pipeline stage failed mid-run (CLI exit code 4)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


class ProviderError(HarmonizerError):
    """Search provider failed after retries; the affected name stays un-augmented."""
