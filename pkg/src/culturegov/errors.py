"""Exception types shared across the package."""


class CultureGovError(Exception):
    """Base class for all package errors."""


class DataError(CultureGovError):
    """Invalid or inconsistent input data: files, schemas, registries."""


class ModelError(CultureGovError):
    """Estimation-domain failure: invalid parameters or singular structure."""
