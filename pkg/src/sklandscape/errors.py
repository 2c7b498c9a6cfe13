"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain on which a quantity is defined."""


class ResourceError(RuntimeError):
    """Request exceeds a resource guard (grid length, enumeration size, ...)."""
