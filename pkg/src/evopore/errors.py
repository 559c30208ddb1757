"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


class MeshQualityError(Exception):
    """Mesh construction produced degenerate or badly shaped elements."""


class NumericalError(Exception):
    """Numerical breakdown: non-finite values, solver divergence, and similar."""


class CheckFailure(Exception):
    """A named invariant or validation check failed.

    Carries the check name and, when available, a witness point.
    """

    def __init__(self, check: str, message: str = "", witness=None):
        self.check = check
        self.witness = witness
        text = f"check '{check}' failed"
        if message:
            text += f": {message}"
        if witness is not None:
            text += f" (witness: {witness})"
        super().__init__(text)
