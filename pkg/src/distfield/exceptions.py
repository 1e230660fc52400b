class ConfigError(ValueError):
    """Invalid configuration value.

    ``field`` names the offending key (``section.key`` for config files) and
    ``line`` the 1-based line number when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class QuadratureError(FloatingPointError):
    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message)


class NewtonFailure(RuntimeError):
    """Raised when the linearized M-step cannot produce a finite update."""

    def __init__(self, message, theta, diagnostics=None):
        self.theta = theta
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)
