"""Error type shared by all loggas modules.

Every failure mode carries a short machine-readable code ("dimension",
"config", "maxiter", ...) so the CLI can map it to an exit code and print
a structured message.
"""


class LogGasError(Exception):
    # codes that indicate bad inputs / configuration (CLI exit 1)
    VALIDATION_CODES = frozenset(
        {"config", "parameter", "dimension", "grid", "potential", "density"}
    )
    # codes raised while computing (CLI exit 2)
    RUNTIME_CODES = frozenset(
        {"maxiter", "domain-too-small", "eigensolver", "degenerate"}
    )

    def __init__(self, code, message, payload=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.payload = payload  # e.g. best iterate on "maxiter"

    @property
    def is_validation(self):
        return self.code in self.VALIDATION_CODES
