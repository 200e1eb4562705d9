"""Error type shared by all modules."""


class VQPError(Exception):
    """Raised on contract violations.

    ``code`` is a short stable identifier (e.g. ``"not-spd"``) that callers
    and tests can match on without parsing the message.
    """

    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)
