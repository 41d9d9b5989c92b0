"""Exception hierarchy shared by all pedtap modules."""


class PedtapError(ValueError):
    """Base class for every error raised by pedtap."""


class InvalidInput(PedtapError):
    pass


class MissingMirror(PedtapError):
    def __init__(self, link_id):
        super().__init__(f"MissingMirror: link {link_id} has no reverse twin")
        self.link_id = link_id


class DanglingReference(PedtapError):
    pass


class NonPositiveAttribute(PedtapError):
    pass


class DuplicateOD(PedtapError):
    pass


class UnknownLink(PedtapError):
    def __init__(self, link_id):
        super().__init__(f"UnknownLink: {link_id}")
        self.link_id = link_id


class NonPositivePeriod(PedtapError):
    pass


class EmptyPath(PedtapError):
    pass


class Unreachable(PedtapError):
    """Raised when one or more OD pairs have no connecting path."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        text = ", ".join(f"{o}->{d}" for o, d in self.pairs)
        super().__init__(f"Unreachable: {text}")


class ZeroTSTT(PedtapError):
    pass


class InsufficientData(PedtapError):
    pass


class FitDiverged(PedtapError):
    pass


class LengthMismatch(PedtapError):
    pass


class EmptyInput(PedtapError):
    pass


class DegenerateOffset(PedtapError):
    pass


class HalfStreamClosure(UserWarning):
    """Only one direction of a stream was listed for closure; the mirror is closed too."""
