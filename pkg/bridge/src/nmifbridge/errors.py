class BridgeError(Exception):
    """Base for every export failure."""


class UnsupportedOp(BridgeError):
    """The model contains layers outside the interchange op vocabulary.

    Carries every offending layer, not just the first, so one export
    attempt reports the full porting gap.
    """

    def __init__(self, offenders: list[str]):
        self.offenders = list(offenders)
        super().__init__("unsupported layers: " + ", ".join(self.offenders))


class DecodeFailure(BridgeError):
    def __init__(self, path: str, reason: str = ""):
        self.path = str(path)
        detail = f": {reason}" if reason else ""
        super().__init__(f"cannot decode image {self.path}{detail}")
