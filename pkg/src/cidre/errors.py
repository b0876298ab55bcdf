"""Exception hierarchy; each pipeline stage maps to a distinct CLI exit code."""


class CidreError(Exception):
    exit_code = 1
    stage = "internal"


class ConfigError(CidreError):
    exit_code = 2
    stage = "config"


class DecodeError(CidreError):
    """Raised for undecodable words and malformed program images."""

    exit_code = 3
    stage = "decode"

    def __init__(self, message, word=None, address=None):
        self.word = word
        self.address = address
        if word is not None and address is not None:
            message = f"{message} (word 0x{word:08x} at 0x{address:x})"
        super().__init__(message)


class UnsupportedEncoding(DecodeError):
    pass


class EncodeError(CidreError):
    exit_code = 3
    stage = "decode"


class ProfileError(CidreError):
    exit_code = 4
    stage = "profile"


class StepLimitExceeded(ProfileError):
    pass


class Trap(ProfileError):
    def __init__(self, message, pc=None):
        self.pc = pc
        if pc is not None:
            message = f"{message} at pc=0x{pc:x}"
        super().__init__(message)


class EnumerationCapError(CidreError):
    exit_code = 5
    stage = "enumerate"


class OracleError(CidreError):
    exit_code = 6
    stage = "oracle"


class EncodingExhausted(CidreError):
    exit_code = 7
    stage = "encoding"
