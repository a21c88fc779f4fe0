"""Exception hierarchy for the RA-TLS toolkit."""


class RaTlsError(Exception):
    """Base class for every error raised by this package."""


# sgx_sim
class WrongLength(RaTlsError, ValueError):
    pass


class SigningFailure(RaTlsError):
    pass


class MalformedQuote(RaTlsError, ValueError):
    pass


# evidence
class EvidenceError(RaTlsError):
    pass


class IasRejected(EvidenceError):
    pass


class UnknownPlatform(EvidenceError):
    pass


class MissingExtension(EvidenceError):
    pass


class MalformedExtension(EvidenceError, ValueError):
    pass


class UnknownFormat(MalformedExtension):
    pass


class CorruptStream(MalformedExtension):
    pass


class Transport(RaTlsError, ConnectionError):
    """A mock service or TLS peer could not be reached."""


# certgen
class CertEncodingFailure(RaTlsError):
    pass


class NotRaTls(RaTlsError):
    """The certificate carries no RA-TLS evidence extensions."""


class MalformedCertificate(RaTlsError, ValueError):
    pass


# services
class QuoteInvalid(RaTlsError):
    pass


class MalformedRequest(RaTlsError, ValueError):
    pass


class UnknownSerial(RaTlsError, KeyError):
    pass


# endpoint
class HandshakeAborted(RaTlsError):
    def __init__(self, cause, message: str = ""):
        self.cause = cause
        super().__init__(message or f"handshake aborted: {getattr(cause, 'value', cause)}")
