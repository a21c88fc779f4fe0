import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratls.errors import MalformedQuote, SigningFailure, WrongLength
from ratls.sgx_sim import (
    FLAG_DEBUG,
    FLAG_INIT,
    FLAG_MODE64BIT,
    QUOTE_HEADER_SIZE,
    REPORT_BODY_LAYOUT,
    REPORT_BODY_SIZE,
    AttestationKey,
    SgxAttributes,
    SgxQuote,
    SgxReportBody,
    SignType,
    SimulatedEnclave,
    SimulatedPlatform,
    create_report,
    quote_report,
    verify_quote_signature,
)
from tests import oracles

# fixed private scalar so the cross-check runs on reproducible bytes
TEST_KEY = AttestationKey.from_private_value(0x1F2E3D4C5B6A79880123456789ABCDEF0FEDCBA9876543210112233445566778)


def _enclave(**kw):
    kw.setdefault("mr_enclave", b"\x11" * 32)
    kw.setdefault("mr_signer", b"\x22" * 32)
    return SimulatedEnclave(**kw)


bodies = st.builds(
    SgxReportBody,
    cpu_svn=st.binary(min_size=16, max_size=16),
    attributes=st.builds(
        SgxAttributes,
        flags=st.sampled_from([FLAG_INIT | FLAG_MODE64BIT, FLAG_INIT | FLAG_MODE64BIT | FLAG_DEBUG, 0]),
        xfrm=st.integers(0, 2**64 - 1),
    ),
    mr_enclave=st.binary(min_size=32, max_size=32),
    mr_signer=st.binary(min_size=32, max_size=32),
    isv_prod_id=st.integers(0, 0xFFFF),
    isv_svn=st.integers(0, 0xFFFF),
    report_data=st.binary(min_size=64, max_size=64),
)


class TestCreateReport:
    def test_copies_identity(self):
        body = create_report(_enclave(), bytes(64))
        assert body.mr_enclave == b"\x11" * 32
        assert body.report_data == bytes(64)

    def test_debug_flag(self):
        enclave = _enclave(attributes=SgxAttributes(FLAG_INIT | FLAG_DEBUG))
        assert create_report(enclave, bytes(64)).attributes.flags & 0b10

    def test_serialize_roundtrip(self):
        body = create_report(_enclave(isv_svn=7), bytes(range(64)))
        raw = body.to_bytes()
        assert SgxReportBody.from_bytes(raw).to_bytes() == raw

    @pytest.mark.parametrize("size", [0, 32, 63, 65])
    def test_wrong_report_data_length(self, size):
        with pytest.raises(WrongLength):
            create_report(_enclave(), bytes(size))

    def test_cpu_svn_from_platform(self):
        platform = SimulatedPlatform.generate(cpu_svn=bytes(range(16)))
        body = create_report(platform.launch(b"\x01" * 32, b"\x02" * 32), bytes(64), platform)
        assert body.cpu_svn == bytes(range(16))

    def test_pure(self):
        platform = SimulatedPlatform.generate()
        enclave = platform.launch(b"\x01" * 32, b"\x02" * 32)
        assert create_report(enclave, b"\x05" * 64, platform) == create_report(enclave, b"\x05" * 64, platform)

    def test_enclave_immutable(self):
        with pytest.raises(AttributeError):
            _enclave().isv_svn = 3


class TestLayout:
    def test_offsets(self):
        body = SgxReportBody(
            cpu_svn=b"\xc1" * 16,
            attributes=SgxAttributes(FLAG_INIT | FLAG_DEBUG, 0x3),
            mr_enclave=b"\xe1" * 32,
            mr_signer=b"\x51" * 32,
            isv_prod_id=0x0102,
            isv_svn=0x0304,
            report_data=b"\xda" * 64,
        )
        raw = body.to_bytes()
        assert len(raw) == REPORT_BODY_SIZE == 432
        assert raw[0:16] == b"\xc1" * 16
        assert raw[48:56] == struct.pack("<Q", FLAG_INIT | FLAG_DEBUG)
        assert raw[56:64] == struct.pack("<Q", 3)
        assert raw[64:96] == b"\xe1" * 32
        assert raw[128:160] == b"\x51" * 32
        assert raw[256:260] == b"\x02\x01\x04\x03"  # little-endian
        assert raw[368:432] == b"\xda" * 64
        used = set()
        for _, offset, size in REPORT_BODY_LAYOUT:
            used.update(range(offset, offset + size))
        assert all(raw[i] == 0 for i in range(432) if i not in used)

    def test_reserved_bits_rejected(self):
        with pytest.raises(ValueError):
            SgxAttributes(1 << 3)

    def test_nonzero_reserved_bytes_rejected(self):
        raw = bytearray(create_report(_enclave(), bytes(64)).to_bytes())
        raw[100] = 1
        with pytest.raises(MalformedQuote):
            SgxReportBody.from_bytes(bytes(raw))

    @given(bodies)
    def test_roundtrip_property(self, body):
        assert SgxReportBody.from_bytes(body.to_bytes()) == body


class TestQuote:
    def test_sign_verify(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 3)
        assert verify_quote_signature(quote, TEST_KEY.public_key())
        assert quote.version == 3 and quote.qe_svn == 3

    def test_epid_version(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.EPID_SIM, 1)
        assert quote.version == 2

    def test_flip_breaks_signature(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 3)
        raw = bytearray(quote.to_bytes())
        raw[QUOTE_HEADER_SIZE + 70] ^= 1
        assert not verify_quote_signature(bytes(raw), TEST_KEY.public_key())

    def test_wrong_key(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 3)
        assert not verify_quote_signature(quote, AttestationKey.generate())

    def test_truncated(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 3)
        with pytest.raises(MalformedQuote):
            verify_quote_signature(quote.to_bytes()[:-5], TEST_KEY)
        with pytest.raises(MalformedQuote):
            SgxQuote.from_bytes(quote.to_bytes()[:100])

    def test_independent_ecdsa(self):
        quote = quote_report(create_report(_enclave(), b"\x42" * 64), TEST_KEY, SignType.ECDSA_SIM, 3)
        assert oracles.ecdsa_verify(TEST_KEY.public_der(), quote.signature, quote.signed_bytes())
        assert not oracles.ecdsa_verify(TEST_KEY.public_der(), quote.signature, quote.signed_bytes()[:-1] + b"\x00")

    def test_deterministic_serialization(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 3)
        assert SgxQuote.from_bytes(quote.to_bytes()).to_bytes() == quote.to_bytes()

    def test_signed_region_layout(self):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.ECDSA_SIM, 9)
        raw = quote.to_bytes()
        assert struct.unpack_from("<HHHH", raw) == (3, 2, 9, 0)
        assert struct.unpack_from("<I", raw, 440)[0] == len(quote.signature)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_tamper_sensitivity(self, data):
        quote = quote_report(create_report(_enclave(), bytes(64)), TEST_KEY, SignType.EPID_SIM, 1)
        raw = bytearray(quote.to_bytes())
        pos = data.draw(st.integers(0, QUOTE_HEADER_SIZE + REPORT_BODY_SIZE - 1))
        raw[pos] ^= data.draw(st.integers(1, 255))
        assert not verify_quote_signature(bytes(raw), TEST_KEY)


class TestAttestationKey:
    def test_private_half_hidden(self):
        key = AttestationKey.generate("k1")
        assert format(key.private_value(), "x") not in repr(key)
        assert b"PRIVATE" not in key.public_der()

    def test_rejects_other_curves(self):
        from cryptography.hazmat.primitives.asymmetric import ec

        with pytest.raises(SigningFailure):
            AttestationKey(ec.generate_private_key(ec.SECP384R1()))
