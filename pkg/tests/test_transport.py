"""Unit tests for the in-memory transport and transcript export."""

import numpy as np
import pytest

from p3ls.data_models import PartyId
from p3ls.errors import ProtocolError
from p3ls.transcript import PayloadTag, ProtocolTranscript
from p3ls.transport import InMemoryTransport, create_transport

TA, CSP, LC = PartyId.ta(), PartyId.csp(), PartyId.lc()
FC1, FC2 = PartyId.fc(1), PartyId.fc(2)


@pytest.fixture
def transport():
    return InMemoryTransport()


def test_send_records_metadata(transport):
    transport.send(FC1, CSP, PayloadTag.MASKED_X, np.zeros((4, 3)), "masking", masked=True, subject=1)
    record = transport.transcript.records[0]
    assert record.sequence == 0
    assert record.sender == "FC-1"
    assert record.receiver == "CSP"
    assert record.tag == PayloadTag.MASKED_X
    assert record.shape == [4, 3]
    assert record.masked is True
    assert record.subject == 1


def test_scalar_payload_has_empty_shape(transport):
    transport.send(CSP, FC1, PayloadTag.SS_RESIDUAL, 3.5, "contribution", subject=1)
    assert transport.transcript.records[0].shape == []
    assert transport.receive(FC1, PayloadTag.SS_RESIDUAL) == 3.5


def test_fifo_per_receiver(transport):
    transport.send(TA, FC1, PayloadTag.KEY_M, np.full((1, 1), 1.0), "inference")
    transport.send(TA, FC1, PayloadTag.KEY_M, np.full((1, 1), 2.0), "inference")
    assert transport.pending(FC1) == 2
    assert transport.receive(FC1, PayloadTag.KEY_M)[0, 0] == 1.0
    assert transport.receive(FC1, PayloadTag.KEY_M)[0, 0] == 2.0
    assert transport.pending(FC1) == 0


def test_receive_filters_by_sender(transport):
    transport.send(FC1, CSP, PayloadTag.MASKED_X, np.ones((2, 2)), "masking", masked=True)
    transport.send(FC2, CSP, PayloadTag.MASKED_X, np.zeros((2, 2)), "masking", masked=True)
    np.testing.assert_array_equal(transport.receive(CSP, PayloadTag.MASKED_X, sender=FC2), np.zeros((2, 2)))
    np.testing.assert_array_equal(transport.receive(CSP, PayloadTag.MASKED_X, sender=FC1), np.ones((2, 2)))


def test_receive_missing_tag_raises(transport):
    transport.send(TA, LC, PayloadTag.KEY_A, np.eye(2), "key_generation")
    with pytest.raises(ProtocolError) as excinfo:
        transport.receive(LC, PayloadTag.KEY_G)
    assert excinfo.value.origin == "LC"


def test_broadcast_sends_one_message_each(transport):
    transport.broadcast(TA, [FC1, FC2, LC], PayloadTag.KEY_N, np.eye(2), "recovery")
    assert len(transport.transcript) == 3
    assert [r.receiver for r in transport.transcript.records] == ["FC-1", "FC-2", "LC"]
    assert all(transport.pending(party) == 1 for party in (FC1, FC2, LC))


def test_transcript_jsonl_round_trip(transport, tmp_path):
    transport.send(TA, FC1, PayloadTag.KEY_HI, np.zeros((2, 5)), "key_generation", subject=1)
    transport.send(FC1, CSP, PayloadTag.MASKED_X, np.zeros((6, 5)), "masking", masked=True, subject=1)
    path = transport.transcript.to_jsonl(tmp_path / "run" / "transcript.jsonl")

    lines = path.read_text().splitlines()
    assert len(lines) == 2
    loaded = ProtocolTranscript.from_jsonl(path)
    assert loaded == transport.transcript


def test_for_party(transport):
    transport.send(TA, FC1, PayloadTag.KEY_A, np.eye(3), "key_generation")
    transport.send(TA, LC, PayloadTag.KEY_A, np.eye(3), "key_generation")
    assert len(transport.transcript.for_party(FC1)) == 1
    assert len(transport.transcript.for_party("TA")) == 2


def test_create_transport():
    assert isinstance(create_transport("in_memory"), InMemoryTransport)
    with pytest.raises(ValueError):
        create_transport("grpc")
