"""Wire messages exchanged between devices and the orchestrator.

A frame is a 4-byte big-endian unsigned length followed by exactly that
many bytes of UTF-8 JSON. The JSON object must carry a "type" field naming
one of the message classes below.
"""

import json
import numbers
import struct

import lib.topology as topology

MAX_FRAME = 1024 * 1024
HEADER = struct.Struct('!I')

SUCCESS = "Success"
FAILURE = "Failure"
OK = "Ok"
UNKNOWN_SERVICE = "UnknownService"
# The service is still running; the shutdown may be retried.
TEARDOWN_FAILED = "FabricError"

_TRANSPORTS = ("TCP", "UDP", "SCTP")


class ProtocolError(Exception):
    """A malformed, oversized or unexpected message."""


class NeedMoreData(Exception):
    """The buffer does not hold a complete frame yet."""


def _is_int(value):
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _is_str(value):
    return isinstance(value, str)


class Message(object):
    """Base class: a set of named fields and their validators.

    Subclasses define TYPE and FIELDS, a tuple of (name, check, optional).
    """

    TYPE = None
    FIELDS = ()

    def __init__(self, **kwargs):
        for name, _, optional in self.FIELDS:
            if name not in kwargs and not optional:
                raise ProtocolError("%s lacks field %s" % (self.TYPE, name))
            setattr(self, name, kwargs.pop(name, None))
        if kwargs:
            raise ProtocolError("%s has unknown fields: %s"
                                % (self.TYPE, ", ".join(sorted(kwargs))))
        self.validate()

    def validate(self):
        for name, check, optional in self.FIELDS:
            value = getattr(self, name)
            if value is None:
                if not optional:
                    raise ProtocolError("%s.%s is missing" % (self.TYPE, name))
                continue
            if not check(value):
                raise ProtocolError("%s.%s is not valid: %r"
                                    % (self.TYPE, name, value))

    def to_dict(self):
        obj = {'type': self.TYPE}
        for name, _, _ in self.FIELDS:
            obj[name] = getattr(self, name)
        return obj

    @classmethod
    def from_dict(cls, obj):
        fields = dict(obj)
        fields.pop('type', None)
        return cls(**fields)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __repr__(self):
        return "%s(%s)" % (self.TYPE, ", ".join(
            "%s=%r" % (name, getattr(self, name))
            for name, _, _ in self.FIELDS))


class Greeting(Message):
    """Boot-time registration of an end-device or fog-device.

    Fog greetings carry total_processing (cores, may be fractional) and
    total_memory (bytes).
    """

    TYPE = "Greeting"
    FIELDS = (
        ('node_id', _is_str, False),
        ('device_type', lambda v: v in (topology.END_DEVICE,
                                        topology.FOG_DEVICE), False),
        ('total_processing', lambda v: _is_number(v) and v >= 0, True),
        ('total_memory', lambda v: _is_int(v) and v >= 0, True),
        ('address', _is_str, True),
    )

    def validate(self):
        Message.validate(self)
        if self.device_type == topology.FOG_DEVICE and (
                self.total_processing is None or self.total_memory is None):
            raise ProtocolError("fog greeting from %s lacks capacities"
                                % self.node_id)


class ServiceRequest(Message):
    """A request to run a service image with resource guarantees.

    processing is in cores, memory in bytes and bw in bits/s. node_id
    names the sender when the transport cannot tell.
    """

    TYPE = "ServiceRequest"
    FIELDS = (
        ('request_id', _is_str, False),
        ('image', _is_str, False),
        ('bw', lambda v: _is_int(v) and v > 0, False),
        ('processing', lambda v: _is_number(v) and v > 0, False),
        ('memory', lambda v: _is_int(v) and v > 0, False),
        ('desired_port', lambda v: _is_int(v) and 0 < v < 65536, True),
        ('transport', lambda v: v in _TRANSPORTS, False),
        ('node_id', _is_str, True),
    )


class ServiceResponse(Message):
    TYPE = "ServiceResponse"
    FIELDS = (
        ('request_id', _is_str, False),
        ('status', lambda v: v in (SUCCESS, FAILURE), False),
        ('fog_address', _is_str, True),
        ('proxy_port', lambda v: _is_int(v) and 0 < v < 65536, True),
        ('service_id', _is_str, True),
        ('reason', _is_str, True),
    )

    def validate(self):
        Message.validate(self)
        if self.status == SUCCESS:
            if None in (self.fog_address, self.proxy_port, self.service_id):
                raise ProtocolError("success response %s is incomplete"
                                    % self.request_id)
        elif self.reason is None:
            raise ProtocolError("failure response %s has no reason"
                                % self.request_id)

    @property
    def success(self):
        return self.status == SUCCESS


class ShutdownRequest(Message):
    TYPE = "ShutdownRequest"
    FIELDS = (
        ('service_id', _is_str, False),
    )


class ShutdownResponse(Message):
    TYPE = "ShutdownResponse"
    FIELDS = (
        ('service_id', _is_str, False),
        ('response', lambda v: v in (OK, UNKNOWN_SERVICE, TEARDOWN_FAILED),
         False),
    )


class ResourceReport(Message):
    """Processor and memory utilization reported by a fog agent."""

    TYPE = "ResourceReport"
    FIELDS = (
        ('fog_id', _is_str, False),
        ('processor_utilization', lambda v: _is_number(v) and 0 <= v <= 1,
         False),
        ('memory_utilization', lambda v: _is_number(v) and 0 <= v <= 1,
         False),
        ('timestamp', _is_number, False),
    )


MESSAGE_TYPES = dict((cls.TYPE, cls) for cls in (
    Greeting, ServiceRequest, ServiceResponse, ShutdownRequest,
    ShutdownResponse, ResourceReport))


def encode(message):
    """Returns the frame of a message."""
    payload = json.dumps(message.to_dict(), sort_keys=True,
                         separators=(',', ':')).encode('utf-8')
    if len(payload) > MAX_FRAME:
        raise ProtocolError("frame of %d bytes exceeds the %d byte limit"
                            % (len(payload), MAX_FRAME))
    return HEADER.pack(len(payload)) + payload


def decode(buffer):
    """Decodes the first frame of a buffer.

    Returns:
        A (message, consumed) tuple; consumed is the frame size in bytes.

    Raises:
        NeedMoreData: the frame is not complete, nothing was consumed.
        ProtocolError: the frame is oversized or malformed.
    """
    if len(buffer) < HEADER.size:
        raise NeedMoreData("%d of %d header bytes" % (len(buffer),
                                                      HEADER.size))
    length, = HEADER.unpack_from(buffer, 0)
    if length > MAX_FRAME:
        raise ProtocolError("frame of %d bytes exceeds the %d byte limit"
                            % (length, MAX_FRAME))
    end = HEADER.size + length
    if len(buffer) < end:
        raise NeedMoreData("%d of %d frame bytes" % (len(buffer), end))
    payload = bytes(buffer[HEADER.size:end])
    return decode_payload(payload), end


def decode_payload(payload):
    if not payload:
        raise ProtocolError("empty frame")
    try:
        obj = json.loads(payload.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise ProtocolError("undecodable frame: %s" % e)
    if not isinstance(obj, dict) or 'type' not in obj:
        raise ProtocolError("frame has no type discriminator")
    cls = MESSAGE_TYPES.get(obj['type'])
    if cls is None:
        raise ProtocolError("unknown message type: %r" % (obj['type'],))
    try:
        return cls.from_dict(obj)
    except TypeError as e:
        raise ProtocolError("bad %s: %s" % (cls.TYPE, e))


class FrameReader(object):
    """Accumulates stream bytes and yields complete messages."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data):
        self._buffer.extend(data)

    def pending(self):
        return len(self._buffer)

    def messages(self):
        while True:
            try:
                message, consumed = decode(self._buffer)
            except NeedMoreData:
                return
            del self._buffer[:consumed]
            yield message


def _recv_exactly(sock, length):
    chunks = []
    got = 0
    while got < length:
        chunk = sock.recv(length - got)
        if not chunk:
            raise EOFError("connection closed after %d of %d bytes"
                           % (got, length))
        chunks.append(chunk)
        got += len(chunk)
    return b''.join(chunks)


def send_message(sock, message):
    sock.sendall(encode(message))


def recv_message(sock):
    """Reads one message from a socket; EOFError when the peer closed."""
    header = _recv_exactly(sock, HEADER.size)
    length, = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ProtocolError("frame of %d bytes exceeds the %d byte limit"
                            % (length, MAX_FRAME))
    return decode_payload(_recv_exactly(sock, length))
