"""ASCII line protocol to the motion controller, plus a simulated device.

Requests and responses are single LF-terminated lines of space-separated
ASCII fields (a CR before the LF is tolerated on input, never emitted).
Keywords are case-sensitive.

    host -> device            device -> host
    -------------             ---------------
    HOME                      OK | ERR <code>
    MOVE <az> <el>            OK | ERR <code>
    POS?                      POS <az> <el> | ERR <code>
    LIM?                      LIM <az01> <el01>
    STOP                      OK

Error codes: 1 unknown keyword, 2 malformed integer, 3 wrong field count,
4 limit strike, 5 not homed.  MOVE arguments are relative microsteps and
must fit a signed 32-bit integer.
"""

from __future__ import annotations

import os
import re
import select
from dataclasses import dataclass
from typing import IO, Protocol, Union

from . import rotor
from .geometry import AngularPose
from .rotor import Axis, MovePlan, RotorConfig, RotorState

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

ERR_UNKNOWN_KEYWORD = 1
ERR_MALFORMED_INT = 2
ERR_FIELD_COUNT = 3
ERR_LIMIT_STRIKE = 4
ERR_NOT_HOMED = 5

_INT_RE = re.compile(rb"^-?[0-9]+$")


class ProtocolError(ValueError):
    """A line that cannot be parsed; carries the wire error code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Home:
    pass


@dataclass(frozen=True)
class Move:
    az_steps: int
    el_steps: int

    def __post_init__(self) -> None:
        for v in (self.az_steps, self.el_steps):
            if not INT32_MIN <= v <= INT32_MAX:
                raise ValueError(f"step delta {v} exceeds signed 32-bit range")


@dataclass(frozen=True)
class QueryPos:
    pass


@dataclass(frozen=True)
class QueryLim:
    pass


@dataclass(frozen=True)
class Stop:
    pass


Command = Union[Home, Move, QueryPos, QueryLim, Stop]


@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Err:
    code: int


@dataclass(frozen=True)
class Pos:
    az_steps: int
    el_steps: int


@dataclass(frozen=True)
class Lim:
    az_at_min: bool
    el_at_min: bool


Response = Union[Ok, Err, Pos, Lim]


# ---------------------------------------------------------------------------
# Encoding / parsing
# ---------------------------------------------------------------------------


def encode_command(cmd: Command) -> bytes:
    if isinstance(cmd, Home):
        return b"HOME\n"
    if isinstance(cmd, Move):
        return b"MOVE %d %d\n" % (cmd.az_steps, cmd.el_steps)
    if isinstance(cmd, QueryPos):
        return b"POS?\n"
    if isinstance(cmd, QueryLim):
        return b"LIM?\n"
    if isinstance(cmd, Stop):
        return b"STOP\n"
    raise TypeError(f"not a command: {cmd!r}")


def encode_response(resp: Response) -> bytes:
    if isinstance(resp, Ok):
        return b"OK\n"
    if isinstance(resp, Err):
        return b"ERR %d\n" % resp.code
    if isinstance(resp, Pos):
        return b"POS %d %d\n" % (resp.az_steps, resp.el_steps)
    if isinstance(resp, Lim):
        return b"LIM %d %d\n" % (resp.az_at_min, resp.el_at_min)
    raise TypeError(f"not a response: {resp!r}")


def _split_line(line: bytes) -> list[bytes]:
    if line.endswith(b"\r\n"):
        line = line[:-2]
    elif line.endswith(b"\n"):
        line = line[:-1]
    if not line:
        raise ProtocolError(ERR_UNKNOWN_KEYWORD, "empty line")
    if any(b < 0x20 or b > 0x7E for b in line):
        raise ProtocolError(ERR_MALFORMED_INT, "non-printable byte in line")
    fields = line.split(b" ")
    if any(f == b"" for f in fields):
        raise ProtocolError(ERR_MALFORMED_INT, "empty field (stray space)")
    return fields


def _parse_int(field: bytes) -> int:
    if not _INT_RE.match(field):
        raise ProtocolError(
            ERR_MALFORMED_INT, f"not an integer: {field.decode('ascii')!r}"
        )
    value = int(field)
    if not INT32_MIN <= value <= INT32_MAX:
        raise ProtocolError(
            ERR_MALFORMED_INT, f"integer out of 32-bit range: {value}"
        )
    return value


def parse_command(line: bytes) -> Command:
    """Parse one request line.  Raises ProtocolError with the wire code."""
    fields = _split_line(line)
    keyword, args = fields[0], fields[1:]
    arity = {b"HOME": 0, b"MOVE": 2, b"POS?": 0, b"LIM?": 0, b"STOP": 0}
    if keyword not in arity:
        raise ProtocolError(
            ERR_UNKNOWN_KEYWORD, f"unknown keyword {keyword.decode('ascii')!r}"
        )
    if len(args) != arity[keyword]:
        raise ProtocolError(
            ERR_FIELD_COUNT,
            f"{keyword.decode('ascii')} takes {arity[keyword]} fields, "
            f"got {len(args)}",
        )
    if keyword == b"HOME":
        return Home()
    if keyword == b"MOVE":
        return Move(az_steps=_parse_int(args[0]), el_steps=_parse_int(args[1]))
    if keyword == b"POS?":
        return QueryPos()
    if keyword == b"LIM?":
        return QueryLim()
    return Stop()


def parse_response(line: bytes) -> Response:
    """Parse one response line.  Raises ProtocolError on garbage."""
    fields = _split_line(line)
    keyword, args = fields[0], fields[1:]
    arity = {b"OK": 0, b"ERR": 1, b"POS": 2, b"LIM": 2}
    if keyword not in arity:
        raise ProtocolError(
            ERR_UNKNOWN_KEYWORD, f"unknown keyword {keyword.decode('ascii')!r}"
        )
    if len(args) != arity[keyword]:
        raise ProtocolError(
            ERR_FIELD_COUNT,
            f"{keyword.decode('ascii')} takes {arity[keyword]} fields, "
            f"got {len(args)}",
        )
    if keyword == b"OK":
        return Ok()
    if keyword == b"ERR":
        return Err(code=_parse_int(args[0]))
    if keyword == b"POS":
        return Pos(az_steps=_parse_int(args[0]), el_steps=_parse_int(args[1]))
    flags = []
    for f in args:
        if f not in (b"0", b"1"):
            raise ProtocolError(
                ERR_MALFORMED_INT, f"limit flag must be 0 or 1, got {f!r}"
            )
        flags.append(f == b"1")
    return Lim(az_at_min=flags[0], el_at_min=flags[1])


# ---------------------------------------------------------------------------
# Simulated device
# ---------------------------------------------------------------------------


class SimDevice:
    """Bit-exact stand-in for the motion-controller firmware.

    Tracks true mechanical step counters with limit switches at the travel
    minima.  Until homed the counters are untrusted: MOVE and POS? answer
    ERR 5.  HOME runs the full seek/retreat/re-seek sequence against the
    simulated switches and zeroes the counters at the travel minima.  MOVE
    clamps at either travel end and reports ERR 4 after moving to the
    boundary.
    """

    def __init__(self, config: RotorConfig | None = None):
        self.config = config or RotorConfig()
        cfg = self.config
        self._az_min = rotor.angle_to_steps(cfg, Axis.AZ, cfg.az_travel_deg[0])
        self._az_max = rotor.angle_to_steps(cfg, Axis.AZ, cfg.az_travel_deg[1])
        self._el_min = rotor.angle_to_steps(cfg, Axis.EL, cfg.el_travel_deg[0])
        self._el_max = rotor.angle_to_steps(cfg, Axis.EL, cfg.el_travel_deg[1])
        # Power-up at an unknown position; the switches happen to be closed.
        self.az_steps = self._az_min
        self.el_steps = self._el_min
        self.homed = False

    def limit_flags(self) -> tuple[bool, bool]:
        return (self.az_steps <= self._az_min, self.el_steps <= self._el_min)

    def handle_line(self, line: bytes) -> bytes:
        try:
            cmd = parse_command(line)
        except ProtocolError as exc:
            return encode_response(Err(code=exc.code))
        return encode_response(self.apply(cmd))

    def apply(self, cmd: Command) -> Response:
        if isinstance(cmd, Home):
            self._run_homing()
            return Ok()
        if isinstance(cmd, Move):
            return self._move(cmd)
        if isinstance(cmd, QueryPos):
            if not self.homed:
                return Err(code=ERR_NOT_HOMED)
            return Pos(az_steps=self.az_steps, el_steps=self.el_steps)
        if isinstance(cmd, QueryLim):
            az, el = self.limit_flags()
            return Lim(az_at_min=az, el_at_min=el)
        if isinstance(cmd, Stop):
            return Ok()
        raise TypeError(f"not a command: {cmd!r}")

    def _move(self, cmd: Move) -> Response:
        if not self.homed:
            return Err(code=ERR_NOT_HOMED)
        az = self.az_steps + cmd.az_steps
        el = self.el_steps + cmd.el_steps
        az_clamped = min(max(az, self._az_min), self._az_max)
        el_clamped = min(max(el, self._el_min), self._el_max)
        struck = az_clamped != az or el_clamped != el
        self.az_steps = az_clamped
        self.el_steps = el_clamped
        return Err(code=ERR_LIMIT_STRIKE) if struck else Ok()

    def _run_homing(self) -> None:
        cfg = self.config
        state = RotorState()
        state = rotor.home_step(cfg, state, all(self.limit_flags()))
        # Fast seek: drive both axes down until the switches close.
        self.az_steps = self._az_min
        self.el_steps = self._el_min
        state = rotor.home_step(cfg, state, all(self.limit_flags()))
        # Retreat by the fixed backoff on each axis.
        self.az_steps = self._az_min + rotor.backoff_steps(cfg, Axis.AZ)
        self.el_steps = self._el_min + rotor.backoff_steps(cfg, Axis.EL)
        state = rotor.home_step(cfg, state, all(self.limit_flags()))
        # Slow re-approach back onto the switches.
        self.az_steps = self._az_min
        self.el_steps = self._el_min
        state = rotor.home_step(cfg, state, all(self.limit_flags()))
        if state.phase is not rotor.HomingPhase.ZEROED:
            raise RuntimeError(f"homing ended in phase {state.phase}")
        self.az_steps = state.az_steps
        self.el_steps = state.el_steps
        self.homed = True


def device_apply(device: SimDevice, cmd: Command) -> Response:
    """Apply one parsed command to a simulated device."""
    return device.apply(cmd)


# ---------------------------------------------------------------------------
# Transport and host-side client
# ---------------------------------------------------------------------------


class RotorError(RuntimeError):
    """Base class for device-reported and transport-level rotor failures."""


class LimitStrikeError(RotorError):
    pass


class UnhomedDeviceError(RotorError):
    pass


class DeviceReplyError(RotorError):
    """Unexpected or unparseable device reply."""


class LineTransport(Protocol):
    """Half-duplex request/response line link."""

    def request(self, line: bytes) -> bytes: ...


class SimDeviceTransport:
    """In-process transport to a SimDevice."""

    def __init__(self, device: SimDevice):
        self.device = device

    def request(self, line: bytes) -> bytes:
        return self.device.handle_line(line)


class TranscriptTransport:
    """Wraps any transport and logs traffic for audit.

    Transcript lines are prefixed ``>`` for host-to-device and ``<`` for
    device-to-host, with the line terminator stripped.
    """

    def __init__(self, inner: LineTransport, sink: IO[str]):
        self.inner = inner
        self.sink = sink

    def request(self, line: bytes) -> bytes:
        self._log(">", line)
        reply = self.inner.request(line)
        self._log("<", reply)
        return reply

    def _log(self, prefix: str, line: bytes) -> None:
        text = line.decode("ascii", errors="backslashreplace").rstrip("\r\n")
        self.sink.write(f"{prefix} {text}\n")


class TransportError(RotorError):
    """The link to the device failed (open, timeout, or EOF)."""


class FdTransport:
    """Line transport over a character device (serial adapter or pty).

    Puts real terminals into raw mode at 115200 baud on a best-effort
    basis; replies must arrive within ``timeout_s``.
    """

    def __init__(self, path: str, timeout_s: float = 2.0):
        try:
            self.fd = os.open(path, os.O_RDWR | os.O_NOCTTY)
        except OSError as exc:
            raise TransportError(f"cannot open device {path}: {exc}") from exc
        self.timeout_s = timeout_s
        self._buf = b""
        self._configure()

    def _configure(self) -> None:
        if not os.isatty(self.fd):
            return
        try:
            import termios
            import tty

            tty.setraw(self.fd)
            attrs = termios.tcgetattr(self.fd)
            attrs[4] = attrs[5] = termios.B115200
            termios.tcsetattr(self.fd, termios.TCSANOW, attrs)
        except (ImportError, OSError):
            pass

    def request(self, line: bytes) -> bytes:
        try:
            os.write(self.fd, line)
        except OSError as exc:
            raise TransportError(f"write failed: {exc}") from exc
        while b"\n" not in self._buf:
            ready, _, _ = select.select([self.fd], [], [], self.timeout_s)
            if not ready:
                raise TransportError(
                    f"no reply within {self.timeout_s:g} s"
                )
            try:
                chunk = os.read(self.fd, 4096)
            except OSError as exc:
                raise TransportError(f"read failed: {exc}") from exc
            if not chunk:
                raise TransportError("device closed the link")
            self._buf += chunk
        reply, self._buf = self._buf.split(b"\n", 1)
        return reply + b"\n"

    def close(self) -> None:
        os.close(self.fd)


class RotorClient:
    """Host-side rotor handle: plans moves locally, drives them on the wire.

    Mirrors the device step counters with a ``RotorState`` so that backlash
    direction history survives across moves.
    """

    def __init__(
        self,
        transport: LineTransport,
        config: RotorConfig | None = None,
        settle_s: float = rotor.DEFAULT_SETTLE_S,
    ):
        self.transport = transport
        self.config = config or RotorConfig()
        self.settle_s = settle_s
        self._state = RotorState()

    @property
    def homed(self) -> bool:
        return self._state.homed

    @property
    def state(self) -> RotorState:
        return self._state

    def _roundtrip(self, cmd: Command) -> Response:
        raw = self.transport.request(encode_command(cmd))
        try:
            return parse_response(raw)
        except ProtocolError as exc:
            raise DeviceReplyError(f"unparseable reply {raw!r}: {exc}") from exc

    def _expect_ok(self, cmd: Command) -> None:
        resp = self._roundtrip(cmd)
        if isinstance(resp, Ok):
            return
        if isinstance(resp, Err):
            if resp.code == ERR_LIMIT_STRIKE:
                raise LimitStrikeError("device hit a travel limit")
            if resp.code == ERR_NOT_HOMED:
                raise UnhomedDeviceError("device refused: not homed")
            raise DeviceReplyError(f"device error code {resp.code}")
        raise DeviceReplyError(f"unexpected reply {resp!r}")

    def home(self) -> None:
        self._expect_ok(Home())
        self._state = rotor.homed_state(self.config)

    def move_to(self, target: AngularPose, settle_s: float | None = None) -> MovePlan:
        plan, next_state = rotor.plan_move(
            self.config,
            self._state,
            target,
            self.settle_s if settle_s is None else settle_s,
        )
        if plan.az_delta_steps != 0 or plan.el_delta_steps != 0:
            self._expect_ok(Move(plan.az_delta_steps, plan.el_delta_steps))
        self._state = next_state
        return plan

    def pose(self) -> AngularPose:
        return rotor.pose_of(self.config, self._state)

    def query_pos(self) -> tuple[int, int]:
        resp = self._roundtrip(QueryPos())
        if isinstance(resp, Pos):
            return (resp.az_steps, resp.el_steps)
        if isinstance(resp, Err) and resp.code == ERR_NOT_HOMED:
            raise UnhomedDeviceError("device refused: not homed")
        raise DeviceReplyError(f"unexpected reply {resp!r}")

    def query_lim(self) -> tuple[bool, bool]:
        resp = self._roundtrip(QueryLim())
        if isinstance(resp, Lim):
            return (resp.az_at_min, resp.el_at_min)
        raise DeviceReplyError(f"unexpected reply {resp!r}")

    def stop(self) -> None:
        self._expect_ok(Stop())
