"""Generic portal client: send command lines, print paired responses.

Responses are written as raw bytes, untouched: what the portal sent is
what lands on stdout (minus the line terminator handling).
"""

from __future__ import annotations

import socket
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_NOK = 1
EXIT_CONNECT = 2


class LineReader:
    """Buffered LF-line reader over a socket; readline() is terminator-free."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buffer = b""

    def readline(self) -> bytes | None:
        """Next line without its LF (a trailing CR is stripped), or None on EOF."""
        while b"\n" not in self._buffer:
            chunk = self._sock.recv(65536)
            if chunk == b"":
                return None
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line[:-1] if line.endswith(b"\r") else line


def read_script(path: str | Path) -> list[str]:
    """One command per line; blanks and '#' comments skipped."""
    commands = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            commands.append(line)
    return commands


def run_client(
    host: str,
    port: int,
    commands: list[str] | None = None,
    interactive: bool = False,
    strict: bool = False,
    out=None,
    stdin=None,
    timeout: float = 60.0,
) -> int:
    """Send each command and print its response.

    Batch mode prints "<command> -> <response>" per exchange; interactive
    mode prints the bare response per typed line.  Exit status: 2 when the
    portal is unreachable or closes mid-session, 1 when --strict and some
    response was "NOK", else 0.
    """
    out = out if out is not None else sys.stdout.buffer
    stdin = stdin if stdin is not None else sys.stdin
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as e:
        print(f"cannot connect to {host}:{port}: {e}", file=sys.stderr)
        return EXIT_CONNECT
    saw_nok = False
    try:
        sock.settimeout(timeout)
        reader = LineReader(sock)

        def exchange(command: str) -> bytes | None:
            sock.sendall(command.encode("latin-1", "replace") + b"\n")
            return reader.readline()

        if interactive:
            for typed in stdin:
                typed = typed.rstrip("\r\n")
                if not typed:
                    continue
                response = exchange(typed)
                if response is None:
                    print("connection closed by portal", file=sys.stderr)
                    return EXIT_CONNECT
                out.write(response + b"\n")
                out.flush()
                saw_nok = saw_nok or response == b"NOK"
        else:
            for command in commands or []:
                response = exchange(command)
                if response is None:
                    print("connection closed by portal", file=sys.stderr)
                    return EXIT_CONNECT
                out.write(command.encode("latin-1", "replace") + b" -> " + response + b"\n")
                out.flush()
                saw_nok = saw_nok or response == b"NOK"
    except OSError as e:
        print(f"portal connection failed: {e}", file=sys.stderr)
        return EXIT_CONNECT
    finally:
        try:
            sock.close()
        except OSError:
            pass
    if strict and saw_nok:
        return EXIT_NOK
    return EXIT_OK
