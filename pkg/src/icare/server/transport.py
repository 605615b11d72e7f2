"""Stream transport for bulk ingest: accepts length-prefixed frames on a
TCP socket and replies with ack frames carrying the accepted count."""

from __future__ import annotations

import socketserver
import threading

from ..protocol import FrameError, frame_ack, read_frame, unframe_bulk
from .core import HealthServer


class _BulkHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        core: HealthServer = self.server.core  # type: ignore[attr-defined]
        sock = self.request
        while True:
            try:
                data = read_frame(sock.recv)
            except FrameError:
                return  # peer closed or sent garbage; drop the connection
            try:
                count = core.ingest_bulk(unframe_bulk(data))
            except FrameError:
                count = 0  # malformed frame: rejected, no partial insert
            try:
                sock.sendall(frame_ack(count))
            except OSError:
                return


class BulkListener(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, core: HealthServer, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _BulkHandler)
        self.core = core

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def send_bulk_frame(host: str, port: int, frame_bytes: bytes, timeout: float = 5.0) -> int:
    """Client side: one frame out, one ack back; raises OSError on
    transport failure so the caller can retry at the next interval."""
    import socket

    from ..protocol import unframe_ack

    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(frame_bytes)
        ack = read_frame(sock.recv)
        return unframe_ack(ack)
