"""Shared HTTP-server plumbing."""

import logging
from http.server import ThreadingHTTPServer

log = logging.getLogger(__name__)


class QuietHTTPServer(ThreadingHTTPServer):
    """Keeps connection-reset tracebacks out of stderr during shutdown."""

    daemon_threads = True

    def handle_error(self, request, client_address):
        log.debug("http handler error from %s", client_address, exc_info=True)
