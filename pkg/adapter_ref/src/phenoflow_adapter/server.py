"""Transports: newline-delimited JSON over stdio, or HTTP POST /rpc."""
from __future__ import annotations

import argparse
import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, TextIO

from .protocol import ReferenceAdapter


def _bad_line(message: str) -> dict[str, Any]:
    return {"id": "", "ok": False, "error": {"code": "bad_request", "message": message}}


def serve_stdio(adapter: ReferenceAdapter, stdin: TextIO | None = None, stdout: TextIO | None = None) -> None:
    """Answer one JSON object per input line until stdin closes."""
    src = stdin if stdin is not None else sys.stdin
    dst = stdout if stdout is not None else sys.stdout
    for line in src:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            response = _bad_line("request line is not valid JSON")
        else:
            if isinstance(request, dict):
                response = adapter.handle(request)
            else:
                response = _bad_line("request must be a JSON object")
        dst.write(json.dumps(response) + "\n")
        dst.flush()


class _RpcHandler(BaseHTTPRequestHandler):
    adapter: ReferenceAdapter

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        if self.path.rstrip("/") != "/rpc":
            self._reply(404, _bad_line(f"no handler at {self.path}"))
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        try:
            request = json.loads(body)
        except ValueError:
            self._reply(200, _bad_line("request body is not valid JSON"))
            return
        if not isinstance(request, dict):
            self._reply(200, _bad_line("request must be a JSON object"))
            return
        self._reply(200, self.adapter.handle(request))

    def _reply(self, status: int, doc: dict[str, Any]) -> None:
        data = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args: Any) -> None:
        print(f"[rpc] {fmt % args}", file=sys.stderr)


def make_http_server(adapter: ReferenceAdapter, host: str, port: int) -> ThreadingHTTPServer:
    handler = type("BoundRpcHandler", (_RpcHandler,), {"adapter": adapter})
    return ThreadingHTTPServer((host, port), handler)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phenoflow-adapter",
        description="Vision adapter with a green-threshold fallback segmenter.",
    )
    parser.add_argument("--http", action="store_true", help="serve HTTP /rpc instead of stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8140)
    args = parser.parse_args(argv)

    adapter = ReferenceAdapter()
    if args.http:
        server = make_http_server(adapter, args.host, args.port)
        print(f"listening on http://{args.host}:{server.server_address[1]}/rpc", file=sys.stderr)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0
    serve_stdio(adapter)
    return 0


if __name__ == "__main__":
    sys.exit(main())
