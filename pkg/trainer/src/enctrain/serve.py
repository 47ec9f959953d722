"""HTTP embedding service for a saved checkpoint.

Speaks the evaluation toolkit's remote-provider contract: POST a JSON body
{"model", "role", "instruction", "texts"} and get {"embeddings": [[...]]}
back in request order. Texts arrive fully composed (the client folds any
instruction prefix in before sending), so they are embedded verbatim.

If the ENCTRAIN_API_KEY environment variable is set when the server starts,
requests must carry a matching "Authorization: Bearer <key>" header.
"""

import json
import os
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import torch

from enctrain.model import Encoder

API_KEY_ENV = "ENCTRAIN_API_KEY"
EMBED_CHUNK = 64


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep test output clean
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        key = self.server.api_key
        if key:
            auth = self.headers.get("Authorization", "")
            if auth != f"Bearer {key}":
                self._send(401, {"error": "missing or invalid API key"})
                return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length))
            texts = payload["texts"]
            if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                raise ValueError("'texts' must be a list of strings")
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            self._send(400, {"error": f"bad request: {e}"})
            return
        if not texts:
            self._send(200, {"embeddings": []})
            return
        encoder = self.server.encoder
        chunks = []
        with torch.no_grad():
            for i in range(0, len(texts), EMBED_CHUNK):
                chunks.append(encoder.embed(texts[i : i + EMBED_CHUNK]))
        embeddings = torch.cat(chunks, dim=0).cpu().tolist()
        self._send(200, {"embeddings": embeddings})


def make_server(checkpoint: str, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the server; port 0 picks a free port."""
    encoder = Encoder.load(checkpoint)
    encoder.eval_mode()
    server = ThreadingHTTPServer((host, port), _Handler)
    server.encoder = encoder
    server.api_key = os.environ.get(API_KEY_ENV)
    return server


def serve(checkpoint: str, host: str, port: int) -> None:
    server = make_server(checkpoint, host, port)
    addr = f"http://{server.server_address[0]}:{server.server_address[1]}"
    print(f"serving {checkpoint} at {addr}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
