"""Shared fixtures: tiny datasets and stub HTTP services."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from denseval.corpus import Dataset
from helpers_denseval import hash_vec, make_dataset


@pytest.fixture
def dataset() -> Dataset:
    return make_dataset()


@pytest.fixture
def data_dir(tmp_path, dataset):
    """The tiny dataset written as a passages/queries/labels TSV directory."""
    from denseval.corpus import save_dataset

    d = tmp_path / "data"
    d.mkdir()
    save_dataset(
        dataset,
        str(d / "passages.tsv"),
        str(d / "queries.tsv"),
        str(d / "labels.tsv"),
    )
    return d


class _StubServer:
    def __init__(self, handler_cls):
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self.fail_next = 0  # respond HTTP 500 to this many requests
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
        self.httpd.stub = self
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


class _EmbedHandler(BaseHTTPRequestHandler):
    dim = 8

    def log_message(self, *args):
        pass

    def do_POST(self):
        stub = self.server.stub
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        stub.requests.append(body)
        stub.headers.append(dict(self.headers))
        if stub.fail_next > 0:
            stub.fail_next -= 1
            self.send_response(500)
            self.end_headers()
            return
        embeddings = [hash_vec(t, self.dim).tolist() for t in body["texts"]]
        if getattr(stub, "short_response", False):
            embeddings = embeddings[:-1]
        payload = json.dumps({"embeddings": embeddings}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


class _LlmHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        stub = self.server.stub
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        stub.requests.append(body)
        stub.headers.append(dict(self.headers))
        if stub.fail_next > 0:
            stub.fail_next -= 1
            self.send_response(500)
            self.end_headers()
            return
        user = body["messages"][-1]["content"]
        text = stub.responder(user) if getattr(stub, "responder", None) else "1. a\n2. b"
        payload = json.dumps({"text": text}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def embed_server():
    server = _StubServer(_EmbedHandler)
    yield server
    server.close()


@pytest.fixture
def llm_server():
    server = _StubServer(_LlmHandler)
    yield server
    server.close()
