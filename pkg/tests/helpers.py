"""Shared test utilities: independent oracles (finite differences, pairwise
AUC), fixture corpora, manifest writers, and a local mock web server."""
from __future__ import annotations

import http.server
import json
import threading
import time
from pathlib import Path

import numpy as np

from phishcnn.nncore import make_rng


# ---------------------------------------------------------------------------
# Numeric oracles
# ---------------------------------------------------------------------------

def rel_err(analytic, reference) -> float:
    """Max absolute difference scaled by the reference magnitude."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(float(np.max(np.abs(reference))), 1e-12)
    return float(np.max(np.abs(analytic - reference))) / scale


def finite_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f w.r.t. every element
    of x. f is called with a perturbed copy; x itself is never mutated."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x)
        flat[i] = orig - h
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def pairwise_auc(scores, labels) -> float:
    """Brute-force Mann-Whitney statistic: fraction of (positive, negative)
    pairs ranked correctly, ties counted one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# Fixture corpora
# ---------------------------------------------------------------------------

PHISH_TITLE = "verify account login password urgent"
LEGIT_TITLE = "welcome to our homepage and news"

_FILLER = ("table div span link img data form main footer header row cell "
           "item list text page style script col nav body area unit").split()


def synthetic_html(i: int, label: int, rng: np.random.Generator) -> str:
    """One synthetic page; positives carry a marker phrase in the title, which
    sits inside the first 60 characters and the first few word tokens."""
    title = PHISH_TITLE if label == 1 else LEGIT_TITLE
    words = [str(_FILLER[int(rng.integers(0, len(_FILLER)))]) for _ in range(60)]
    return (f"<html><head><title>{title}</title></head>"
            f"<body id=\"u{i}\"><p>{' '.join(words)}</p></body></html>")


def synthetic_corpus(n_docs: int = 1000, seed: int = 7) -> list[tuple[str, int]]:
    """Alternating-label corpus of (html, label) pairs, half per class."""
    rng = make_rng(seed)
    return [(synthetic_html(i, i % 2, rng), i % 2) for i in range(n_docs)]


def write_manifest(root: Path, docs, timestamps=None) -> Path:
    """Write html files plus a line-delimited manifest under root.

    docs: iterable of (html, label); optional timestamps align by index.
    Returns the manifest path.
    """
    html_dir = root / "html"
    html_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (html, label) in enumerate(docs):
        name = f"doc{i:05d}"
        (html_dir / f"{name}.html").write_bytes(html.encode("utf-8"))
        entry = {"id": name, "url": f"https://example.test/{name}",
                 "label": label, "html_path": f"html/{name}.html"}
        if timestamps is not None:
            entry["collected_at"] = timestamps[i]
        else:
            entry["collected_at"] = "2018-11-11T00:00:00Z"
        lines.append(json.dumps(entry))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# Mock web server
# ---------------------------------------------------------------------------

class _Handler(http.server.BaseHTTPRequestHandler):
    def do_GET(self):
        self.server.hits.append(self.path)
        route = self.server.routes.get(self.path)
        if route is None:
            self.send_error(404)
            return
        delay = route.get("delay", 0.0)
        if delay:
            time.sleep(delay)
        body = route.get("body", b"")
        self.send_response(route.get("status", 200))
        for key, value in route.get("headers", {}).items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class MockServer:
    """Local HTTP server for fetcher tests.

    routes: path -> {status, headers, body, delay}. Records every request
    path in .hits so tests can count redirects.
    """

    def __init__(self, routes: dict):
        self._httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._httpd.routes = routes
        self._httpd.hits = []
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()

    @property
    def hits(self) -> list[str]:
        return self._httpd.hits

    def url(self, path: str) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}{path}"
