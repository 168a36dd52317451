"""HTTP inference service.

POST /predict takes a raw WAV body and returns class probabilities; GET
/health reports liveness and the loaded model id. The artifact and scaler
are shared immutable state, so concurrent requests are independent and
identical requests produce byte-identical responses.
"""
from __future__ import annotations

import json
import secrets
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .audio_io import AudioClip, decode_wav
from .classic_ml import ModelArtifact, payload_checksum, predict_proba
from .corpus import EMOTION_NAMES
from .errors import (
    AudioFormatError,
    EmptyAudioError,
    InsufficientDataError,
    UnsupportedEncodingError,
)
from .features import extract_feature_vector
from .preprocess import PreprocessConfig, preprocess_clip

MAX_BODY_BYTES = 10 * 1024 * 1024


@dataclass(frozen=True)
class PredictionResponse:
    probabilities: dict
    predicted: str
    model_id: str

    def to_dict(self) -> dict:
        return {
            "probabilities": self.probabilities,
            "predicted": self.predicted,
            "model_id": self.model_id,
        }


def model_id(artifact: ModelArtifact) -> str:
    return payload_checksum(artifact.payload)


def prediction_for_clip(
    artifact: ModelArtifact,
    clip: AudioClip,
    pre_cfg: PreprocessConfig | None = None,
) -> PredictionResponse:
    """Preprocess one clip and classify it.

    Raises EmptyAudioError if nothing survives preprocessing and
    InsufficientDataError if the survivor is shorter than the configured
    minimum duration.
    """
    cfg = pre_cfg or PreprocessConfig()
    processed = preprocess_clip(clip, cfg)
    min_samples = int(round(cfg.min_duration_s * processed.sample_rate))
    if len(processed) == 0:
        raise EmptyAudioError("clip is empty after preprocessing")
    if len(processed) < min_samples:
        raise InsufficientDataError(
            f"clip is {processed.duration:.3f} s after preprocessing, "
            f"need at least {cfg.min_duration_s:g} s"
        )
    vector = extract_feature_vector(processed)
    probs = predict_proba(artifact, vector)[0]
    probabilities = {EMOTION_NAMES[c]: float(probs[c]) for c in range(len(EMOTION_NAMES))}
    predicted = EMOTION_NAMES[int(np.argmax(probs))]
    return PredictionResponse(probabilities, predicted, model_id(artifact))


def _response_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True) + "\n").encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # set by make_server
    artifact: ModelArtifact = None
    pre_cfg: PreprocessConfig = None
    max_body_bytes: int = MAX_BODY_BYTES

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, doc: dict) -> None:
        body = _response_bytes(doc)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/health":
            self._send(404, {"error": "not found"})
            return
        self._send(200, {"status": "ok", "model_id": model_id(self.artifact)})

    def do_POST(self):
        if self.path != "/predict":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send(400, {"error": "bad Content-Length"})
            return
        if length > self.max_body_bytes:
            # drain reasonable oversizes so the client sees the 413 instead
            # of a broken pipe; give up on absurd ones and just close
            remaining = length
            if length <= 8 * self.max_body_bytes:
                while remaining > 0:
                    chunk = self.rfile.read(min(remaining, 1 << 20))
                    if not chunk:
                        break
                    remaining -= len(chunk)
            self.close_connection = True
            self._send(413, {"error": f"request body exceeds {self.max_body_bytes} bytes"})
            return
        body = self.rfile.read(length)
        try:
            clip = decode_wav(body, source_id="request")
            response = prediction_for_clip(self.artifact, clip, self.pre_cfg)
        except (AudioFormatError, UnsupportedEncodingError) as exc:
            self._send(415, {"error": f"body is not decodable WAV audio: {exc}"})
        except (EmptyAudioError, InsufficientDataError) as exc:
            self._send(422, {"error": str(exc)})
        except Exception:
            # opaque id only; details stay server-side
            self._send(500, {"error": "internal error", "id": secrets.token_hex(8)})
        else:
            self._send(200, response.to_dict())


def make_server(
    artifact: ModelArtifact,
    host: str = "127.0.0.1",
    port: int = 0,
    pre_cfg: PreprocessConfig | None = None,
    max_body_bytes: int = MAX_BODY_BYTES,
) -> ThreadingHTTPServer:
    """Build a threading HTTP server bound to (host, port); port 0 picks one."""
    handler = type(
        "BoundHandler",
        (_Handler,),
        {
            "artifact": artifact,
            "pre_cfg": pre_cfg or PreprocessConfig(),
            "max_body_bytes": max_body_bytes,
        },
    )
    return ThreadingHTTPServer((host, port), handler)


def serve_http(
    artifact: ModelArtifact,
    host: str = "127.0.0.1",
    port: int = 8000,
    pre_cfg: PreprocessConfig | None = None,
    max_body_bytes: int = MAX_BODY_BYTES,
) -> None:
    """Run the service until interrupted."""
    server = make_server(artifact, host, port, pre_cfg, max_body_bytes)
    bound = server.server_address
    print(f"serving on http://{bound[0]}:{bound[1]} (model {model_id(artifact)[:12]})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
