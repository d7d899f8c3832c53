"""Record request/response fixtures for the wire-contract tests.

Run from bridge/: ``python tests/record_fixtures.py``. The recorded bodies
are committed under tests/fixtures/ and validated against the schemas in
the protocol tests, so any schema-breaking change shows up as a fixture
mismatch rather than silently altering the contract.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from conftest import FAST_OPTS, texture_pair, wav_b64

from fastapi.testclient import TestClient
from morphbridge.service import create_app


def main():
    out = Path(__file__).parent / "fixtures"
    out.mkdir(exist_ok=True)
    x0, x1 = texture_pair(0.3)
    with tempfile.TemporaryDirectory() as tmp:
        app = create_app(tmp)
        with TestClient(app, raise_server_exceptions=False) as client:
            pairs_request = {
                "source_wav_b64": wav_b64(x0),
                "target_wav_b64": wav_b64(x1),
                "init_prompt": "noise textures",
                "opt": dict(FAST_OPTS),
            }
            pairs_response = client.post("/pairs", json=pairs_request)
            assert pairs_response.status_code == 200, pairs_response.text
            pair_id = pairs_response.json()["pair_id"]

            morph_request = {"pair_id": pair_id, "alpha": 0.5}
            morph_response = client.post("/morph", json=morph_request)
            assert morph_response.status_code == 200, morph_response.text

            health_response = client.get("/health")
            error_response = client.post("/morph", json={"pair_id": "missing", "alpha": 0.5})
            assert error_response.status_code == 404

            records = {
                "pairs_request": pairs_request,
                "pairs_response": pairs_response.json(),
                "morph_request": morph_request,
                "morph_response": morph_response.json(),
                "health_response": health_response.json(),
                "error_response": error_response.json(),
            }
    for name, body in records.items():
        (out / f"{name}.json").write_text(json.dumps(body, indent=2, sort_keys=True))
        print(f"recorded {name}.json")


if __name__ == "__main__":
    main()
