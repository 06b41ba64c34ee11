#!/usr/bin/env python3
"""Record backend responses for the UI replay suite.

Runs the real HTTP service over the reasoning fixture stores and writes the
request -> response map the thin-client tests replay. Keys mirror exactly
what the TypeScript client sends: METHOD + path (encodeURIComponent-style
query encoding) + canonical JSON body for POSTs.
"""

import json
import sys
from pathlib import Path
from urllib.parse import quote

from fastapi.testclient import TestClient

REPO = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO / "tests"))

from conftest import air_cooler_store, ammonia_store, compressor_store, diamond_store  # noqa: E402

from iskg.service import AppState, create_app  # noqa: E402


def record():
    recorded = {}

    def grab(client, method, path, payload=None):
        if method == "GET":
            response = client.get(path)
            key = f"GET {path}"
        else:
            body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
            response = client.post(path, content=body,
                                   headers={"content-type": "application/json"})
            key = f"POST {path} {body}"
        recorded[key] = {"status": response.status_code, "body": response.json()}

    compressor = TestClient(create_app(AppState(store=compressor_store())))
    grab(compressor, "GET", f"/graph/retrieve?entity={quote('C-5611101', safe='')}")
    grab(compressor, "GET", f"/graph/retrieve?entity={quote('fine desulfurization heater', safe='')}")
    grab(compressor, "POST", "/qas", {"question": "C-5611101 consequences?", "k": 3})
    grab(compressor, "POST", "/qas", {"question": "C-5611101 consequences?", "k": 1})

    diamond = TestClient(create_app(AppState(store=diamond_store())))
    grab(diamond, "GET", f"/paths/trace?node={quote('damage', safe='')}")

    ammonia = TestClient(create_app(AppState(store=ammonia_store())))
    grab(ammonia, "GET", "/paths/inferred")

    air_cooler = TestClient(create_app(AppState(store=air_cooler_store())), raise_server_exceptions=False)
    grab(air_cooler, "POST", "/qas", {
        "question": "The oil and gas air cooler is faulty. What causes? What suggestions?",
        "k": 3,
    })
    grab(air_cooler, "POST", "/qas", {"question": "What is the capital of France?", "k": 3})

    # the provenance-link jump the UI makes: trace the cited path's end node
    ok_key = next(k for k in recorded if k.startswith("POST /qas") and "air cooler" in k)
    jump_node = recorded[ok_key]["body"]["answers"][0]["path"][-1]
    grab(air_cooler, "GET", f"/paths/trace?node={quote(jump_node, safe='')}")

    out = REPO / "frontend" / "fixtures" / "recorded.json"
    out.write_text(json.dumps(recorded, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    print(f"recorded {len(recorded)} responses to {out}")


if __name__ == "__main__":
    record()
