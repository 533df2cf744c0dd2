"""Dump the server's OpenAPI document to docs/openapi.json."""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from capture3d.server import create_app

here = os.path.dirname(os.path.abspath(__file__))
out = os.path.join(here, "..", "docs", "openapi.json")
app = create_app()
with open(out, "w", encoding="utf-8") as fh:
    json.dump(app.openapi(), fh, indent=2, sort_keys=True)
app.state.service.shutdown()
print(f"wrote {os.path.normpath(out)}")
