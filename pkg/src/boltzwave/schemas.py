"""Access to the JSON schemas of the report files."""

import json
from importlib import resources


def load_schema(name: str) -> dict:
    return json.loads(resources.files("boltzwave").joinpath("data", "schemas", f"{name}.json").read_text())
