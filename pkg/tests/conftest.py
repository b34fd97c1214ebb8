from __future__ import annotations

import pytest

from revieweval.gateway import Gateway, ScriptedBackend, ScriptTable


class ScriptBuilder:
    """Assembles a script table payload without hand-writing fingerprints."""

    def __init__(self):
        self.payload = {"chat": [], "embeddings": {}}

    def chat(self, template_id, variables, response, truncated=False):
        self.payload["chat"].append(
            {
                "template_id": template_id,
                "variables": variables,
                "response": response,
                "truncated": truncated,
            }
        )
        return self

    def embedding(self, text, vector):
        self.payload["embeddings"][text] = list(vector)
        return self

    def hashed(self, dim=8):
        self.payload["hashed_embeddings"] = {"dim": dim}
        return self

    def table(self) -> ScriptTable:
        return ScriptTable.from_dict(self.payload)

    def gateway(self) -> Gateway:
        return Gateway(ScriptedBackend(self.table()))


@pytest.fixture
def script():
    return ScriptBuilder()
