import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from predspec import TokenStream, build_sam, compute_occurrences


@pytest.fixture
def sam_of():
    def make(text_or_tokens):
        if isinstance(text_or_tokens, str):
            stream = TokenStream.from_text(text_or_tokens)
        else:
            stream = TokenStream(np.asarray(text_or_tokens), int(max(text_or_tokens)) + 1)
        return stream, compute_occurrences(build_sam(stream))

    return make
