import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
CORPUS = TESTS / "corpus"
sys.path.insert(0, str(TESTS))

FALLBACK_KERNELS = {"lds_fallback", "readlane_fallback"}


def corpus_files():
    return sorted(CORPUS.glob("*.asm"))


def supported_files():
    return [p for p in corpus_files() if p.stem not in FALLBACK_KERNELS]


@pytest.fixture
def copy_listing() -> str:
    return (CORPUS / "copy.asm").read_text()
