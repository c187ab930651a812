from pathlib import Path

import pytest
from loguru import logger

import spec_dsl

ROOT = Path(__file__).resolve().parent
SPEC_DIR = ROOT / "specs"
PROBLEM_DIR = ROOT / "problems"
FIXTURE_DIR = ROOT / "fixtures"
GOLDEN_DIR = ROOT / "test_data" / "golden_prompts"

# (file stem, instance label, shortest solution length)
CASES = [
    ("F_4_9", "F(4,9)->6", 8),
    ("F_3_5", "F(3,5)->4", 6),
    ("F_9_17", "F(9,17)->5", 20),
    ("V_4qt_9gal", "V(4qt,9gal)->6gal", 6),
    ("V_2_3_5", "V(2,3,5)->4", 4),
    ("A_4_9", "A(4,9)->6", 8),
]
CASE_IDS = [stem for stem, _, _ in CASES]


def load_case(stem: str):
    return spec_dsl.load(SPEC_DIR / f"{stem}.pspace")


def problem_text(stem: str) -> str:
    return (PROBLEM_DIR / f"{stem}.txt").read_text(encoding="utf-8").strip()


@pytest.fixture
def f49():
    return load_case("F_4_9").instance()


@pytest.fixture
def v235():
    return load_case("V_2_3_5").instance()


@pytest.fixture(autouse=True)
def quiet_logs():
    logger.remove()
    yield


@pytest.fixture
def settings_env(tmp_path, monkeypatch):
    """Run with the working directory in a scratch folder so runs/ and psw.conf stay local."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PSW_LLM_API_KEY", raising=False)
    return tmp_path
