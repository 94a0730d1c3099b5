import re
from pathlib import Path

import pytest

from driftbench.core import load_manifest
from driftbench.llm import Reply
from driftbench.synth import BasePool, BuildConfig, build_benchmark
from driftbench.toypool import make_toy_pool

_CASE = re.compile(r"^CASE (\d+): \(([-\d.]+), ([-\d.]+)\)$", re.MULTILINE)


class RuleResponder:
    """Stand-in chat model for offline tests: answers each CASE line with the min rule.

    Only reads the two scores, so it works for cosine-mode prompts. Records
    every prompt it saw.
    """

    def __init__(self, tau=0.9, drop=(), garble=()):
        self.tau = tau
        self.drop = set(drop)
        self.garble = set(garble)
        self.prompts = []

    def __call__(self, prompt, endpoint):
        self.prompts.append(prompt)
        lines = []
        for m in _CASE.finditer(prompt):
            n, a, b = int(m.group(1)), float(m.group(2)), float(m.group(3))
            if n in self.drop:
                continue
            if n in self.garble:
                lines.append(f"CASE {n}: could be same, could be different")
                continue
            word = "different" if min(a, b) < self.tau else "same"
            lines.append(f"CASE {n}: {word} - lowest score {min(a, b):.4f}")
        return Reply("\n".join(lines), 12.5, "2026-01-01T00:00:00.000+00:00", "scripted")


@pytest.fixture
def rule_responder():
    return RuleResponder


@pytest.fixture(scope="session")
def toy_pool_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("pool")
    make_toy_pool(root, n_speakers=4, clips_per_speaker=6, seed=0)
    return root


@pytest.fixture(scope="session")
def toy_pool(toy_pool_dir) -> BasePool:
    return BasePool.from_directory(toy_pool_dir)


@pytest.fixture(scope="session")
def small_benchmark(toy_pool, tmp_path_factory):
    """Four samples per subtype; enough for pipeline plumbing tests."""
    out = tmp_path_factory.mktemp("small_bench")
    build_benchmark(toy_pool, out, BuildConfig(counts=(4, 4, 4, 4), seed=3))
    return load_manifest(out / "manifest.jsonl")


ACCEPTANCE_RESULTS: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[n])


@pytest.fixture
def criterion():
    return record_criterion
