"""Regenerate the offline judge fixture: 16 scored cases, their labels and canned replies.

Run from the repository root: ``python3 tests/fixtures/make_judge_fixture.py``.
Replies follow the requested ``CASE <n>: same|different - <reason>`` format and
are keyed by prompt hash, exactly as an audit log from a live run would be.
"""

from pathlib import Path

from driftbench.core import BenchmarkSample, Manifest, SampleSubtype, header_record, save_manifest, write_jsonl
from driftbench.llm import CaseInput, EndpointConfig, PromptSpec, prompt_hash, render_prompt

HERE = Path(__file__).parent

# (id, subtype, sim_12, sim_23); the first pair is the worked example from the prompt design
CASES = [
    ("judge_00", "non_drift", 0.9963, 0.9872),
    ("judge_01", "non_drift", 0.9911, 0.9840),
    ("judge_02", "non_drift", 0.9795, 0.9888),
    ("judge_03", "non_drift", 0.9702, 0.9655),
    ("judge_04", "hard_negative", 0.9541, 0.9618),
    ("judge_05", "hard_negative", 0.9422, 0.9780),
    ("judge_06", "hard_negative", 0.9870, 0.9133),
    ("judge_07", "hard_negative", 0.8815, 0.9504),
    ("judge_08", "abrupt_drift", 0.9934, 0.7416),
    ("judge_09", "abrupt_drift", 0.8120, 0.9902),
    ("judge_10", "abrupt_drift", 0.9850, 0.8524),
    ("judge_11", "abrupt_drift", 0.9561, 0.9208),
    ("judge_12", "smooth_morph", 0.9402, 0.8615),
    ("judge_13", "smooth_morph", 0.9127, 0.8890),
    ("judge_14", "smooth_morph", 0.9655, 0.9311),
    ("judge_15", "smooth_morph", 0.8933, 0.8711),
]


def reply_line(n, a, b):
    low = min(a, b)
    if low < 0.93:
        where = "first" if a < b else "second"
        return f"CASE {n}: different - the {where} boundary drops to {low:.4f}, identity shifts"
    return f"CASE {n}: same - both scores stay at or above {low:.4f}"


def main():
    samples = tuple(BenchmarkSample(sid, f"audio/{sid}.wav", SampleSubtype(st).label, SampleSubtype(st), 12.0)
                    for sid, st, _, _ in CASES)
    save_manifest(Manifest(samples, {"note": "labels only; audio not shipped"}), HERE / "judge_manifest.jsonl")
    write_jsonl(HERE / "judge_scores.jsonl",
                [header_record(config_hash="fixture", seed=0, encoder_id="mfcc13-pooled")]
                + [{"sample_id": sid, "sim_12": a, "sim_23": b, "encoder_id": "mfcc13-pooled"}
                   for sid, _, a, b in CASES])
    batch = tuple(CaseInput(sid, (a, b)) for sid, _, a, b in CASES)
    prompt = render_prompt(PromptSpec(batch, "cosine similarity", "mfcc13-pooled", "cosine"))
    text = "\n".join(reply_line(i, a, b) for i, (_, _, a, b) in enumerate(CASES, 1))
    write_jsonl(HERE / "judge_replay.jsonl", [
        header_record(model=EndpointConfig().model_name, note="canned replies keyed by prompt hash"),
        {"prompt_hash": prompt_hash(prompt), "response": text, "latency_ms": 850.0,
         "timestamp": "2026-01-01T00:00:00.000+00:00", "prompt": prompt}])


if __name__ == "__main__":
    main()
