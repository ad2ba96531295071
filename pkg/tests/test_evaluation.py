from __future__ import annotations

import json

import numpy as np
import pytest

from oracles import bertscore_brute_oracle, cosine_oracle

from netrca.embeddings import HashedTrigramTokenEmbedder
from netrca.evaluation import (
    EVAL_TABLE_COLUMNS,
    EvalCase,
    EvaluationError,
    bertscore,
    load_eval_cases,
    render_eval_table,
    run_eval_suite,
    sentence_cosine,
)
from netrca.faultlab import list_scenarios

EMB = HashedTrigramTokenEmbedder()


# ---------------------------------------------------------------- bertscore


def test_identical_texts_score_one():
    text = "the gateway cpu is saturated and latency rises"
    p, r, f1 = bertscore(text, text, EMB)
    assert p == pytest.approx(1.0, abs=1e-9)
    assert r == pytest.approx(1.0, abs=1e-9)
    assert f1 == pytest.approx(1.0, abs=1e-9)


def test_precision_recall_swap_symmetry():
    a = "high cpu load on the gateway node"
    b = "packet loss detected on the spine switch fabric"
    pa, ra, _ = bertscore(a, b, EMB)
    pb, rb, _ = bertscore(b, a, EMB)
    assert pa == pytest.approx(rb, abs=1e-12)
    assert ra == pytest.approx(pb, abs=1e-12)


class _FixedTokenEmbedder:
    """Maps each token to a hand-built vector for exact-arithmetic checks."""

    def __init__(self, mapping):
        self.mapping = mapping

    def tokenize(self, text):
        return text.split()

    def embed_tokens(self, tokens):
        return np.asarray([self.mapping[t] for t in tokens], dtype=float)


def test_two_by_three_hand_case_matches_brute_force_oracle():
    # candidate tokens: e1, e2; reference tokens: e1, e2-parallel, orthogonal e3
    mapping = {
        "c1": [1.0, 0.0, 0.0],
        "c2": [0.0, 2.0, 0.0],
        "r1": [3.0, 0.0, 0.0],
        "r2": [0.0, 5.0, 0.0],
        "r3": [0.0, 0.0, 1.0],
    }
    emb = _FixedTokenEmbedder(mapping)
    p, r, f1 = bertscore("c1 c2", "r1 r2 r3", emb)
    op, orc, of1 = bertscore_brute_oracle(
        [mapping["c1"], mapping["c2"]], [mapping["r1"], mapping["r2"], mapping["r3"]]
    )
    assert p == pytest.approx(op, abs=1e-12)
    assert r == pytest.approx(orc, abs=1e-12)
    assert f1 == pytest.approx(of1, abs=1e-12)
    # exact expectations: each candidate token has a parallel reference token
    assert p == pytest.approx(1.0, abs=1e-12)
    # r3 is orthogonal to both candidates -> recall (1 + 1 + 0) / 3
    assert r == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_bertscore_greedy_equals_brute_force_on_random_short_texts():
    rng = np.random.default_rng(12)
    vocabulary = [
        "gateway", "cpu", "latency", "packet", "loss", "switch", "gpu",
        "nic", "timeout", "congestion", "spike", "throughput", "route",
        "blackhole", "retransmission", "fabric",
    ]
    for _ in range(100):
        cand_tokens = list(rng.choice(vocabulary, size=rng.integers(1, 11)))
        ref_tokens = list(rng.choice(vocabulary, size=rng.integers(1, 11)))
        candidate = " ".join(cand_tokens)
        reference = " ".join(ref_tokens)
        p, r, f1 = bertscore(candidate, reference, EMB)
        cand_vecs = EMB.embed_tokens(EMB.tokenize(candidate))
        ref_vecs = EMB.embed_tokens(EMB.tokenize(reference))
        op, orc, of1 = bertscore_brute_oracle(list(cand_vecs), list(ref_vecs))
        assert p == pytest.approx(op, abs=1e-12)
        assert r == pytest.approx(orc, abs=1e-12)
        assert f1 == pytest.approx(of1, abs=1e-12)


def test_f1_is_harmonic_mean_of_own_p_and_r():
    pairs = [
        ("gateway cpu hot", "gateway cpu saturated and busy"),
        ("packet loss", "gpu utilization maxed"),
        ("nic ack timeout errors rising", "ack timeout on the nic"),
    ]
    for candidate, reference in pairs:
        p, r, f1 = bertscore(candidate, reference, EMB)
        expected = 2 * p * r / (p + r) if p + r > 0 else 0.0
        assert f1 == pytest.approx(expected, abs=1e-12)


def test_appending_reference_to_candidate_never_decreases_recall():
    rng = np.random.default_rng(99)
    vocabulary = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    for _ in range(30):
        candidate = " ".join(rng.choice(vocabulary, size=rng.integers(1, 6)))
        reference = " ".join(rng.choice(vocabulary, size=rng.integers(1, 6)))
        _, r_before, _ = bertscore(candidate, reference, EMB)
        _, r_after, _ = bertscore(candidate + " " + reference, reference, EMB)
        assert r_after >= r_before - 1e-12
        assert r_after == pytest.approx(1.0, abs=1e-9)


def test_empty_tokenization_errors():
    with pytest.raises(EvaluationError, match="token"):
        bertscore("", "reference text", EMB)
    with pytest.raises(EvaluationError, match="token"):
        bertscore("candidate", "!!!", EMB)


# ----------------------------------------------------------- sentence cosine


def test_sentence_cosine_identical_texts(provider):
    text = "the tgw route blackholed traffic between endpoints"
    assert sentence_cosine(text, text, provider) == pytest.approx(1.0, abs=1e-9)


def test_sentence_cosine_symmetry(provider):
    a = "gateway cpu saturation causes latency"
    b = "nic ack timeouts stall training"
    assert sentence_cosine(a, b, provider) == pytest.approx(
        sentence_cosine(b, a, provider), abs=1e-12
    )


def test_disjoint_trigram_texts_score_near_zero(provider):
    # Chosen so their hashed trigram buckets are fully disjoint under the
    # 256-d provider; the direct-cosine oracle on the embeddings confirms.
    a = "gateway cpu overload detected on the west node"
    b = "zzz zzq zzj zzv"
    score = sentence_cosine(a, b, provider)
    assert score <= 0.05
    assert score == pytest.approx(
        cosine_oracle(provider.embed(a), provider.embed(b)), abs=1e-12
    )


# ------------------------------------------------------------------- suite


def test_single_case_predicted_equals_gold_renders_ones(provider):
    cases = [EvalCase(usecase="TGW Blackhole", predicted="route died", gold="route died")]
    results, table = run_eval_suite(cases, "few_shot", EMB, provider)
    assert results[0].bertscore_f1 == pytest.approx(1.0, abs=1e-9)
    assert results[0].sbert_cosine == pytest.approx(1.0, abs=1e-9)
    row = table.splitlines()[2]
    assert "1.00" in row and "TGW Blackhole" in row


def test_eight_scenarios_render_in_order(provider):
    cases = [
        EvalCase(usecase=spec.label, predicted="predicted text", gold="gold text")
        for spec in list_scenarios()
    ]
    results, table = run_eval_suite(cases, "zero_shot", EMB, provider)
    assert len(results) == 8
    lines = table.splitlines()
    assert len(lines) == 10  # header + rule + 8 rows
    for i, spec in enumerate(list_scenarios()):
        assert spec.label in lines[2 + i]
        assert lines[2 + i].startswith(str(i + 1))


def test_failed_case_is_flagged_and_others_intact(provider):
    cases = [
        EvalCase(usecase="ok", predicted="gateway cpu", gold="gateway cpu"),
        EvalCase(usecase="broken", predicted="", gold="gold text"),
        EvalCase(usecase="ok2", predicted="nic timeout", gold="nic timeout"),
    ]
    results, table = run_eval_suite(cases, "few_shot", EMB, provider)
    assert [r.failed for r in results] == [False, True, False]
    assert results[1].error
    assert results[0].bertscore_f1 == pytest.approx(1.0, abs=1e-9)
    assert results[2].bertscore_f1 == pytest.approx(1.0, abs=1e-9)
    assert "failed" in table.splitlines()[3]


def test_table_header_matches_expected_columns(provider):
    cases = [EvalCase(usecase="u", predicted="a b", gold="a b")]
    _, table = run_eval_suite(cases, "few_shot", EMB, provider)
    header = table.splitlines()[0]
    for column in EVAL_TABLE_COLUMNS:
        assert column in header
    assert header.index("SNo") < header.index("Usecase") < header.index("F1")
    assert header.index("F1") < header.index("P") < header.index("R")
    assert header.index("R") < header.index("S-Bert Score")


def test_rounding_happens_only_in_rendering(provider):
    cases = [
        EvalCase(
            usecase="u",
            predicted="gateway cpu utilization spiking",
            gold="cpu utilization on the gateway is high",
        )
    ]
    results, table = run_eval_suite(cases, "few_shot", EMB, provider)
    raw = results[0].bertscore_f1
    assert raw != round(raw, 2)  # stored at full precision
    assert f"{raw:.2f}" in table


def test_mode_recorded_and_validated(provider):
    cases = [EvalCase(usecase="u", predicted="a b", gold="a b")]
    results, _ = run_eval_suite(cases, "zero_shot", EMB, provider)
    assert results[0].mode == "zero_shot"
    with pytest.raises(EvaluationError, match="mode"):
        run_eval_suite(cases, "one_shot", EMB, provider)
    with pytest.raises(EvaluationError, match="at least one"):
        run_eval_suite([], "few_shot", EMB, provider)


def test_load_eval_cases_parses_and_validates():
    doc = [{"usecase": "u", "predicted": "p", "gold": "g"}]
    cases = load_eval_cases(json.dumps(doc))
    assert cases == [EvalCase(usecase="u", predicted="p", gold="g")]
    with pytest.raises(EvaluationError, match="malformed"):
        load_eval_cases("{nope")
    with pytest.raises(EvaluationError, match="usecase/predicted/gold"):
        load_eval_cases(json.dumps([{"usecase": "u"}]))


def test_eval_result_json_mirror(provider):
    cases = [EvalCase(usecase="u", predicted="a b c", gold="a b d")]
    results, _ = run_eval_suite(cases, "few_shot", EMB, provider)
    doc = results[0].to_dict()
    assert set(doc) == {
        "usecase",
        "mode",
        "bertscore_precision",
        "bertscore_recall",
        "bertscore_f1",
        "sbert_cosine",
        "failed",
        "error",
    }
