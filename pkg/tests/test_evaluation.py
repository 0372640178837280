import math
import pytest
import numpy as np

from captiongan.exc import InputError, StateError, ConfigError, FormatError
from captiongan.embeddings import EmbeddingVector, ImageRecord, build_corpus_table
from captiongan.evaluation import ReferenceSet, MetricReport, EvalConfig
from captiongan.evaluation import bleu, bleu4, rouge_l, cider, CiderScorer
from captiongan.evaluation import clip_retrieval_baseline, clip_pseudo_labels
from captiongan.evaluation import evaluate, emit_report, load_report
from captiongan.evaluation.tokenize import normalize_caption, normalize_all
from captiongan.evaluation.report import write_candidates, load_candidates
from captiongan.evaluation.report import alignment
from captiongan.evaluation.baselines import write_pseudo_labels, load_pseudo_labels

from conftest import make_table, unit_rows

FIXTURE_REFS = {
    "1": [
        "A man is riding a horse on the beach.",
        "A person rides a brown horse along the shore.",
        "Someone on horseback near the ocean.",
    ],
    "2": [
        "Two dogs play with a red ball in the grass.",
        "A pair of dogs chasing a ball on a lawn.",
    ],
    "3": [
        "A plate of pasta with tomato sauce.",
        "Spaghetti with red sauce on a white plate.",
        "A bowl of noodles and sauce.",
    ],
    "4": ["A city street at night with cars.", "Cars drive down a busy street."],
    "5": [
        "A child is eating an ice cream cone.",
        "A little girl eats ice cream outside.",
    ],
    "6": ["A cat sleeping on a sofa.", "A grey cat naps on the couch."],
}
FIXTURE_CANDIDATES = {
    "1": "A man riding a horse on the beach.",
    "2": "Two dogs are playing with a ball.",
    "3": "A plate of spaghetti with sauce.",
    "4": "Cars on a street at night.",
    "5": "A girl is eating ice cream.",
    "6": "A cat is sleeping on the couch.",
}


def test_tokenization():
    assert normalize_caption("A man, riding a horse.") == "a man riding a horse"
    assert normalize_caption("It's  (very) GOOD!") == "it 's very good"
    assert normalize_all({"a": ["X.", "Y!"]}) == {"a": ["x", "y"]}


def test_bleu_identical_is_one():
    refs = {"a": ["a man rides a horse", "a horse"], "b": ["two dogs play in grass"]}
    candidates = {"a": "a man rides a horse", "b": "two dogs play in grass"}
    assert bleu4(candidates, refs) == pytest.approx(1.0, abs=1e-9)


def test_bleu_disjoint_is_zero():
    candidates = {"a": "red green blue yellow"}
    assert bleu4(candidates, {"a": ["a man rides a horse"]}) == pytest.approx(
        0.0, abs=1e-9
    )


def test_bleu_by_hand():
    candidates = {"a": "the cat sat on mat"}
    refs = {"a": ["the cat sat on the mat"]}
    scores, per_image = bleu(candidates, refs)
    precisions = [5 / 5, 3 / 4, 2 / 3, 1 / 2]
    penalty = math.exp(1 - 6 / 5)
    assert scores[0] == pytest.approx(penalty, abs=1e-6)
    expected = math.prod(precisions) ** 0.25 * penalty
    assert scores[3] == pytest.approx(expected, abs=1e-6)
    assert per_image["a"][3] == pytest.approx(expected, abs=1e-6)


def test_bleu_closest_reference_length():
    candidates = {"a": "the cat sat on the mat"}
    refs = {"a": ["the cat", "the cat sat on the mat today", "a cat sat on the mat"]}
    assert bleu(candidates, refs)[0][0] == pytest.approx(1.0, abs=1e-6)


def test_bleu_reference_order_invariance():
    candidates = normalize_all(FIXTURE_CANDIDATES)
    refs = normalize_all(FIXTURE_REFS)
    reversed_refs = {k: list(reversed(v)) for k, v in refs.items()}
    assert bleu4(candidates, refs) == bleu4(candidates, reversed_refs)
    assert rouge_l(candidates, refs) == rouge_l(candidates, reversed_refs)


def test_missing_references():
    with pytest.raises(InputError):
        bleu4({"a": "x y"}, {"b": ["x y"]})
    with pytest.raises(InputError):
        rouge_l({}, {"b": ["x y"]})
    with pytest.raises(InputError):
        ReferenceSet({"a": []})


def test_rouge_examples():
    assert rouge_l({"a": "a b c"}, {"a": ["a b c"]}) == pytest.approx(1.0)
    assert rouge_l({"a": "a b c"}, {"a": ["d e f"]}) == 0.0
    prec, rec = 3 / 4, 3 / 5
    expected = (1 + 1.2 ** 2) * prec * rec / (rec + 1.2 ** 2 * prec)
    value = rouge_l({"a": "a b c d"}, {"a": ["a c d e f"]})
    assert value == pytest.approx(expected)


def test_rouge_uses_best_precision_and_recall_separately():
    # best precision comes from the first reference, best recall from the
    # second
    value = rouge_l({"a": "a b"}, {"a": ["a b c d e f", "a"]})
    prec, rec = 1.0, 1.0
    assert value == pytest.approx(
        (1 + 1.2 ** 2) * prec * rec / (rec + 1.2 ** 2 * prec)
    )


def test_cider_disjoint_is_zero():
    refs = {"a": ["a man rides a horse"], "b": ["two dogs play in the grass"]}
    candidates = {"a": "red green blue", "b": "purple orange"}
    assert cider(candidates, refs) == 0.0


def test_cider_image_order_invariance():
    candidates = normalize_all(FIXTURE_CANDIDATES)
    refs = normalize_all(FIXTURE_REFS)
    shuffled = {k: candidates[k] for k in reversed(list(candidates))}
    first, per_first = CiderScorer().score(candidates, refs)
    second, per_second = CiderScorer().score(shuffled, refs)
    assert first == second
    assert per_first == per_second
    assert first >= 0


def test_cider_flavours_agree_on_identical_caption():
    refs = {"a": ["a man rides a horse"], "b": ["two dogs play in the grass"]}
    candidates = {"a": "a man rides a horse", "b": "two cats"}
    _, coco = CiderScorer("coco").score(candidates, refs)
    _, cider_d = CiderScorer("cider-d").score(candidates, refs)
    assert coco["a"] == pytest.approx(cider_d["a"])
    assert coco["a"] > 0
    with pytest.raises(ConfigError):
        CiderScorer("cider-x")


def test_metrics_match_coco_tools():
    pytest.importorskip("pycocoevalcap")
    from pycocoevalcap.bleu.bleu import Bleu
    from pycocoevalcap.rouge.rouge import Rouge
    from pycocoevalcap.cider.cider import Cider

    candidates = normalize_all(FIXTURE_CANDIDATES)
    refs = normalize_all(FIXTURE_REFS)
    gts = {k: refs[k] for k in candidates}
    res = {k: [v] for k, v in candidates.items()}

    expected_bleu, _ = Bleu(4).compute_score(gts, res)
    found_bleu, _ = bleu(candidates, refs)
    for expected, found in zip(expected_bleu, found_bleu):
        assert found == pytest.approx(expected, abs=1e-4)

    expected_rouge, _ = Rouge().compute_score(gts, res)
    assert rouge_l(candidates, refs) == pytest.approx(expected_rouge, abs=1e-4)

    expected_cider, per_image = Cider().compute_score(gts, res)
    found_cider, found_per_image = CiderScorer().score(candidates, refs)
    assert found_cider == pytest.approx(expected_cider, abs=1e-4)
    for image_id, value in zip(sorted(gts), per_image):
        assert found_per_image[image_id] == pytest.approx(value, abs=1e-4)


def test_evaluate_report(tmp_path):
    cfg = EvalConfig(external=False)
    report = evaluate(FIXTURE_CANDIDATES, FIXTURE_REFS, cfg, meta={"run": "x"})
    assert set(report.per_image_cider) == set(FIXTURE_CANDIDATES)
    assert 0.0 <= report.scores["BLEU_4"] <= 1.0
    assert report.unavailable == ["METEOR", "SPICE"]
    assert report.meta["run"] == "x"
    json_path, csv_path = emit_report(report, tmp_path.joinpath("report.json"))
    assert csv_path.exists()
    loaded = load_report(json_path)
    assert loaded.scores == report.scores
    assert loaded.per_image_cider == report.per_image_cider
    assert loaded.meta == report.meta


def test_reports_are_reproducible(tmp_path):
    cfg = EvalConfig(external=False)
    paths = []
    for name in ("one.json", "two.json"):
        report = evaluate(FIXTURE_CANDIDATES, FIXTURE_REFS, cfg)
        report.meta["timestamp"] = "fixed"
        paths.append(emit_report(report, tmp_path.joinpath(name))[0])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_empty_candidates_rejected(tmp_path):
    with pytest.raises(InputError):
        evaluate({}, FIXTURE_REFS, EvalConfig(external=False))
    with pytest.raises(InputError):
        emit_report(MetricReport({"CIDEr": 0.0}, {}), tmp_path.joinpath("r.json"))
    with pytest.raises(FormatError):
        load_report(tmp_path.joinpath("missing.json"))


def test_report_invariants():
    with pytest.raises(InputError):
        MetricReport({"BLEU_4": 1.5}, {"a": 0.0})
    with pytest.raises(InputError):
        MetricReport({"CIDEr": -0.1}, {"a": 0.0})
    with pytest.raises(InputError):
        MetricReport({"ROUGE_L": float("nan")}, {"a": 0.0})


def test_candidate_files(tmp_path):
    path = write_candidates(tmp_path.joinpath("c.jsonl"), FIXTURE_CANDIDATES)
    assert load_candidates(path) == FIXTURE_CANDIDATES
    path.write_text(path.read_text() + '{"image_id": "1", "caption": "x"}\n')
    with pytest.raises(InputError):
        load_candidates(path)


def test_retrieval_picks_highest_cosine():
    table = make_table([[0.9, math.sqrt(1 - 0.81)], [0.1, math.sqrt(1 - 0.01)]])
    image = EmbeddingVector(np.array([1.0, 0.0]), fingerprint="fp-test")
    result = clip_retrieval_baseline([("img", image)], table)
    assert result == {"img": "sentence 0"}


def test_retrieval_ties_take_lowest_row():
    table = make_table([[1, 1], [1, 1]], texts=["first", "second"])
    image = EmbeddingVector(unit_rows([[1, 0]])[0])
    assert clip_retrieval_baseline([("img", image)], table) == {"img": "first"}


def test_retrieval_matches_brute_force(backend, world):
    table = build_corpus_table(world["corpus"], backend)
    images = [(i.id, backend.encode_image(i)) for i in world["images"]]
    result = clip_retrieval_baseline(images, table)
    matrix = table.matrix.astype(np.float64)
    for image_id, vector in images:
        query = vector.values.astype(np.float64)
        best, best_score = None, -np.inf
        for row, sentence in enumerate(world["corpus"]):
            score = float(np.dot(query, matrix[row]))
            if score > best_score + 1e-12:
                best, best_score = sentence.text, score
        assert result[image_id] == best
    pairs = clip_pseudo_labels(images, table)
    assert [p[0] for p in pairs] == [i for i, _ in images]
    assert dict(pairs) == result


def test_noiseless_self_retrieval(backend, world):
    table = build_corpus_table(world["corpus"], backend)
    records = [
        ImageRecord("i%02d" % n, {"caption": s.text, "noise_scale": 0})
        for n, s in enumerate(world["corpus"])
    ]
    images = [(r.id, backend.encode_image(r)) for r in records]
    result = clip_retrieval_baseline(images, table)
    for record in records:
        assert result[record.id] == record.payload["caption"]
    captions = {r.id: r.payload["caption"] for r in records}
    assert alignment(backend, images, captions) == pytest.approx(1.0, abs=1e-6)


def test_retrieval_fingerprint_mismatch():
    table = make_table([[1, 0], [0, 1]])
    image = EmbeddingVector(np.array([1.0, 0.0]), fingerprint="other")
    with pytest.raises(StateError):
        clip_retrieval_baseline([("img", image)], table)


def test_pseudo_label_file(tmp_path):
    pairs = [("a", "w1 w2 ."), ("b", "w3 .")]
    path = write_pseudo_labels(tmp_path.joinpath("pseudo.jsonl"), pairs)
    assert load_pseudo_labels(path) == pairs
