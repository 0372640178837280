import pytest
import numpy as np

from captiongan.exc import InputError, StateError, FormatError
from captiongan.embeddings import ToyBackend, ToyWorld, ToyWorldSpec
from captiongan.embeddings import EmbeddingConfig, EmbeddingVector, get_backend
from captiongan.embeddings import ImageRecord, SentenceRecord
from captiongan.embeddings import CorpusEmbeddingTable, build_corpus_table
from captiongan.embeddings.corpus import load_corpus, write_corpus
from captiongan.embeddings.corpus import load_images, write_images
from captiongan.embeddings.corpus import load_references, write_references
from captiongan.rewards import reward_cos


def corpus_of(texts):
    return [SentenceRecord(id="s%03d" % i, text=t) for i, t in enumerate(texts)]


def test_vectors_are_unit_norm(backend, world):
    for image in world["images"]:
        vector = backend.encode_image(image)
        assert vector.dim == backend.d1
        assert abs(np.linalg.norm(vector.values.astype(np.float64)) - 1.0) <= 1e-6
    for sentence in world["corpus"]:
        vector = backend.encode_text(sentence)
        assert abs(np.linalg.norm(vector.values.astype(np.float64)) - 1.0) <= 1e-6


def test_noiseless_image_matches_caption(backend):
    image = ImageRecord("img", {"caption": "w1 w2 w3 .", "noise_scale": 0})
    assert backend.encode_image(image) == backend.encode_text("w1 w2 w3 .")


def test_image_encoding_is_deterministic(backend, world):
    image = world["images"][0]
    first = backend.encode_image(image)
    second = backend.encode_image(image)
    assert first.values.tobytes() == second.values.tobytes()


def test_noisy_image_stays_close_to_caption():
    spec = ToyWorldSpec(vocab_size=50, d1=64, noise_scale=0.1)
    backend = ToyBackend(spec)
    world = ToyWorld(spec, seed=3)
    rng = np.random.default_rng(0)
    cosines = []
    for image in world.images(200, rng):
        caption = backend.encode_text(image.payload["caption"])
        cosines.append(reward_cos(backend.encode_image(image), caption))
    assert min(cosines) >= 0.9


def test_bag_of_tokens(backend):
    assert backend.encode_text("w1 w2") == backend.encode_text("w2 w1")
    assert backend.encode_text("w3 w3 .") == backend.encode_text("w3 w3 .")


def test_orthogonal_projection_rows():
    spec = ToyWorldSpec(vocab_size=4, d1=4)
    backend = ToyBackend(spec, projection=np.eye(4))
    score = reward_cos(backend.encode_text("w1"), backend.encode_text("w2"))
    assert abs(score) <= 1e-6


def test_empty_text_is_rejected(backend):
    with pytest.raises(InputError):
        backend.encode_text("   ")
    with pytest.raises(InputError):
        SentenceRecord(id="x", text="")


def test_toy_image_needs_caption(backend):
    with pytest.raises(InputError):
        backend.encode_image(ImageRecord("img", {"seed": 1}))


def test_vector_norm_checked():
    with pytest.raises(InputError):
        EmbeddingVector(np.array([1.0, 1.0]))
    raw = EmbeddingVector.from_raw([3.0, 4.0])
    assert np.allclose(raw.values, [0.6, 0.8])
    with pytest.raises(InputError):
        EmbeddingVector.from_raw([0.0, 0.0])


def test_get_backend_toy():
    backend = get_backend(EmbeddingConfig(backend="toy", d1=8, vocab_size=6))
    assert isinstance(backend, ToyBackend)
    assert backend.d1 == 8
    other = get_backend(EmbeddingConfig(backend="toy", d1=8, vocab_size=6))
    assert other.fingerprint == backend.fingerprint
    changed = get_backend(
        EmbeddingConfig(backend="toy", d1=8, vocab_size=6, projection_seed=1)
    )
    assert changed.fingerprint != backend.fingerprint


def test_single_sentence_table(backend):
    corpus = corpus_of(["w1 w2 ."])
    table = build_corpus_table(corpus, backend)
    assert len(table) == 1
    assert table.vector(0) == backend.encode_text(corpus[0])


def test_table_parallel_matches_serial(backend, world):
    serial = build_corpus_table(world["corpus"], backend, workers=1)
    parallel = build_corpus_table(world["corpus"], backend, workers=8)
    assert serial == parallel
    assert serial.ids == [s.id for s in world["corpus"]]


def test_table_roundtrip(tmp_path, backend, world):
    table = build_corpus_table(world["corpus"], backend, meta={"seed": 1})
    path = tmp_path.joinpath("corpus.emb")
    table.save(path)
    loaded = CorpusEmbeddingTable.load(path)
    assert loaded == table
    assert loaded.meta == {"seed": 1}
    loaded.check(backend)


def test_table_fingerprint_mismatch(backend, world):
    table = build_corpus_table(world["corpus"], backend)
    other = ToyBackend(ToyWorldSpec(vocab_size=12, d1=16, projection_seed=99))
    with pytest.raises(StateError):
        table.check(other)


def test_truncated_table(tmp_path, backend, world):
    path = tmp_path.joinpath("corpus.emb")
    build_corpus_table(world["corpus"], backend).save(path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        CorpusEmbeddingTable.load(path)


def test_table_rejects_duplicates(backend):
    corpus = [SentenceRecord("a", "w1 ."), SentenceRecord("a", "w2 .")]
    with pytest.raises(InputError):
        build_corpus_table(corpus, backend)
    with pytest.raises(InputError):
        build_corpus_table([], backend)


def test_nearest(backend, world):
    table = build_corpus_table(world["corpus"], backend)
    query = backend.encode_text(world["corpus"][3])
    (idx, score), = table.nearest(query)
    assert table.texts[idx] == world["corpus"][3].text
    assert score == pytest.approx(1.0, abs=1e-6)


def test_world_generation(toy_spec):
    images, corpus, eval_images, refs = ToyWorld(toy_spec, seed=2).generate(
        5, 7, n_eval=3
    )
    assert len(images) == 5 and len(corpus) == 7 and len(eval_images) == 3
    for image in images + eval_images:
        assert refs[image.id] == [image.payload["caption"]]
    again = ToyWorld(toy_spec, seed=2).generate(5, 7, n_eval=3)
    assert [i.payload for i in again[0]] == [i.payload for i in images]


def test_file_formats(tmp_path, world):
    write_corpus(tmp_path.joinpath("corpus.jsonl"), world["corpus"])
    write_images(tmp_path.joinpath("images.jsonl"), world["images"])
    write_references(tmp_path.joinpath("refs.json"), world["refs"])
    assert load_corpus(tmp_path.joinpath("corpus.jsonl")) == world["corpus"]
    assert load_images(tmp_path.joinpath("images.jsonl")) == world["images"]
    assert load_references(tmp_path.joinpath("refs.json")) == world["refs"]
