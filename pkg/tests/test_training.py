import json
import pytest
import torch

from captiongan.exc import InputError, FormatError, StateError, ConfigError
from captiongan.embeddings import build_corpus_table
from captiongan.generator import DecodeConfig, build_generator
from captiongan.discriminator import build_discriminator
from captiongan.rewards import aggregate
from captiongan.training import Trainer, TrainConfig, policy_gradient_loss
from captiongan.training import save_checkpoint, load_checkpoint
from captiongan.training.state import plain_state
from captiongan.training import run_initialization
from captiongan.training.adversarial import caption_text
from captiongan.training.init import corpus_loss

from conftest import bigram_generator, start_prompts


def training_inputs(backend, world):
    table = build_corpus_table(world["corpus"], backend)
    images = [(i.id, backend.encode_image(i)) for i in world["images"]]
    aggregates = {i: aggregate(v, table, 0.05, image_id=i) for i, v in images}
    sentences = [s.text for s in world["corpus"]]
    return images, sentences, aggregates


def make_trainer(config, backend, world, generator=None, discriminator=None, **kw):
    images, sentences, aggregates = training_inputs(backend, world)
    if generator is None:
        generator = build_generator(
            config.generator, backend.d1, seed=3, vocabulary=backend.vocabulary
        )
    if discriminator is None and config.rewards.use_naturalness:
        discriminator = build_discriminator(
            config.discriminator, seed=5, vocabulary=backend.vocabulary
        )
    return Trainer(
        config,
        generator,
        discriminator,
        backend,
        images,
        sentences,
        aggregates=aggregates,
        **kw,
    )


def params_of(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def same_params(left, right):
    return left.keys() == right.keys() and all(
        torch.equal(left[k], right[k]) for k in left
    )


def test_policy_gradient_loss_value():
    log_probs = torch.tensor([-1.0, -2.0])
    loss = policy_gradient_loss(log_probs, [0.5, -1.0])
    assert float(loss) == pytest.approx(-(0.5 * -1.0 + -1.0 * -2.0) / 2)
    with pytest.raises(InputError):
        policy_gradient_loss(log_probs, [1.0])


def test_caption_text_of_empty_caption():
    class Empty:
        text = "  "

    assert caption_text(Empty(), ".") == "."


@pytest.mark.parametrize("use_greedy_baseline", [False, True])
def test_policy_gradient_matches_enumeration(use_greedy_baseline):
    # two-token vocabulary, captions of at most two tokens: the three
    # possible captions are ".", "w1 ." and "w1 w1"
    table = torch.tensor([[0.0, 0.0], [0.1, 0.4], [0.3, -0.2]])
    gen = bigram_generator([".", "w1"], table, max_len=2).double()
    sequences = [[0], [1, 0], [1, 1]]
    rewards = torch.tensor([0.2, 1.0, -0.5], dtype=torch.float64)
    prompts = start_prompts(gen, batch=3)
    param = gen.decoder.transition

    log_probs = gen.sequence_log_probs(prompts, sequences)
    probs = log_probs.exp()
    assert float(probs.sum()) == pytest.approx(1.0, abs=1e-12)
    (expected,) = torch.autograd.grad((probs * rewards).sum(), param)

    baseline = 0.0
    if use_greedy_baseline:
        greedy = gen.greedy_decode(prompts[0], DecodeConfig(max_len=2))
        baseline = float(rewards[sequences.index(greedy.token_ids)])
    log_probs = gen.sequence_log_probs(prompts, sequences)
    weights = probs.detach() * (rewards - baseline) * len(sequences)
    loss = policy_gradient_loss(log_probs, weights)
    (found,) = torch.autograd.grad(-loss, param)
    assert torch.allclose(found, expected, atol=1e-10)


def test_zero_advantage_skips_update(toy_config, backend, world):
    config = toy_config.override({"rewards": {"use_naturalness": False}})
    table = torch.zeros(4, 3)
    table[3, 1] = 1000.0
    table[1, 0] = 1000.0
    gen = bigram_generator([".", "w1", "w2"], table, d1=backend.d1)
    trainer = make_trainer(config, backend, world, generator=gen)
    before = params_of(gen)
    epoch = trainer.gen_schedule.last_epoch
    advantage, reward = trainer.scst_generator_update(trainer.images[:4])
    assert advantage == 0.0
    assert same_params(before, params_of(gen))
    assert trainer.gen_schedule.last_epoch == epoch + 1


def test_discriminator_update_leaves_generator(toy_config, backend, world):
    trainer = make_trainer(toy_config, backend, world)
    gen_before = params_of(trainer.generator)
    disc_before = params_of(trainer.discriminator)
    loss = trainer.discriminator_update(trainer.images[:4], trainer.sentences[:4])
    assert loss > 0
    assert same_params(gen_before, params_of(trainer.generator))
    assert not same_params(disc_before, params_of(trainer.discriminator))


def test_train_rows_and_log(tmp_path, toy_config, backend, world):
    log_path = tmp_path.joinpath("train.jsonl")
    trainer = make_trainer(toy_config, backend, world, log_path=log_path)
    rows = trainer.train()
    assert [r["step"] for r in rows] == [0, 1, 2]
    assert trainer.state.step == 3
    for row in rows:
        if row["step"] < toy_config.rewards.warmup_d_only_steps:
            assert row["lambda"] == 0.0
        assert row["d_loss"] is not None
    lines = log_path.read_text().splitlines()
    assert len(lines) == 3
    logged = json.loads(lines[-1])
    assert set(logged) == {"step", "d_loss", "mean_advantage", "lambda", "mean_reward"}
    assert trainer.train() == []


def test_train_without_discriminator(toy_config, backend, world):
    config = toy_config.override({"rewards": {"use_naturalness": False}})
    trainer = make_trainer(config, backend, world)
    assert trainer.disc_opt is None
    rows = trainer.train(2)
    assert all(r["d_loss"] is None and r["lambda"] == 1.0 for r in rows)


def test_trainer_needs_data(toy_config, backend, generator):
    with pytest.raises(InputError):
        Trainer(toy_config, generator, None, backend, [], ["w1 ."])


def test_checkpoint_roundtrip(tmp_path, toy_config, backend, world):
    trainer = make_trainer(toy_config, backend, world)
    trainer.train(1)
    bundle = trainer.checkpoint()
    path = tmp_path.joinpath("train.ckpt")
    save_checkpoint(bundle, path)
    loaded = load_checkpoint(path)
    assert loaded.tag == "adversarial"
    assert loaded.state.step == 1
    assert loaded.config == toy_config.to_dict()
    assert same_params(bundle.generator, loaded.generator)
    assert same_params(bundle.discriminator, loaded.discriminator)

    again = tmp_path.joinpath("again.ckpt")
    save_checkpoint(loaded, again)
    assert again.read_bytes() == path.read_bytes()


def test_checkpoint_state_is_plain(tmp_path, toy_config, backend, world):
    trainer = make_trainer(toy_config, backend, world)
    assert hasattr(trainer.generator.state_dict(), "_metadata")
    path = save_checkpoint(trainer.checkpoint(), tmp_path.joinpath("a.ckpt"))
    loaded = load_checkpoint(path)
    assert type(loaded.generator) is dict
    assert not hasattr(loaded.generator, "_metadata")
    assert list(loaded.generator) == sorted(loaded.generator)
    assert type(loaded.optimizers["generator"]) is dict


def test_plain_state():
    state = plain_state({"b": [1, {"z": 2, "a": (3, 4)}], "a": {2: "x", 1: "y"}})
    assert list(state) == ["a", "b"]
    assert list(state["a"]) == [1, 2]
    assert list(state["b"][1]) == ["a", "z"]
    assert state["b"][1]["a"] == (3, 4)


def test_checkpoint_does_not_alias_training(toy_config, backend, world):
    trainer = make_trainer(toy_config, backend, world)
    bundle = trainer.checkpoint()
    snapshot = params_of(trainer.generator)
    trainer.train(2)
    assert same_params(snapshot, bundle.generator)


def test_truncated_checkpoint(tmp_path, toy_config, backend, world):
    path = tmp_path.joinpath("train.ckpt")
    save_checkpoint(make_trainer(toy_config, backend, world).checkpoint(), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        load_checkpoint(path)
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path.joinpath("missing.ckpt"))


def test_checkpoint_version_mismatch(tmp_path, toy_config, backend, world):
    bundle = make_trainer(toy_config, backend, world).checkpoint()
    bundle.version = 99
    path = tmp_path.joinpath("future.ckpt")
    save_checkpoint(bundle, path)
    with pytest.raises(StateError):
        load_checkpoint(path)


def test_resume_matches_uninterrupted(tmp_path, toy_config, backend, world):
    straight = make_trainer(toy_config, backend, world)
    straight.train(3)

    first = make_trainer(toy_config, backend, world)
    first.train(1)
    path = tmp_path.joinpath("train.ckpt")
    save_checkpoint(first.checkpoint(), path)

    resumed = make_trainer(toy_config, backend, world)
    resumed.restore(load_checkpoint(path))
    assert resumed.state.step == 1
    resumed.train()
    assert resumed.state.step == 3
    assert same_params(params_of(straight.generator), params_of(resumed.generator))
    assert same_params(
        params_of(straight.discriminator), params_of(resumed.discriminator)
    )


def test_same_seed_same_run(toy_config, backend, world):
    one = make_trainer(toy_config, backend, world)
    two = make_trainer(toy_config, backend, world)
    assert one.train() == two.train()
    assert same_params(params_of(one.generator), params_of(two.generator))


def test_zero_init_steps_keep_parameters(toy_config, backend, world):
    generator = build_generator(
        toy_config.generator, backend.d1, seed=3, vocabulary=backend.vocabulary
    )
    initial = params_of(generator)
    bundle = run_initialization(
        world["corpus"], backend, toy_config, generator=generator, steps=0
    )
    assert bundle.tag == "init"
    assert same_params(initial, bundle.generator)


def test_initialization_reduces_loss(toy_config, backend, world):
    generator = build_generator(
        toy_config.generator, backend.d1, seed=3, vocabulary=backend.vocabulary
    )
    config = toy_config.override({"training": {"init_steps": 40}})
    before = corpus_loss(generator, world["corpus"], backend)
    bundle = run_initialization(world["corpus"], backend, config, generator=generator)
    after = corpus_loss(generator, world["corpus"], backend)
    assert bundle.state.init_step == 40
    assert after < before


def test_initialization_converges_on_small_corpus(toy_config, backend, world):
    corpus = world["corpus"][:10]
    generator = build_generator(
        toy_config.generator, backend.d1, seed=3, vocabulary=backend.vocabulary
    )
    config = toy_config.override(
        {"training": {"init_lr": 5e-3, "init_warmup": 2, "init_batch_size": 10}}
    )
    losses = [corpus_loss(generator, corpus, backend)]
    for steps in (100, 300, 600):
        run_initialization(
            corpus, backend, config, generator=generator, steps=steps
        )
        losses.append(corpus_loss(generator, corpus, backend))
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.05


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(gen_lr=0)
    with pytest.raises(ConfigError):
        TrainConfig(mode="supervised")
    with pytest.raises(ConfigError):
        TrainConfig(d_steps_per_g=0)
