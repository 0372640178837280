import json
import pytest
import torch

from captiongan.exc import StateError
from captiongan.core.config import RunConfig
from captiongan.core.context import RunContext
from captiongan.core import pipeline
from captiongan.training import load_checkpoint
from captiongan.evaluation import load_report

pytestmark = pytest.mark.slow


@pytest.fixture
def world_config(tmp_path, toy_config):
    context = RunContext(toy_config, "toy-world", run_dir=tmp_path.joinpath("w"))
    path = context.execute(pipeline.toy_world, out_dir=tmp_path.joinpath("world"))
    return RunConfig.load(path)


def stage(config, name, method, run_dir, **kwargs):
    context = RunContext(config, name, run_dir=run_dir)
    result = context.execute(method, **kwargs)
    return context, result


def generator_params(run_dir):
    bundle = load_checkpoint(run_dir.joinpath(pipeline.TRAIN_CHECKPOINT))
    return bundle.generator


def test_full_run(tmp_path, toy_config):
    run_dir = tmp_path.joinpath("run")
    context, report = stage(toy_config, "full", pipeline.full_run, run_dir)
    for name in ("init.ckpt", "train.ckpt", "train.jsonl", "candidates.jsonl"):
        assert run_dir.joinpath(name).exists()
    loaded = load_report(run_dir.joinpath(pipeline.REPORT_FILE))
    assert loaded.scores == report.scores
    assert context.metrics["checkpoint"] == "adversarial"
    assert -1.0 <= context.metrics["alignment"] <= 1.0
    rows = run_dir.joinpath(pipeline.TRAIN_LOG).read_text().splitlines()
    assert len(rows) == toy_config.training.steps
    assert json.loads(rows[0])["lambda"] == 0.0


def test_same_seed_same_results(tmp_path, world_config):
    metrics = []
    for name in ("one", "two"):
        run_dir = tmp_path.joinpath(name)
        stage(world_config, "init-train", pipeline.init_train, run_dir)
        stage(world_config, "train", pipeline.train, run_dir)
        context, _ = stage(world_config, "infer", pipeline.infer, run_dir)
        metrics.append(context.metrics)
    assert metrics[0] == metrics[1]
    one = generator_params(tmp_path.joinpath("one"))
    two = generator_params(tmp_path.joinpath("two"))
    assert all(torch.equal(one[k], two[k]) for k in one)
    first = tmp_path.joinpath("one", "candidates.jsonl").read_text()
    assert first == tmp_path.joinpath("two", "candidates.jsonl").read_text()


def test_resume_matches_uninterrupted(tmp_path, world_config):
    straight = tmp_path.joinpath("straight")
    stage(world_config, "init-train", pipeline.init_train, straight)
    stage(world_config, "train", pipeline.train, straight)

    resumed = tmp_path.joinpath("resumed")
    stage(world_config, "init-train", pipeline.init_train, resumed)
    short = world_config.override(["training.steps=1"])
    stage(short, "train", pipeline.train, resumed)
    stage(world_config, "train", pipeline.train, resumed, resume=True)

    bundle = load_checkpoint(resumed.joinpath(pipeline.TRAIN_CHECKPOINT))
    assert bundle.state.step == world_config.training.steps
    one, two = generator_params(straight), bundle.generator
    assert all(torch.equal(one[k], two[k]) for k in one)
    lines = resumed.joinpath(pipeline.TRAIN_LOG).read_text().splitlines()
    assert [json.loads(line)["step"] for line in lines] == [0, 1, 2]


def test_zero_init_steps(tmp_path, world_config):
    run_dir = tmp_path.joinpath("run")
    config = world_config.override(["training.init_steps=0"])
    _, bundle = stage(config, "init-train", pipeline.init_train, run_dir)
    context = RunContext(config, "check", run_dir=run_dir)
    fresh = pipeline.load_generator(context)
    for key, value in fresh.state_dict().items():
        assert torch.equal(value, bundle.generator[key])


def test_train_requires_init(tmp_path, world_config):
    with pytest.raises(StateError):
        stage(world_config, "train", pipeline.train, tmp_path.joinpath("run"))
    skip = world_config.override(["training.skip_init=true"])
    _, bundle = stage(skip, "train", pipeline.train, tmp_path.joinpath("run"))
    assert bundle.state.step == skip.training.steps


def test_pseudo_label_training(tmp_path, world_config):
    run_dir = tmp_path.joinpath("run")
    _, pairs = stage(
        world_config, "baseline", pipeline.baseline, run_dir, mode="pseudo"
    )
    path = run_dir.joinpath(pipeline.PSEUDO_FILE)
    assert len(pairs) == world_config.data.world_images
    config = world_config.override(
        {"training": {"mode": "pseudo"}, "data": {"pseudo_labels": str(path)}}
    )
    _, bundle = stage(config, "init-train", pipeline.init_train, run_dir)
    assert bundle.tag == "pseudo"
    _, bundle = stage(config, "train", pipeline.train, run_dir)
    assert bundle.tag == "adversarial"


def test_retrieval_baseline_and_explain(tmp_path, world_config):
    run_dir = tmp_path.joinpath("run")
    _, candidates = stage(world_config, "baseline", pipeline.baseline, run_dir)
    assert run_dir.joinpath("baseline-report.json").exists()
    assert len(candidates) > 0

    stage(world_config, "init-train", pipeline.init_train, run_dir)
    _, explanation = stage(world_config, "explain", pipeline.explain, run_dir)
    assert len(explanation.entries) == world_config.generator.k
    data = json.loads(run_dir.joinpath(pipeline.EXPLAIN_FILE).read_text())
    assert len(data["prompts"]) == world_config.generator.k


def test_aggregate_stage(tmp_path, world_config):
    run_dir = tmp_path.joinpath("run")
    context, aggregates = stage(world_config, "aggregate", pipeline.aggregate, run_dir)
    assert context.metrics["images"] == world_config.data.world_images
    assert run_dir.joinpath(pipeline.TABLE_FILE).exists()
    assert context.metrics["temperature"] == world_config.rewards.temperature
    context, _ = stage(
        world_config, "aggregate", pipeline.aggregate, run_dir, temperature=1.0
    )
    assert context.metrics["temperature"] == 1.0


def test_toy_world_acceptance(tmp_path):
    """The bundled toy run: initialization fits the corpus, and adversarial
    training improves both image alignment and CIDEr over the init
    checkpoint."""
    toy = RunConfig.load("toy")
    context = RunContext(toy, "toy-world", run_dir=tmp_path.joinpath("w"))
    config = RunConfig.load(
        context.execute(pipeline.toy_world, out_dir=tmp_path.joinpath("world"))
    )
    run_dir = tmp_path.joinpath("run")

    context, _ = stage(config, "init-train", pipeline.init_train, run_dir)
    assert context.metrics["corpus_loss"] < 0.05

    init_ckpt = run_dir.joinpath(pipeline.INIT_CHECKPOINT)
    init_candidates = run_dir.joinpath("init-candidates.jsonl")
    context, _ = stage(
        config,
        "infer",
        pipeline.infer,
        run_dir,
        checkpoint=init_ckpt,
        out_path=init_candidates,
    )
    assert context.metrics["checkpoint"] == "init"
    init_alignment = context.metrics["alignment"]
    _, init_report = stage(
        config,
        "eval",
        pipeline.evaluate_run,
        run_dir,
        candidates_path=init_candidates,
        out_path=run_dir.joinpath("init-report.json"),
    )

    _, bundle = stage(config, "train", pipeline.train, run_dir)
    assert bundle.state.step == config.training.steps
    context, _ = stage(config, "infer", pipeline.infer, run_dir)
    assert context.metrics["checkpoint"] == "adversarial"
    _, report = stage(config, "eval", pipeline.evaluate_run, run_dir)

    assert context.metrics["alignment"] > init_alignment
    assert report.scores["CIDEr"] > init_report.scores["CIDEr"]
