import sys
import json
import click
import logging
from functools import wraps

from captiongan.exc import CaptionError
from captiongan.core import setup
from captiongan.core import pipeline
from captiongan.core.config import RunConfig
from captiongan.core.context import RunContext
from captiongan.core.export import write_object
from captiongan.core.sweep import Sweep
from captiongan.model import Issue, Run


@click.group(help="Caption generation from unpaired images and sentences")
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.option("-q", "--quiet", is_flag=True, default=False)
def cli(verbose=False, quiet=False):
    level = logging.INFO
    if quiet:
        level = logging.WARNING
    if verbose:
        level = logging.DEBUG
    setup(log_level=level)


def run_options(func):
    """``--config``/``--set``/``--run-dir``, turned into a stage context."""

    @click.option("-c", "--config", "config_file", help="Config file or bundled name")
    @click.option("-s", "--set", "overrides", multiple=True, help="section.key=value")
    @click.option("--run-dir", type=click.Path(file_okay=False), default=None)
    @wraps(func)
    def wrapper(config_file, overrides, run_dir, **kwargs):
        config = RunConfig.load(config_file, overrides)
        return func(config=config, run_dir=run_dir, **kwargs)

    return wrapper


def execute(config, stage, method, run_dir=None, **kwargs):
    context = RunContext(config, stage, run_dir=run_dir)
    result = context.execute(method, **kwargs)
    if context.metrics is not None:
        click.echo(json.dumps(context.metrics, sort_keys=True, default=str))
    return result


@cli.command("toy-world", help="Generate a synthetic image/sentence world")
@click.argument("out_dir", type=click.Path(file_okay=False))
@run_options
def toy_world(config, run_dir, out_dir):
    path = execute(config, "toy-world", pipeline.toy_world, run_dir, out_dir=out_dir)
    click.echo(path)


@cli.command("embed-corpus", help="Embed the corpus sentences into a table")
@run_options
def embed_corpus(config, run_dir):
    execute(config, "embed-corpus", pipeline.embed_corpus, run_dir)


@cli.command("aggregate", help="Precompute aggregate embeddings of the images")
@click.option("--corpus-table", type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", type=float, default=None, help="Softmax temperature")
@run_options
def aggregate(config, run_dir, corpus_table, tau):
    execute(
        config,
        "aggregate",
        pipeline.aggregate,
        run_dir,
        table_path=corpus_table,
        temperature=tau,
    )


@cli.command("init-train", help="Supervised initialization of the generator")
@run_options
def init_train(config, run_dir):
    execute(config, "init-train", pipeline.init_train, run_dir)


@cli.command("train", help="Adversarial training with semantic rewards")
@click.option("--resume", is_flag=True, default=False)
@run_options
def train(config, run_dir, resume):
    execute(config, "train", pipeline.train, run_dir, resume=resume)


@cli.command("infer", help="Greedy captions for the evaluation images")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
@run_options
def infer(config, run_dir, checkpoint, out):
    execute(
        config, "infer", pipeline.infer, run_dir, checkpoint=checkpoint, out_path=out
    )


@cli.command("eval", help="Score candidate captions against references")
@click.option("--candidates", required=True, type=click.Path(exists=True))
@click.option("--refs", required=True, type=click.Path(exists=True))
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
@run_options
def evaluate(config, run_dir, candidates, refs, out):
    execute(
        config,
        "eval",
        pipeline.evaluate_run,
        run_dir,
        candidates_path=candidates,
        refs_path=refs,
        out_path=out,
    )


@cli.command("baseline", help="Retrieval captions or pseudo labels")
@click.option(
    "--mode", type=click.Choice(["retrieval", "pseudo"]), default="retrieval"
)
@click.option("--corpus-table", type=click.Path(exists=True, dir_okay=False))
@run_options
def baseline(config, run_dir, mode, corpus_table):
    execute(
        config,
        "baseline",
        pipeline.baseline,
        run_dir,
        mode=mode,
        table_path=corpus_table,
    )


@cli.command("explain", help="Nearest vocabulary tokens of the visual prompts")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_id", default=None)
@run_options
def explain(config, run_dir, checkpoint, image_id):
    explanation = execute(
        config,
        "explain",
        pipeline.explain,
        run_dir,
        image_id=image_id,
        checkpoint=checkpoint,
    )
    click.echo(" ".join(explanation.tokens))


@cli.command("sweep", help="Run every point of a sweep grid")
@click.argument("name")
@click.option("-c", "--config", "config_file", default=None)
@click.option("-s", "--set", "overrides", multiple=True)
def sweep(name, config_file, overrides):
    sweep = Sweep.load(name)
    base = RunConfig.load(config_file or sweep.base, overrides)
    rows = sweep.run(base)
    click.echo(sweep.path.joinpath("sweep.csv"))
    if any(r["status"] == "failed" for r in rows):
        raise CaptionError("Some sweep points failed", sweep=sweep.name)


@cli.command("runs", help="List the run ledger")
@click.option("--sweep", default=None)
@click.option("--issues", is_flag=True, default=False, help="Count issues by level")
@click.option("-o", "--outfile", type=click.File("w"), default="-")
def runs(sweep, issues, outfile):
    for run in Run.query(sweep=sweep):
        data = run.to_dict()
        if issues:
            data["issues"] = Issue.agg_by_level(run=run.name, stage=run.kind)
        write_object(outfile, data)


@cli.command("issues", help="List the warnings and errors logged by runs")
@click.option("--run", "run_name", default=None)
@click.option("--stage", default=None)
@click.option("-o", "--outfile", type=click.File("w"), default="-")
def issues(run_name, stage, outfile):
    for issue in Issue.query(run=run_name, stage=stage):
        write_object(outfile, issue)


def dispatch(argv=None):
    """Run the command line and map failures to exit codes: 2 for usage
    errors, 1 for everything else. Errors are printed to stderr as JSON."""
    try:
        code = cli.main(args=argv, prog_name="captiongan", standalone_mode=False)
    except click.UsageError as exc:
        error = {"error": "usage", "message": exc.format_message()}
        click.echo(json.dumps(error), err=True)
        return 2
    except click.ClickException as exc:
        error = {"error": "usage", "message": exc.format_message()}
        click.echo(json.dumps(error), err=True)
        return exc.exit_code
    except click.Abort:
        return 1
    except CaptionError as exc:
        click.echo(json.dumps(exc.to_dict(), default=str), err=True)
        return 1
    return code if isinstance(code, int) else 0


def main():
    sys.exit(dispatch(sys.argv[1:]))
