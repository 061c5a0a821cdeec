'''session level fixtures'''
import pytest

from common import small_config, small_scenario
from darktrack.config import RunConfig
from darktrack.pipeline import Pipeline
from darktrack.synth import ScenarioSpec, generate


@pytest.fixture(scope="session")
def small_logs(tmp_path_factory):
    '''the small synthetic scenario written once per session'''
    outdir = tmp_path_factory.mktemp('small')
    return generate(small_scenario(), str(outdir))


@pytest.fixture(scope="session")
def small_run(small_logs, tmp_path_factory):
    '''a complete pipeline run over the small scenario'''
    outdir = tmp_path_factory.mktemp('small-run')
    cfg = small_config(outdir, small_logs.logs,
                       ground_truth=small_logs.ground_truth)
    with Pipeline(cfg) as pipeline:
        pipeline.run()
    return pipeline


@pytest.fixture(scope="session")
def acceptance_run(tmp_path_factory):
    '''the 7-day acceptance scenario, generated and run through the
    pipeline once per session'''
    outdir = tmp_path_factory.mktemp('acceptance')
    scenario = generate(ScenarioSpec.acceptance(), str(outdir / 'logs'))
    # the defaults (200 dimensions, one epoch) are sized for corpora of
    # thousands of senders a day, the scenario's few hundred senders need
    # a smaller model trained for more epochs
    cfg = RunConfig().update({
        'inputs': scenario.logs, 'outdir': str(outdir / 'run'),
        'ground_truth': scenario.ground_truth, 'dimension': 16,
        'epochs': 15, 'lr_start': 0.05}).validate()
    with Pipeline(cfg) as pipeline:
        pipeline.run()
    return scenario, pipeline
