import numpy as np
import pytest

from phonosynth.core import GeneralizedToken, TokenSequence, VisemeTable
from phonosynth.datagen import SynthSpec, gen_repository, gen_target, style_variant
from phonosynth.search import CostConfig, build_index

WORKSPACE_SPEC = SynthSpec(seed=7, duration_s=20.0, duration_jitter=0.3, gesture_every_s=3.0)
STYLE_GAINS = {"neutral": 1.0, "animated": 1.5, "energetic": 1.6, "mumble": 0.5}

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def build_workspace(root, table, with_model=True, styles=("neutral",)):
    """Populate a directory with generated bundles, a target clip, and an
    untrained (identity) model, then open it as a Workspace."""
    from phonosynth.pipeline import Workspace
    from phonosynth.repo_io import save_bundle, save_target
    from phonosynth.retarget import RetargetModel, save_model

    (root / "bundles").mkdir(parents=True)
    for style in styles:
        repo = gen_repository(style_variant(WORKSPACE_SPEC, style, STYLE_GAINS[style]))
        save_bundle(repo, root / "bundles" / f"{style}.json")
    target = gen_target(WORKSPACE_SPEC, repo, coverage=1.0, table=table)
    save_target(target, root / "target.json")
    if with_model:
        model = RetargetModel.create(dim=64, hidden=16, window=5, seed=0)
        save_model(model, root / "model.rtm")
    return Workspace(root, table=table)


def ph(name, start, end):
    return GeneralizedToken.phoneme(name, start, end)


def ge(name, start, end):
    return GeneralizedToken.gesture(name, start, end)


def random_edit(rng, table, m, gesture_names=(), p_gesture=0.0, jitter=0.3):
    """Contiguous edit token sequence starting at 0, optionally mixing in
    gestures drawn from the given names."""
    nominal = 1.0 / 12.0
    toks, clock = [], 0.0
    for _ in range(m):
        if gesture_names and rng.random() < p_gesture:
            nm = gesture_names[int(rng.integers(len(gesture_names)))]
            d = float(rng.uniform(0.3, 1.4))
            toks.append(ge(nm, clock, clock + d))
        else:
            nm = str(rng.choice(np.array(table.phoneme_names)))
            d = nominal * (1.0 + jitter * float(rng.uniform(-1.0, 1.0)))
            toks.append(ph(nm, clock, clock + d))
        clock += d
    return TokenSequence(toks)


@pytest.fixture(scope="session")
def table():
    return VisemeTable.default()


@pytest.fixture(scope="session")
def small_repo(table):
    spec = SynthSpec(seed=7, duration_s=20.0, duration_jitter=0.3, gesture_every_s=3.0)
    return gen_repository(spec, table)


@pytest.fixture(scope="session")
def small_index(small_repo, table):
    return build_index(small_repo, table)


@pytest.fixture(scope="session")
def cost_cfg():
    return CostConfig()
