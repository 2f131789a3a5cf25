import pytest

from loci import config as C
from loci.errors import ConfigError


def test_defaults_round_trip():
    cfg = C.Config()
    again = C.parse(C.serialize(cfg))
    assert C.as_dict(again) == C.as_dict(cfg)


def test_parse_dotted_keys_and_comments():
    cfg = C.parse("""
    # comment line
    seed = 7
    train.updates = 12   # trailing comment
    train.lr = 2e-4
    model.mode = unlooped
    blackout.policy = fixed_p
    """)
    assert cfg.seed == 7 and cfg.train.updates == 12 and cfg.train.lr == 2e-4
    assert cfg.model.mode == "unlooped" and cfg.blackout.policy == "fixed_p"


@pytest.mark.parametrize("text, fragment", [
    ("train.nope = 1", "train.nope: unknown key"),
    ("train = 1", "train: unknown key"),
    ("train.updates = many", "train.updates: expected int"),
    ("model.mode = sideways", "model.mode"),
    ("train.lr = 0", "train.lr"),
    ("blackout.p = 1.5", "blackout.p"),
    ("blackout.policy = sometimes", "blackout.policy"),
    ("model.height = 30", "model.height"),
    ("model.heads = 7", "model.transition_dim"),
    ("just words", "line 1"),
])
def test_invalid_values_name_the_key(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        C.parse(text)


def test_set_value_coerces():
    cfg = C.Config()
    C.set_value(cfg, "train.batch_size", " 8 ")
    C.set_value(cfg, "loss.gate_l0", "1e-5")
    assert cfg.train.batch_size == 8 and cfg.loss.gate_l0 == 1e-5
    assert cfg.weights().gate_l0 == 1e-5


def test_arch_follows_model_section():
    cfg = C.parse("model.height = 16\nmodel.width = 24\nmodel.num_slots = 4")
    a = cfg.arch()
    assert (a.height, a.width, a.num_slots) == (16, 24, 4)
