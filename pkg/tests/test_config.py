import pytest

from lifereg.config import KEYS, ConfigError, dump_config, parse_config
from lifereg.pipeline import PipelineConfig


def test_defaults_from_empty_text():
    cfg = parse_config("# nothing\n\n")
    assert cfg.seed == 0
    assert cfg.pipeline == PipelineConfig()


def test_example_values():
    cfg = parse_config(
        "global.seed = 7\n"
        "demons.sigma = 12   # smoothing\n"
        "life.gain = 0.05\n"
        "denoise.method = gaussian\n"
        "pipeline.similarity_guard = off\n"
        "geom.apex_x = 100\n"
    )
    pc = cfg.pipeline
    assert cfg.seed == 7
    assert pc.demons.sigma == 12.0
    assert pc.life.enhancement_gain == 0.05
    assert pc.denoise_method == "gaussian"
    assert pc.similarity_guard is False
    assert cfg.geometry(200, 200).apex_x == 100.0


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("demons.sigmaa = 2", "line 1: unknown key 'demons.sigmaa'"),
        ("\njust words", "line 2: expected 'section.key = value'"),
        ("demons.max_iter = ten", "bad value for 'demons.max_iter'"),
        ("mi.bins = 8\nmi.bins = 16", "line 2: key 'mi.bins' already set on line 1"),
        ("demons.sigma = -1", "line 1: 'demons.sigma' out of range"),
        ("pipeline.pre_denoised = maybe", "bad value"),
    ],
)
def test_errors_name_line_and_key(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert fragment in str(info.value)


def test_dump_round_trip():
    cfg = parse_config("global.seed = 3\ndemons.mi_gain = 900\nmi.window_n = 7\ngeom.half_angle = 0.6\n")
    again = parse_config(dump_config(cfg))
    assert again.seed == 3
    assert again.pipeline == cfg.pipeline
    assert again.geom_overrides == cfg.geom_overrides


def test_phantom_keys_build_spec():
    cfg = parse_config(
        "global.seed = 4\nphantom.width = 64\nphantom.height = 48\nphantom.depth = 3\n"
        "phantom.deform = sinusoidal\nphantom.amplitude = 2\nphantom.wavelength = 32\n"
    )
    spec = cfg.phantom_spec()
    assert spec.seed == 4 and spec.deform.kind == "sinusoidal"
    assert spec.size == (64, 48) and spec.depth == 3


def test_every_key_is_parseable_text():
    assert len(KEYS) == len(set(KEYS))
    assert all(k.count(".") == 1 for k in KEYS)
