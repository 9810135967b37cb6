import pytest
from hypothesis import given, settings, strategies as st

from rdstab.config import DEFAULT_TEXT, ConfigError, dump, load, parse

BASE = """\
[system]
K = 10
d_list = 1:3
lambda_list = 0.02:0.1:0.02

[service]
kind = iid_finite
pmf = 10:0.9, 100:0.1
"""


def test_parse_ranges():
    cfg = parse(BASE)
    assert cfg.ds == [1, 2, 3]
    assert cfg.lambdas == [0.02, 0.04, 0.06, 0.08, 0.1]
    assert cfg.service_spec().values == (10, 100)


def test_round_trip_idempotent():
    for text in (BASE, DEFAULT_TEXT):
        once = dump(parse(text))
        assert dump(parse(once)) == once


def test_joint_and_profile_round_trip():
    joint = "[system]\nK = 3\nd = 2\n[service]\nkind = joint_finite\npmf = 1 1 9:0.5, 2 2 2:0.5\n"
    prof = "[system]\nK = 30\nd_list = 1:30\n[service]\nkind = moment_profile\nprofile_scale = 60\nprofile_exponent = 1.1\n"
    for text in (joint, prof):
        once = dump(parse(text))
        assert dump(parse(once)) == once
    assert parse(prof).service_spec().profile[0] == 60.0


@pytest.mark.parametrize("text", [
    BASE + "bogus = 1\n",
    BASE + "[extra]\nx = 1\n",
    BASE.replace("d_list = 1:3", "d_list = 0:3"),
    BASE.replace("0.02:0.1:0.02", "0.5, 1.2"),
    BASE.replace("10:0.9, 100:0.1", "10:0.9, 100:0.2"),
    BASE.replace("kind = iid_finite", "kind = gamma"),
    BASE.replace("K = 10", "K = ten"),
    "[service]\nkind = iid_finite\npmf = 1:1\n",
    BASE + "[simulation]\nslots = 10\nburn_in = 10\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_env_default(tmp_path, monkeypatch):
    p = tmp_path / "c.ini"
    p.write_text(BASE)
    monkeypatch.setenv("RDSTAB_CONFIG", str(p))
    assert load().K == 10
    monkeypatch.delenv("RDSTAB_CONFIG")
    assert load().K == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.lists(st.floats(0.001, 0.999), min_size=1, max_size=5),
       st.integers(0, 2**63), st.integers(10, 10**7))
def test_round_trip_property(K, lambdas, seed, slots):
    text = (f"[system]\nK = {K}\nd_list = 1:{K}\nlambda_list = {', '.join(map(repr, lambdas))}\n"
            f"[service]\nkind = identical_replicas\npmf = 3:0.25, 7:0.75\n"
            f"[simulation]\nseed = {seed}\nslots = {slots}\n")
    cfg = parse(text)
    again = parse(dump(cfg))
    assert again == cfg
