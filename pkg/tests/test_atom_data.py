import pytest

from radialks.atom_data import (
    Z_MAX,
    AtomConfig,
    Shell,
    configuration,
    hydrogenic_config,
    orbitals_per_l,
    parse_configurations,
    symbol_to_z,
)


def test_every_atom_is_neutral_and_valid():
    for z in range(1, Z_MAX + 1):
        cfg = configuration(z)
        assert cfg.Z == z
        assert cfg.n_electrons == pytest.approx(z)


@pytest.mark.parametrize(
    "z,symbol,shells",
    [
        (1, "H", {"1s": 1}),
        (24, "Cr", {"3d": 5, "4s": 1}),
        (26, "Fe", {"3d": 6, "4s": 2}),
        (29, "Cu", {"3d": 10, "4s": 1}),
        (92, "U", {"5f": 3, "6d": 1, "7s": 2}),
    ],
)
def test_known_configurations(z, symbol, shells):
    cfg = configuration(z)
    assert cfg.symbol == symbol
    got = {s.label: s.occupation for s in cfg.shells}
    for label, f in shells.items():
        assert got[label] == f


def test_uranium_has_eighteen_shells_over_four_channels():
    cfg = configuration(92)
    assert len(cfg.shells) == 18
    assert orbitals_per_l(cfg) == {0: 7, 1: 5, 2: 4, 3: 2}


@pytest.mark.parametrize("z", [0, 93, 2.5, -1])
def test_configuration_rejects_bad_z(z):
    with pytest.raises(ValueError):
        configuration(z)


def test_invalid_shells_rejected():
    with pytest.raises(ValueError):
        AtomConfig(1, "H", (Shell(1, 1, 1.0),))
    with pytest.raises(ValueError):
        AtomConfig(2, "He", (Shell(1, 0, 3.0),))
    with pytest.raises(ValueError):
        AtomConfig(2, "He", (Shell(1, 0, 1.0),))


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ValueError, match="line 2"):
        parse_configurations(["1,H,1:0:1", "2,He,1:0:x"])


def test_symbol_lookup():
    assert symbol_to_z("fe") == 26
    with pytest.raises(ValueError):
        symbol_to_z("Xx")


def test_hydrogenic_config_lists_shells_up_to_limits():
    cfg = hydrogenic_config(26, 4, 2)
    labels = [(s.n, s.l) for s in cfg.shells]
    assert labels == [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2), (4, 0), (4, 1), (4, 2)]
    assert cfg.n_electrons == 9 and not cfg.neutral
    assert orbitals_per_l(cfg) == {0: 4, 1: 3, 2: 2}
