from pathlib import Path

PATH = Path(__file__).parents[0]


class Table2(object):
    """
    Indoor factory link of the reference simulation table, IID Rayleigh fading on both links.
    """
    name: str = 'table2'
    file_name: Path = PATH / 'table2.toml'
    channel_model: str = 'iid_rayleigh'


class LowAngularSpread(object):
    """
    Same deployment with the geometric wideband channel and narrow cluster spreads (ASD 7, ASA 12, ZSD 25, ZSA 30).
    """
    name: str = 'low-as'
    file_name: Path = PATH / 'low_as.toml'
    channel_model: str = 'geometric'


class HighAngularSpread(object):
    """
    Geometric wideband channel with wide cluster spreads (ASD 30, ASA 50, ZSD 130, ZSA 150).
    """
    name: str = 'high-as'
    file_name: Path = PATH / 'high_as.toml'
    channel_model: str = 'geometric'


PRESETS: dict[str, type] = {preset.name: preset for preset in (Table2, LowAngularSpread, HighAngularSpread)}


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ValueError('Preset "{}" not available, use one of {}'.format(name, list(PRESETS)))
    return PRESETS[name].file_name
